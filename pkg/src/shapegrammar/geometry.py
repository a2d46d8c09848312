"""Triangles, triangulated polygons and similarity-invariant triangle scores.

Vertex labeling convention (shared by the prior sampler and the DP):

* every labeled triangle ``(x0, x1, x2)`` is counter-clockwise;
* type 0 (end): solid edges ``x0-x1`` and ``x1-x2``, dashed ``x2-x0``;
* type 1 (neck): solid edge ``x0-x1``, dashed ``x1-x2`` and ``x2-x0``;
* type 2 (junction): all three edges dashed.

A child grown on the oriented edge ``(a, b)`` with new vertex ``c`` (strictly
left of ``a -> b``) is labeled ``(b, c, a)`` for types 0 and 2 and for the
first type-1 rule, and ``(c, a, b)`` for the second type-1 rule. The child's
own growth edges are ``(a, c)`` and/or ``(c, b)``; a root ``(a, b, c)`` grows
on ``(a, c)``, ``(c, b)`` and ``(b, a)`` as its type requires.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

Point = tuple[float, float]


class GeometryError(ValueError):
    pass


def signed_area(x0: Sequence[float], x1: Sequence[float], x2: Sequence[float]) -> float:
    return 0.5 * ((x1[0] - x0[0]) * (x2[1] - x0[1]) - (x1[1] - x0[1]) * (x2[0] - x0[0]))


def cross(u: Sequence[float], v: Sequence[float]) -> float:
    return u[0] * v[1] - u[1] * v[0]


def is_valid_placement(a: Sequence[float], b: Sequence[float], c: Sequence[float]) -> bool:
    """True iff ``c`` lies strictly left of the directed line ``a -> b``."""
    return cross((b[0] - a[0], b[1] - a[1]), (c[0] - a[0], c[1] - a[1])) > 0


def _edge_matrix(x: np.ndarray) -> np.ndarray:
    # columns are x1 - x0 and x2 - x0; works on (..., 3, 2) stacks
    return np.stack([x[..., 1, :] - x[..., 0, :], x[..., 2, :] - x[..., 0, :]], axis=-1)


def anisotropy_from_linear(m: np.ndarray) -> np.ndarray:
    """log(s1/s2) for a stack of 2x2 matrices ``m`` (shape ``(..., 2, 2)``).

    Uses s1 + s2 and s1 - s2 as hypotenuses of entry combinations so that
    near-conformal maps give results accurate to rounding, not to its square root.
    """
    a, b = m[..., 0, 0], m[..., 0, 1]
    c, d = m[..., 1, 0], m[..., 1, 1]
    h_plus = np.hypot(a + d, b - c)
    h_minus = np.hypot(a - d, b + c)
    p = np.maximum(h_plus, h_minus)
    q = np.minimum(h_plus, h_minus)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(p > 0, q / p, 1.0)
        out = 2.0 * np.arctanh(np.minimum(ratio, 1.0))
    return out


def log_anisotropy(x_ref, x) -> float:
    """Log-anisotropy of the affine map sending triangle ``x_ref`` onto ``x``.

    Both arguments are 3x2 vertex arrays. Vertices correspond in order. The
    value is zero iff the triangles are similar (reflections included).
    """
    x_ref = np.asarray(x_ref, dtype=float)
    x = np.asarray(x, dtype=float)
    if signed_area(*x_ref) == 0 or signed_area(*x) == 0:
        raise GeometryError("degenerate triangle")
    lin = _edge_matrix(x) @ np.linalg.inv(_edge_matrix(x_ref))
    return float(anisotropy_from_linear(lin))


def log_shape_scores(x_ref, x, k: float) -> np.ndarray:
    """Vectorized ``-k * df(x_ref, x)**2`` over a stack ``x`` of shape (..., 3, 2).

    Degenerate triangles get ``-inf``.
    """
    x_ref = np.asarray(x_ref, dtype=float)
    x = np.asarray(x, dtype=float)
    ref_inv = np.linalg.inv(_edge_matrix(x_ref))
    em = _edge_matrix(x)
    det = em[..., 0, 0] * em[..., 1, 1] - em[..., 0, 1] * em[..., 1, 0]
    df = anisotropy_from_linear(em @ ref_inv)
    with np.errstate(invalid="ignore"):
        out = np.where(det == 0, -np.inf, -k * df * df)
    if k == 0:
        out = np.where(det == 0, -np.inf, 0.0)
    return out


def shape_score(ttype: int, x0, x1, x2, params) -> float:
    """Unnormalized shape weight exp(-k_i df(X_i, X)^2); 0 for collinear input."""
    x = np.array([x0, x1, x2], dtype=float)
    if signed_area(*x) == 0:
        return 0.0
    df = log_anisotropy(params.ideal_triangles[ttype], x)
    return math.exp(-params.k[ttype] * df * df)


def log_shape_score(ttype: int, x0, x1, x2, params) -> float:
    x = np.array([x0, x1, x2], dtype=float)
    if signed_area(*x) == 0:
        return -math.inf
    df = log_anisotropy(params.ideal_triangles[ttype], x)
    return -params.k[ttype] * df * df


@dataclass(frozen=True)
class Triangle:
    ttype: int
    x0: Point
    x1: Point
    x2: Point

    def __post_init__(self):
        if self.ttype not in (0, 1, 2):
            raise GeometryError(f"bad triangle type {self.ttype}")
        if signed_area(self.x0, self.x1, self.x2) == 0:
            raise GeometryError("degenerate triangle")

    @property
    def vertices(self) -> tuple[Point, Point, Point]:
        return (self.x0, self.x1, self.x2)


def boundary_edges(t: Triangle) -> list[tuple[Point, Point]]:
    """Solid (polygon boundary) edges of ``t``, directed counter-clockwise."""
    if t.ttype == 0:
        return [(t.x0, t.x1), (t.x1, t.x2)]
    if t.ttype == 1:
        return [(t.x0, t.x1)]
    return []


def growth_edges(t: Triangle, is_root: bool, glue: int = 0) -> list[tuple[Point, Point]]:
    """Oriented dashed edges of ``t`` that grow children, in slot order.

    For a non-root triangle the edge it was grown from is excluded. ``glue``
    selects the type-1 rule (0: labeled ``(b, c, a)``, 1: labeled ``(c, a, b)``).
    """
    x0, x1, x2 = t.vertices
    if is_root:
        # root labeled (a, b, c)
        return [(x0, x2), (x2, x1), (x1, x0)][: t.ttype + 1]
    if t.ttype == 0:
        return []
    if t.ttype == 2:
        # labeled (b, c, a): grows (a, c) then (c, b)
        return [(x2, x1), (x1, x0)]
    if glue == 0:
        return [(x2, x1)]  # (b, c, a) -> (a, c)
    return [(x0, x2)]  # (c, a, b) -> (c, b)


def parent_edge(t: Triangle, glue: int = 0) -> tuple[Point, Point]:
    """The oriented edge ``(a, b)`` a non-root triangle was grown from."""
    x0, x1, x2 = t.vertices
    if t.ttype == 1 and glue == 1:
        return (x1, x2)
    return (x2, x0)


def child_triangle(ttype: int, glue: int, a: Point, b: Point, c: Point) -> Triangle:
    if ttype == 1 and glue == 1:
        return Triangle(1, c, a, b)
    return Triangle(ttype, b, c, a)


@dataclass
class TriangulatedPolygon:
    """A rooted tree of typed triangles.

    ``triangles[0]`` is the root. ``parent[i]`` and ``slot[i]`` say which growth
    edge of which triangle produced triangle ``i`` (``-1`` for the root);
    ``glue[i]`` records the type-1 rule used (0 otherwise).
    """

    triangles: list[Triangle]
    parent: list[int]
    slot: list[int]
    glue: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.glue:
            self.glue = [0] * len(self.triangles)
        self.check()

    @property
    def n(self) -> int:
        return len(self.triangles)

    def type_counts(self) -> tuple[int, int, int]:
        counts = [0, 0, 0]
        for t in self.triangles:
            counts[t.ttype] += 1
        return tuple(counts)

    def children(self) -> list[list[int]]:
        kids: list[list[int]] = [[] for _ in self.triangles]
        for i, p in enumerate(self.parent):
            if p >= 0:
                kids[p].append(i)
        for k in kids:
            k.sort(key=lambda i: self.slot[i])
        return kids

    def growth_edges_of(self, i: int) -> list[tuple[Point, Point]]:
        return growth_edges(self.triangles[i], i == 0, self.glue[i])

    def depth(self) -> int:
        depths = [0] * self.n
        for i in range(1, self.n):
            depths[i] = depths[self.parent[i]] + 1
        return max(depths)

    def check(self) -> None:
        if self.n < 2:
            raise GeometryError("a triangulated polygon has at least two triangles")
        if self.parent[0] != -1 or any(p < 0 or p >= i for i, p in enumerate(self.parent[1:], 1)):
            raise GeometryError("triangles must be listed with parents first")
        kids = self.children()
        for i, t in enumerate(self.triangles):
            edges = self.growth_edges_of(i)
            if [self.slot[k] for k in kids[i]] != list(range(len(edges))):
                raise GeometryError(f"triangle {i}: dashed edges not all grown exactly once")
            for k in kids[i]:
                child = self.triangles[k]
                if parent_edge(child, self.glue[k]) != edges[self.slot[k]]:
                    raise GeometryError(f"triangle {k} is not glued to its parent's edge")

    def solid_edges(self) -> list[tuple[Point, Point]]:
        return [e for t in self.triangles for e in boundary_edges(t)]

    def dashed_edges(self) -> list[tuple[Point, Point]]:
        return [e for i in range(self.n) for e in self.growth_edges_of(i)]

    def iter_points(self) -> Iterator[Point]:
        for t in self.triangles:
            yield from t.vertices


def polygon_boundary(poly: TriangulatedPolygon) -> list[Point]:
    """Closed boundary polyline (first point repeated at the end), counter-clockwise.

    The traversal walks the dual tree, so it stays well defined for shapes whose
    parts overlap or share vertex locations.
    """
    if poly.n < 2:
        raise GeometryError("a triangulated polygon has at least two triangles")
    kids = poly.children()
    edges: list[tuple[Point, Point]] = []

    def chain(i: int) -> None:
        # boundary of the subtree rooted at non-root triangle i, from b to a
        t = poly.triangles[i]
        sub = kids[i]
        if t.ttype == 0:
            edges.extend(boundary_edges(t))
        elif t.ttype == 2:
            chain(sub[1])
            chain(sub[0])
        elif poly.glue[i] == 0:
            edges.append((t.x0, t.x1))
            chain(sub[0])
        else:
            chain(sub[0])
            edges.append((t.x0, t.x1))

    root = poly.triangles[0]
    sub = kids[0]
    if root.ttype == 0:
        edges.extend(boundary_edges(root))
        chain(sub[0])
    elif root.ttype == 1:
        edges.append((root.x0, root.x1))
        chain(sub[1])
        chain(sub[0])
    else:
        chain(sub[2])
        chain(sub[1])
        chain(sub[0])

    if len(edges) != poly.n + 2:
        raise GeometryError("boundary edge count does not match triangle count")
    for (_, q), (p, _) in zip(edges, edges[1:] + edges[:1]):
        if p != q:
            raise GeometryError("boundary edges do not close into a single cycle")
    return [e[0] for e in edges] + [edges[0][0]]
