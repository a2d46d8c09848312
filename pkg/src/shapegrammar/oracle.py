"""Brute-force enumeration of grid-constrained, depth-bounded shapes.

Test oracle for the DP: every partial shape is materialized as an explicit
list of triangles and weighted triangle by triangle in linear space, then
summed with ``math.fsum``. Only usable on tiny instances.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .geometry import Triangle, TriangulatedPolygon, is_valid_placement, parent_edge, shape_score
from .grammar import GrammarParams
from .grid import Grid
from .likelihood import EdgeScoreTable, LikelihoodConfig, triangle_log_likelihood

MAX_GRID = 5
MAX_DEPTH = 3

# a partial shape: tuple of (ttype, glue, (x0, x1, x2)) records in depth-first order,
# where a type-2 record is followed by its (a, c) subtree, then its (c, b) subtree
Record = tuple


class OracleTooLarge(ValueError):
    pass


def _label(ttype: int, glue: int, a, b, c):
    return (c, a, b) if ttype == 1 and glue == 1 else (b, c, a)


@dataclass
class Enumerator:
    grid: Grid
    params: GrammarParams
    table: EdgeScoreTable
    cfg: LikelihoodConfig
    limit: int = 5_000_000

    def __post_init__(self):
        if self.grid.width > MAX_GRID or self.grid.height > MAX_GRID:
            raise OracleTooLarge(f"oracle limited to {MAX_GRID}x{MAX_GRID} grids")
        lay = self.table.layout
        self.l_min, self.l_max = lay.l_min, lay.l_max
        self.points = self.grid.points()
        self._partials: dict = {}
        self._weights: dict = {}
        self._norms: dict = {}
        r = int(math.floor(self.l_max))
        self._box = [(dx, dy) for dx in range(-r, r + 1) for dy in range(-r, r + 1)]

    def in_band(self, p, q) -> bool:
        d2 = (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2
        return d2 > 0 and self.l_min ** 2 - 1e-9 <= d2 <= self.l_max ** 2 + 1e-9

    def lattice_candidates(self, a, b) -> list:
        """Free-vertex candidates on the unbounded lattice (grid boundary ignored)."""
        out = []
        for dx, dy in self._box:
            c = (a[0] + dx, a[1] + dy)
            if is_valid_placement(a, b, c) and self.in_band(a, c) and self.in_band(c, b):
                out.append(c)
        return out

    def vertex_normalizer(self, ttype: int, glue: int, a, b) -> float:
        """Sum of shape scores over every lattice placement of the new vertex."""
        key = (ttype, glue, b[0] - a[0], b[1] - a[1])
        z = self._norms.get(key)
        if z is None:
            z = math.fsum(shape_score(ttype, *_label(ttype, glue, a, b, c), self.params)
                          for c in self.lattice_candidates(a, b))
            self._norms[key] = z
        return z

    def root_normalizer(self, ttype: int) -> float:
        """Sum of shape scores over every lattice root triangle with a at the origin."""
        key = ("root", ttype)
        z = self._norms.get(key)
        if z is None:
            o = (0, 0)
            z = math.fsum(shape_score(ttype, o, b, c, self.params)
                          for b in self._box if self.in_band(o, b)
                          for c in self.lattice_candidates(o, b) if self.in_band(c, o))
            self._norms[key] = z
        return z

    def admissible(self, p, q) -> bool:
        return self.grid.contains(p) and self.grid.contains(q) and self.in_band(p, q)

    def candidates(self, a, b) -> list:
        return [c for c in self.points
                if is_valid_placement(a, b, c) and self.admissible(a, c) and self.admissible(c, b)]

    def iter_partial_shapes(self, a, b, j: int):
        """Yield every partial shape of depth <= j grown from edge (a, b)."""
        if j < 1:
            return
        for c in self.candidates(a, b):
            yield ((0, 0, (b, c, a)),)
            left = self.partial_shapes(a, c, j - 1)
            right = self.partial_shapes(c, b, j - 1)
            for sub in left:
                yield ((1, 0, (b, c, a)),) + sub
            for sub in right:
                yield ((1, 1, (c, a, b)),) + sub
            for s1, s2 in itertools.product(left, right):
                yield ((2, 0, (b, c, a)),) + s1 + s2

    def partial_shapes(self, a, b, j: int) -> list:
        """Memoized list form of :meth:`iter_partial_shapes`."""
        key = (a, b, j)
        if key not in self._partials:
            out = []
            for s in self.iter_partial_shapes(a, b, j):
                out.append(s)
                if len(out) > self.limit:
                    raise OracleTooLarge(f"more than {self.limit} partial shapes from {a}->{b}")
            self._partials[key] = out
        return self._partials[key]

    def triangle_weight(self, ttype: int, glue: int, is_root: bool, verts) -> float:
        """Rule probability * vertex probability * likelihood factor, in linear space."""
        key = (ttype, glue, is_root, verts)
        w = self._weights.get(key)
        if w is None:
            s = shape_score(ttype, *verts, self.params)
            if is_root:
                p = self.params.t[ttype]
                z = self.root_normalizer(ttype)
            else:
                p = self.params.t[ttype] / (2.0 if ttype == 1 else 1.0)
                a, b = parent_edge(Triangle(ttype, *verts), glue)
                z = self.vertex_normalizer(ttype, glue, a, b)
            pi = math.exp(triangle_log_likelihood(ttype, *verts, self.table, self.cfg))
            w = p * (s / z) * pi
            self._weights[key] = w
        return w

    def partial_weight(self, shape) -> float:
        return math.prod(self.triangle_weight(t, g, False, v) for t, g, v in shape)

    def backward_weight(self, a, b, j: int) -> float:
        """V_j(a, b) as a literal sum over enumerated partial shapes."""
        return math.fsum(self.partial_weight(s) for s in self.iter_partial_shapes(a, b, j))

    def roots(self) -> list[tuple[int, tuple]]:
        out = []
        for a, b, c in itertools.permutations(self.points, 3):
            if is_valid_placement(a, b, c) and self.admissible(a, b) and self.admissible(b, c) \
                    and self.admissible(c, a):
                for i in range(3):
                    if self.params.t[i] > 0:
                        out.append((i, (a, b, c)))
        return out

    def root_edges(self, ttype: int, verts):
        a, b, c = verts
        return [(a, c), (c, b), (b, a)][: ttype + 1]

    def root_weight_factored(self, ttype: int, verts, d: int) -> float:
        """Root mass as root factor times the product of per-edge subtree sums."""
        w = self.triangle_weight(ttype, 0, True, verts)
        for a, b in self.root_edges(ttype, verts):
            w *= self.backward_weight(a, b, d)
        return w

    def full_shapes(self, ttype: int, verts, d: int):
        """Yield ``(records, weight)`` for every complete shape rooted at (ttype, verts)."""
        root_w = self.triangle_weight(ttype, 0, True, verts)
        subs = [self.partial_shapes(a, b, d) for a, b in self.root_edges(ttype, verts)]
        for combo in itertools.product(*subs):
            w = root_w
            for s in combo:
                w *= self.partial_weight(s)
            yield combo, w

    def root_weight_enumerated(self, ttype: int, verts, d: int) -> float:
        return math.fsum(w for _, w in self.full_shapes(ttype, verts, d))


def shape_key(poly: TriangulatedPolygon) -> tuple:
    """Canonical hashable identity of a rooted, placed shape."""
    kids = poly.children()
    out = []

    def visit(i):
        t = poly.triangles[i]
        out.append((t.ttype, poly.glue[i] if i else 0, t.vertices))
        for k in kids[i]:
            visit(k)

    visit(0)
    return tuple(out)


def records_key(ttype: int, verts, combo) -> tuple:
    """Key for an enumerated shape, matching :func:`shape_key` ordering."""
    out = [(ttype, 0, verts)]
    for sub in combo:
        out.extend(sub)
    return tuple(out)


def enumerate_posterior(grid: Grid, params: GrammarParams, table: EdgeScoreTable,
                        cfg: LikelihoodConfig, d: int, max_shapes: int = 2_000_000):
    """Exact normalized posterior over every rooted shape of depth <= d.

    Returns ``(probabilities, enumerator)`` where ``probabilities`` maps
    :func:`records_key` keys to probabilities.
    """
    if d > MAX_DEPTH:
        raise OracleTooLarge(f"oracle limited to depth {MAX_DEPTH}")
    en = Enumerator(grid, params, table, cfg)
    weights = {}
    for ttype, verts in en.roots():
        for combo, w in en.full_shapes(ttype, verts, d):
            if w > 0:
                weights[records_key(ttype, verts, combo)] = w
            if len(weights) > max_shapes:
                raise OracleTooLarge(f"more than {max_shapes} shapes")
    total = math.fsum(weights.values())
    if not total > 0:
        raise ValueError("zero posterior mass")
    return {k: w / total for k, w in weights.items()}, en


class GridPriorSampler:
    """Forward sampler of the grid- and depth-constrained prior by rejection.

    Shapes are grown on the unbounded lattice directly from the grammar: the
    root anchor is uniform over grid points, the root type is drawn from t, and
    every new vertex is drawn from the lattice-normalized shape scores. A shape
    is rejected if any vertex leaves the grid or its depth exceeds d. Shares no
    code with the DP.
    """

    def __init__(self, grid: Grid, params: GrammarParams, l_min: float, l_max: float, d: int):
        self.grid, self.params, self.d = grid, params, d
        self.l_min, self.l_max = l_min, l_max
        r = int(math.floor(l_max))
        self._box = [(dx, dy) for dx in range(-r, r + 1) for dy in range(-r, r + 1)
                     if self._band(dx, dy)]
        self._cache: dict = {}
        self.attempts = 0

    def _band(self, dx, dy) -> bool:
        d2 = dx * dx + dy * dy
        return d2 > 0 and self.l_min ** 2 - 1e-9 <= d2 <= self.l_max ** 2 + 1e-9

    def _child_table(self, u):
        hit = self._cache.get(u)
        if hit is None:
            cs = [c for c in self._box
                  if u[0] * c[1] - u[1] * c[0] > 0 and self._band(c[0] - u[0], c[1] - u[1])]
            o = (0, 0)
            rows = []
            for ttype, glue in ((0, 0), (1, 0), (1, 1), (2, 0)):
                w = [shape_score(ttype, *_label(ttype, glue, o, u, c), self.params) for c in cs]
                rows.append(np.cumsum(w) / math.fsum(w))
            hit = (cs, rows)
            self._cache[u] = hit
        return hit

    def _root_table(self, ttype):
        key = ("root", ttype)
        hit = self._cache.get(key)
        if hit is None:
            pairs = [(b, c) for b in self._box for c in self._child_table(b)[0]]
            w = [shape_score(ttype, (0, 0), b, c, self.params) for b, c in pairs]
            hit = (pairs, np.cumsum(w) / math.fsum(w))
            self._cache[key] = hit
        return hit

    @staticmethod
    def _pick(cum, rng) -> int:
        return min(int(np.searchsorted(cum, rng.random(), side="right")), len(cum) - 1)

    def _try(self, rng):
        g = self.grid
        t = self.params.t
        a = (int(rng.integers(g.width)), int(rng.integers(g.height)))
        rt = self._pick(np.cumsum(t), rng)
        pairs, cum = self._root_table(rt)
        b, c = pairs[self._pick(cum, rng)]
        b, c = (a[0] + b[0], a[1] + b[1]), (a[0] + c[0], a[1] + c[1])
        if not (g.contains(b) and g.contains(c)):
            return None
        counts = [0, 0, 0]
        counts[rt] += 1
        stack = [(e, 1) for e in [(a, c), (c, b), (b, a)][: rt + 1]]
        rule_cum = np.cumsum([t[0], t[1] / 2, t[1] / 2, t[2]])
        while stack:
            (p, q), depth = stack.pop()
            if depth > self.d:
                return None
            rule = self._pick(rule_cum, rng)
            cs, rows = self._child_table((q[0] - p[0], q[1] - p[1]))
            off = cs[self._pick(rows[rule], rng)]
            v = (p[0] + off[0], p[1] + off[1])
            if not g.contains(v):
                return None
            ttype = (0, 1, 1, 2)[rule]
            counts[ttype] += 1
            if rule == 1:
                stack.append(((p, v), depth + 1))
            elif rule == 2:
                stack.append(((v, q), depth + 1))
            elif rule == 3:
                stack.extend([((p, v), depth + 1), ((v, q), depth + 1)])
        return counts

    def sample_counts(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """(n, 3) triangle-type counts of accepted shapes."""
        out = []
        while len(out) < n:
            self.attempts += 1
            r = self._try(rng)
            if r is not None:
                out.append(r)
        return np.array(out)
