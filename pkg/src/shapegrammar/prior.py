"""Random shapes from the grammar prior.

Random streams: a run seed feeds ``numpy.random.SeedSequence(seed)``; sample
``i`` of a batch uses ``default_rng(SeedSequence(seed).spawn(n)[i])``, so any
sample can be regenerated on its own and batches can be split across workers.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .geometry import Triangle, TriangulatedPolygon, child_triangle, log_shape_scores
from .grammar import GrammarParams, validate_params


@dataclass
class DualTreeNode:
    ttype: int
    children: list["DualTreeNode"] = field(default_factory=list)
    glue: int = 0  # which type-1 rule; 0 for other types
    depth: int = 0

    def walk(self):
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def counts(self) -> tuple[int, int, int]:
        c = [0, 0, 0]
        for node in self.walk():
            c[node.ttype] += 1
        return tuple(c)

    def height(self) -> int:
        return max(node.depth for node in self.walk())


@dataclass(frozen=True)
class SamplerConfig:
    d_max: int = 200
    candidate_radius_steps: int = 24
    candidate_angle_steps: int = 36
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("d_max", "candidate_radius_steps", "candidate_angle_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def sample_structure(params: GrammarParams, cfg: SamplerConfig, rng: np.random.Generator) -> DualTreeNode:
    """Galton-Watson dual tree; the root has one extra child for its extra dashed edge."""
    validate_params(params)
    cum = np.cumsum(params.t)

    def draw(depth: int) -> DualTreeNode:
        if depth >= cfg.d_max:
            return DualTreeNode(0, depth=depth)
        ttype = int(np.searchsorted(cum, rng.random(), side="right"))
        ttype = min(ttype, 2)
        glue = int(rng.random() < 0.5) if ttype == 1 and depth > 0 else 0
        return DualTreeNode(ttype, glue=glue, depth=depth)

    root = draw(0)
    queue = deque([(root, root.ttype + 1)])
    while queue:
        node, n_kids = queue.popleft()
        for _ in range(n_kids):
            kid = draw(node.depth + 1)
            node.children.append(kid)
            queue.append((kid, kid.ttype))
    return root


def candidate_offsets(cfg: SamplerConfig) -> np.ndarray:
    """Free-vertex candidates for the unit edge (0,0)->(1,0), shape (R*A, 2).

    Polar grid about the edge midpoint: radii geometric in [0.2, 3], angles
    uniform in the open interval (0, pi), so every candidate is strictly left.
    """
    nr, na = cfg.candidate_radius_steps, cfg.candidate_angle_steps
    radii = 0.2 * (15.0 ** (np.arange(nr) / max(nr - 1, 1)))
    angles = math.pi * (np.arange(na) + 0.5) / na
    r, th = np.meshgrid(radii, angles, indexing="ij")
    return np.stack([0.5 + r * np.cos(th), r * np.sin(th)], axis=-1).reshape(-1, 2)


def _placements(a, b, cfg: SamplerConfig) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    d = np.asarray(b, dtype=float) - a
    rot = np.array([[d[0], -d[1]], [d[1], d[0]]])
    return a + candidate_offsets(cfg) @ rot.T


def vertex_log_weights(ttype: int, glue: int, a, b, params: GrammarParams, cfg: SamplerConfig,
                       root: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Candidate points and their log shape scores for the labeled new triangle."""
    cands = _placements(a, b, cfg)
    n = len(cands)
    A = np.broadcast_to(np.asarray(a, float), (n, 2))
    B = np.broadcast_to(np.asarray(b, float), (n, 2))
    if root:
        tri = np.stack([A, B, cands], axis=1)
    elif ttype == 1 and glue == 1:
        tri = np.stack([cands, A, B], axis=1)
    else:
        tri = np.stack([B, cands, A], axis=1)
    logw = log_shape_scores(params.ideal_triangles[ttype], tri, params.k[ttype])
    return cands, logw


def sample_vertex(ttype: int, edge, params: GrammarParams, cfg: SamplerConfig, rng: np.random.Generator,
                  glue: int = 0, root: bool = False) -> tuple[float, float]:
    """Draw the free vertex ``c`` for a triangle of ``ttype`` grown on ``edge``."""
    a, b = edge
    if a == b:
        raise ValueError("degenerate growth edge")
    cands, logw = vertex_log_weights(ttype, glue, a, b, params, cfg, root)
    if not np.any(np.isfinite(logw)):
        raise ValueError("no admissible candidate vertex")
    w = np.exp(logw - logw.max())
    cum = np.cumsum(w)
    idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    c = cands[min(idx, len(cands) - 1)]
    return (float(c[0]), float(c[1]))


DEFAULT_SEED_EDGE = ((0.0, 0.0), (1.0, 0.0))


def place_structure(tree: DualTreeNode, params: GrammarParams, cfg: SamplerConfig,
                    rng: np.random.Generator, seed_edge=DEFAULT_SEED_EDGE) -> TriangulatedPolygon:
    """Assign vertex locations to a dual tree breadth-first."""
    a, b = (tuple(map(float, p)) for p in seed_edge)
    c = sample_vertex(tree.ttype, (a, b), params, cfg, rng, root=True)
    root = Triangle(tree.ttype, a, b, c)
    triangles, parent, slot, glue = [root], [-1], [-1], [0]
    root_edges = [(a, c), (c, b), (b, a)]
    queue = deque((kid, 0, s, root_edges[s]) for s, kid in enumerate(tree.children))
    while queue:
        node, p, s, (ea, eb) = queue.popleft()
        c = sample_vertex(node.ttype, (ea, eb), params, cfg, rng, glue=node.glue)
        idx = len(triangles)
        triangles.append(child_triangle(node.ttype, node.glue, ea, eb, c))
        parent.append(p)
        slot.append(s)
        glue.append(node.glue)
        if node.ttype == 2:
            edges = [(ea, c), (c, eb)]
        elif node.ttype == 1:
            edges = [(ea, c)] if node.glue == 0 else [(c, eb)]
        else:
            edges = []
        for s2, kid in enumerate(node.children):
            queue.append((kid, idx, s2, edges[s2]))
    return TriangulatedPolygon(triangles, parent, slot, glue)


def sample_shape(params: GrammarParams, cfg: SamplerConfig, rng: np.random.Generator,
                 seed_edge=DEFAULT_SEED_EDGE) -> TriangulatedPolygon:
    tree = sample_structure(params, cfg, rng)
    return place_structure(tree, params, cfg, rng, seed_edge)


@dataclass(frozen=True)
class EmpiricalStats:
    mean_n: float
    se_n: float
    mean_j: float
    se_j: float
    mean_e: float
    mean_b: float
    mean_m: float  # children per non-root triangle (ratio estimator)
    se_m: float
    n_samples: int
    capped: int  # samples whose tree reached the depth cap


def empirical_stats(params: GrammarParams, cfg: SamplerConfig, n_samples: int,
                    rng: np.random.Generator) -> EmpiricalStats:
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    counts = np.empty((n_samples, 3), dtype=np.int64)
    root_kids = np.empty(n_samples, dtype=np.int64)
    capped = 0
    for i in range(n_samples):
        tree = sample_structure(params, cfg, rng)
        counts[i] = tree.counts()
        root_kids[i] = len(tree.children)
        capped += tree.height() >= cfg.d_max
    n = counts.sum(axis=1)
    j = counts[:, 2]

    def se(x):
        return float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0

    # m = E[kids] over non-root nodes: ratio of per-tree sums, delta-method se
    num, den = (n - 1 - root_kids).astype(float), (n - 1).astype(float)
    m_hat = float(num.sum() / den.sum())
    se_m = se(num - m_hat * den) / float(den.mean()) if n_samples > 1 else 0.0
    return EmpiricalStats(float(n.mean()), se(n), float(j.mean()), se(j),
                          float(counts[:, 0].mean()), float(counts[:, 1].mean()), m_hat, se_m,
                          n_samples, capped)
