"""Log prior and log posterior weight of an explicit, grid-placed shape.

Vertex placements are scored with shape scores normalized over every lattice
point the new vertex could occupy (edge lengths in [l_min, l_max]); root
shapes are normalized per type over all lattice root triangles. These are the
same conditionals the DP uses, so ``shape_log_weight`` differs from the
sampler's log probability only by the global constant log Z.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .geometry import Triangle, TriangulatedPolygon, log_shape_scores, parent_edge
from .grammar import GrammarParams
from .likelihood import EdgeScoreTable, LikelihoodConfig, shape_log_likelihood

_EPS = 1e-9


def rule_log_prob(ttype: int, is_root: bool, params: GrammarParams) -> float:
    p = params.t[ttype]
    if ttype == 1 and not is_root:
        p /= 2.0  # two equally likely gluing rules
    return math.log(p) if p > 0 else -math.inf


def _label(ttype: int, glue: int, a, b, c):
    return (c, a, b) if ttype == 1 and glue == 1 else (b, c, a)


class PlacementPrior:
    """Normalized vertex-placement log probabilities on the integer lattice."""

    def __init__(self, params: GrammarParams, l_min: float = 1.0, l_max: float = 8.0):
        if not 0 < l_min <= l_max:
            raise ValueError("need 0 < l_min <= l_max")
        self.params, self.l_min, self.l_max = params, l_min, l_max
        r = int(math.floor(l_max))
        g = np.arange(-r, r + 1)
        box = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
        self._box = box[self._in_band(box)]
        self._norm = lru_cache(maxsize=None)(self._norm_uncached)

    def _in_band(self, d: np.ndarray) -> np.ndarray:
        n2 = (d.astype(float) ** 2).sum(-1)
        return (n2 > 0) & (n2 >= self.l_min ** 2 - _EPS) & (n2 <= self.l_max ** 2 + _EPS)

    def _candidates(self, u) -> np.ndarray:
        """Offsets c (relative to a) that form a valid child on edge (0, u)."""
        c = self._box
        cross = u[0] * c[:, 1] - u[1] * c[:, 0]
        return c[(cross > 0) & self._in_band(c - np.asarray(u))]

    def _norm_uncached(self, key) -> float:
        ttype, glue, ux, uy = key
        p = self.params
        if ttype == "root":
            tri = [(np.zeros(2), np.array(b, float), np.array(c, float))
                   for b in self._box for c in self._candidates(b)]
            pts = np.array([np.stack(t) for t in tri])
            return float(_lse(log_shape_scores(p.ideal_triangles[glue], pts, p.k[glue])))
        u = np.array([ux, uy], float)
        c = self._candidates(u).astype(float)
        a = np.zeros_like(c)
        b = np.broadcast_to(u, c.shape)
        pts = np.stack(_label(ttype, glue, a, b, c), axis=1)
        return float(_lse(log_shape_scores(p.ideal_triangles[ttype], pts, p.k[ttype])))

    def _raw(self, ttype: int, verts) -> float:
        p = self.params
        pts = np.asarray(verts, float)[None]
        return float(log_shape_scores(p.ideal_triangles[ttype], pts, p.k[ttype])[0])

    def child_log_prob(self, ttype: int, glue: int, verts) -> float:
        """log of (shape score / lattice normalizer) for a non-root triangle."""
        a, b = parent_edge(Triangle(ttype, *verts), glue)
        key = (ttype, glue, int(b[0] - a[0]), int(b[1] - a[1]))
        return self._raw(ttype, verts) - self._norm(key)

    def root_log_prob(self, ttype: int, verts) -> float:
        return self._raw(ttype, verts) - self._norm(("root", ttype, 0, 0))


def _lse(x: np.ndarray) -> float:
    m = np.max(x) if x.size else -np.inf
    if not np.isfinite(m):
        return 0.0
    return m + math.log(np.exp(x - m).sum())


def shape_log_prior(poly: TriangulatedPolygon, prior: PlacementPrior) -> float:
    """Sum over triangles of rule log-probability plus placement log-probability."""
    params = prior.params
    total = 0.0
    for i, t in enumerate(poly.triangles):
        total += rule_log_prob(t.ttype, i == 0, params)
        if i == 0:
            total += prior.root_log_prob(t.ttype, t.vertices)
        else:
            total += prior.child_log_prob(t.ttype, poly.glue[i], t.vertices)
    return total


def shape_log_weight(poly: TriangulatedPolygon, prior: PlacementPrior, table: EdgeScoreTable,
                     cfg: LikelihoodConfig) -> float:
    """log p(T) + log p(I|T); the posterior log probability up to log Z."""
    return shape_log_prior(poly, prior) + shape_log_likelihood(poly, table, cfg)
