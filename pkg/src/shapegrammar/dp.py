"""Backward weights, root marginals and ancestral sampling of shapes given an image.

All weights are kept as natural logs; ``-inf`` encodes zero. Arrays follow the
padded :class:`~shapegrammar.grid.EdgeLayout`, so ``V(a, c)`` and ``V(c, b)``
for every grid point ``a`` at once are two fancy-index gathers.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .geometry import Triangle, TriangulatedPolygon, child_triangle, log_shape_scores
from .grammar import GrammarParams, validate_params
from .grid import EdgeLayout, Grid
from .likelihood import (EdgeScoreTable, GrayImage, LikelihoodConfig, precompute_edge_table,
                         smooth_gradient)

log = logging.getLogger(__name__)


class InferenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class InferenceConfig:
    depth: int = 20
    l_max: float = 8.0
    l_min: float = 1.0

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")


def logsumexp(x: np.ndarray, axis: int = 0) -> np.ndarray:
    if x.shape[axis] == 0:
        return np.full(np.delete(x.shape, axis), -np.inf)
    m = np.max(x, axis=axis)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return safe + np.log(np.sum(np.exp(x - np.expand_dims(safe, axis)), axis=axis))


def _log(p: float) -> float:
    return math.log(p) if p > 0 else -math.inf


@dataclass
class _TripleBlock:
    """Everything about one edge offset ``u`` and its free-vertex offsets ``v``."""

    iu: int
    v: np.ndarray           # (m, 2)
    iv: np.ndarray          # offset index of v          -> edge (a, c)
    iuv: np.ndarray         # offset index of u - v      -> edge (c, b)
    shift_v: np.ndarray     # flat shift from a to c
    child_logc: np.ndarray  # (4, m) log(rule prob * vertex prob): 0, 1 (b,c,a), 1 (c,a,b), 2
    root_logc: np.ndarray   # (3, m) log(t_i * root shape prob) of root (a, b, c)


def _log_normalize(logs: np.ndarray) -> np.ndarray:
    """Subtract log of the row sums (rows of all ``-inf`` stay ``-inf``)."""
    if logs.shape[-1] == 0:
        return logs
    z = logsumexp(logs, axis=-1)
    z = np.where(np.isfinite(z), z, 0.0)
    return logs - np.expand_dims(z, -1)


def _blocks(layout: EdgeLayout, params: GrammarParams) -> list[_TripleBlock]:
    """Per-offset prior log weights.

    Shape scores are turned into probabilities over the free-vertex offsets of
    each edge offset (one distribution per type/rule), and root shapes into one
    distribution per type over all (u, v) pairs. Both normalizers ignore the
    grid boundary, which therefore acts as conditioning.
    """
    t0, t1, t2 = params.t
    X, k = params.ideal_triangles, params.k
    raw = []
    for iu, vs in layout.triples:
        u = layout.offsets[iu].astype(float)
        m = len(vs)
        a = np.zeros((m, 2))
        b = np.broadcast_to(u, (m, 2))
        c = vs.astype(float)
        bca = np.stack([b, c, a], axis=1)
        cab = np.stack([c, a, b], axis=1)
        abc = np.stack([a, b, c], axis=1)
        child = np.stack([
            log_shape_scores(X[0], bca, k[0]),
            log_shape_scores(X[1], bca, k[1]),
            log_shape_scores(X[1], cab, k[1]),
            log_shape_scores(X[2], bca, k[2]),
        ]).reshape(4, m)
        root = np.stack([log_shape_scores(X[i], abc, k[i]) for i in range(3)]).reshape(3, m)
        raw.append((iu, vs, _log_normalize(child), root))

    all_root = np.concatenate([r[3] for r in raw], axis=1)
    root_z = logsumexp(all_root, axis=1)
    rule = np.array([_log(t0), _log(t1 / 2), _log(t1 / 2), _log(t2)])[:, None]
    root_t = np.array([_log(t) for t in params.t])[:, None]
    out = []
    for iu, vs, child, root in raw:
        u = layout.offsets[iu]
        iv = np.array([layout.offset_index[(int(x), int(y))] for x, y in vs], dtype=np.int64)
        iuv = np.array([layout.offset_index[(int(u[0] - x), int(u[1] - y))] for x, y in vs], dtype=np.int64)
        shift_v = np.array([layout.shift(v) for v in vs], dtype=np.int64)
        root_logc = root_t + root - np.where(np.isfinite(root_z), root_z, 0.0)[:, None]
        out.append(_TripleBlock(iu, vs, iv, iuv, shift_v, rule + child, root_logc))
    return out


@dataclass
class DPTables:
    """Backward log-weights ``log V_j(a, b)`` for ``j = 0..depth``.

    ``levels[j]`` has the padded layout shape; entries for edges leaving the
    grid, and all of level 0, are ``-inf``.
    """

    layout: EdgeLayout
    params: GrammarParams
    depth: int
    lam: float
    log_edge: np.ndarray  # lambda * edge integral, padded, -inf when absent
    levels: np.ndarray    # (depth + 1, n_offsets, Hp, Wp)
    blocks: list = field(repr=False, default_factory=list)

    @property
    def grid(self) -> Grid:
        return self.layout.grid

    def log_v(self, j: int, a, b) -> float:
        d = (int(b[0]) - int(a[0]), int(b[1]) - int(a[1]))
        o = self.layout.offset_index.get(d)
        if o is None or not (self.grid.contains(a) and self.grid.contains(b)):
            raise KeyError(f"edge {tuple(a)}->{tuple(b)} is not admissible")
        return float(self.levels[j].ravel()[self.layout.flat(o, a)])

    def edges(self):
        """All admissible ordered edges ``(a, b)`` on the grid."""
        lay = self.layout
        for o, (dx, dy) in enumerate(lay.offsets):
            ys, xs = np.nonzero(lay.valid[o])
            for x, y in zip(xs, ys):
                yield (int(x), int(y)), (int(x + dx), int(y + dy))

    def child_terms(self, block: _TripleBlock, w_level: np.ndarray, pos) -> np.ndarray:
        """(4, m, len(pos)) log weights of every (type/rule, c) grown on edge offset ``block.iu``.

        ``w_level`` is the V level consulted by the new triangle's own growth edges.
        """
        n_plane = self.layout.plane_size
        pos = np.asarray(pos)
        f_ac = (block.iv * n_plane)[:, None] + pos[None, :]
        f_cb = (block.iuv * n_plane + block.shift_v)[:, None] + pos[None, :]
        W = w_level.ravel()
        E = self.log_edge.ravel()
        v_ac, v_cb = W[f_ac], W[f_cb]
        e_ac, e_cb = E[f_ac], E[f_cb]
        c = block.child_logc[:, :, None]
        return np.stack([
            c[0] + e_cb + e_ac,
            c[1] + e_cb + v_ac,
            c[2] + e_ac + v_cb,
            c[3] + v_ac + v_cb,
        ])

    def root_terms(self, block: _TripleBlock, pos) -> np.ndarray:
        """(3, m, len(pos)) log weights of root triangles ``(a, a + u, a + v)``."""
        lay = self.layout
        n_plane = lay.plane_size
        pos = np.asarray(pos)
        u = lay.offsets[block.iu]
        ineg = lay.offset_index[(-int(u[0]), -int(u[1]))]
        V = self.levels[self.depth].ravel()
        E = self.log_edge.ravel()
        f_ac = (block.iv * n_plane)[:, None] + pos[None, :]
        f_cb = (block.iuv * n_plane + block.shift_v)[:, None] + pos[None, :]
        f_ba = ineg * n_plane + lay.shift(u) + pos
        f_ab = block.iu * n_plane + pos
        v_ac, v_cb, v_ba = V[f_ac], V[f_cb], V[f_ba][None, :]
        e_ab, e_cb = E[f_ab][None, :], E[f_cb]
        c = block.root_logc[:, :, None]
        return np.stack([
            c[0] + e_ab + e_cb + v_ac,
            c[1] + e_ab + v_ac + v_cb,
            c[2] + v_ac + v_cb + v_ba,
        ])


def compute_backward_weights(grid: Grid, params: GrammarParams, table: EdgeScoreTable,
                             cfg: LikelihoodConfig, d: int) -> DPTables:
    """Fill ``log V_j`` for ``j = 1..d`` from ``V_0 = 0`` by the four-rule recursion."""
    if d < 1:
        raise InferenceError("depth must be >= 1")
    params = params.validated()
    layout = table.layout
    if layout.grid != grid:
        raise InferenceError("edge table was built for a different grid")
    if layout.edge_count() == 0:
        raise InferenceError("no admissible edges on this grid")
    blocks = _blocks(layout, params)
    levels = np.full((d + 1,) + layout.empty(-np.inf).shape, -np.inf)
    tables = DPTables(layout, params, d, cfg.lam, table.padded(cfg.lam), levels, blocks)
    pos = layout.positions
    p = layout.pad
    h, w = grid.height, grid.width
    for j in range(1, d + 1):
        prev = levels[j - 1]
        cur = levels[j]
        for blk in blocks:
            if len(blk.v) == 0:
                continue
            terms = tables.child_terms(blk, prev, pos)
            vals = logsumexp(terms.reshape(-1, len(pos)), axis=0)
            plane = np.where(layout.valid[blk.iu], vals.reshape(h, w), -np.inf)
            cur[blk.iu, p:p + h, p:p + w] = plane
        log.debug("level %d done", j)
    return tables


@dataclass
class RootMarginal:
    """Root-triangle distribution, stored per edge offset as log totals.

    Draw order: an offset block by its total, then a (type, c, position) entry
    within it; the block arrays are recomputed on demand.
    """

    tables: DPTables
    block_log_totals: np.ndarray
    log_total: float

    def block_terms(self, k: int) -> np.ndarray:
        return _root_block(self.tables, k)

    def entries(self):
        """Yield ``(Triangle, log_weight)`` for every root with positive weight (small grids)."""
        lay = self.tables.layout
        pos_xy = [(x, y) for y in range(lay.grid.height) for x in range(lay.grid.width)]
        for k, blk in enumerate(self.tables.blocks):
            if not np.isfinite(self.block_log_totals[k]):
                continue
            terms = self.block_terms(k)
            u = lay.offsets[blk.iu]
            for i, ci, pi in zip(*np.nonzero(np.isfinite(terms))):
                a = pos_xy[pi]
                b = (a[0] + int(u[0]), a[1] + int(u[1]))
                c = (a[0] + int(blk.v[ci][0]), a[1] + int(blk.v[ci][1]))
                yield Triangle(int(i), a, b, c), float(terms[i, ci, pi])

    def log_prob(self, tri: Triangle) -> float:
        lay = self.tables.layout
        a, b, c = tri.vertices
        u = (b[0] - a[0], b[1] - a[1])
        v = (c[0] - a[0], c[1] - a[1])
        iu = lay.offset_index.get(u)
        if iu is None or not lay.grid.contains(a):
            return -math.inf
        k = next(k for k, blk in enumerate(self.tables.blocks) if blk.iu == iu)
        blk = self.tables.blocks[k]
        match = np.nonzero((blk.v[:, 0] == v[0]) & (blk.v[:, 1] == v[1]))[0]
        if len(match) == 0:
            return -math.inf
        pi = a[1] * lay.grid.width + a[0]
        return float(self.block_terms(k)[tri.ttype, match[0], pi]) - self.log_total


def _root_block(tables: DPTables, k: int) -> np.ndarray:
    blk = tables.blocks[k]
    lay = tables.layout
    if len(blk.v) == 0:
        return np.full((3, 0, lay.grid.size), -np.inf)
    terms = tables.root_terms(blk, lay.positions)
    # roots need all three edges inside the grid
    inside = lay.valid[blk.iu].ravel()[None, None, :]
    return np.where(inside, terms, -np.inf)


def root_marginal(tables: DPTables) -> RootMarginal:
    totals = np.array([logsumexp(_root_block(tables, k).reshape(1, -1), axis=1)[0]
                       if len(blk.v) else -np.inf
                       for k, blk in enumerate(tables.blocks)])
    total = float(logsumexp(totals[None, :], axis=1)[0]) if len(totals) else -math.inf
    if not np.isfinite(total):
        raise InferenceError("posterior has zero total mass (depth too small or grid too coarse?)")
    return RootMarginal(tables, totals, total)


def _draw(logw: np.ndarray, rng: np.random.Generator) -> int:
    """Index drawn by cumulative-weight inversion with a single uniform."""
    m = np.max(logw)
    cum = np.cumsum(np.exp(logw - m))
    idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return min(idx, len(cum) - 1)


class PosteriorSampler:
    """Exact ancestral sampler over depth-bounded, grid-constrained shapes."""

    def __init__(self, tables: DPTables, marginal: RootMarginal | None = None,
                 max_triangles: int = 200_000):
        self.tables = tables
        self.max_triangles = max_triangles
        self.marginal = marginal if marginal is not None else root_marginal(tables)
        self._block_of = {blk.iu: k for k, blk in enumerate(tables.blocks)}
        self._root_cache = lru_cache(maxsize=64)(self._root_cum)
        self._child_cache: dict = {}

    def _root_cum(self, k: int):
        terms = self.marginal.block_terms(k)
        flat = terms.ravel()
        m = np.max(flat)
        return np.cumsum(np.exp(flat - m)), terms.shape

    def sample_root(self, rng: np.random.Generator) -> Triangle:
        mg = self.marginal
        k = _draw(mg.block_log_totals, rng)
        cum, shape = self._root_cum(k)
        idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        i, ci, pi = np.unravel_index(min(idx, len(cum) - 1), shape)
        lay = self.tables.layout
        blk = self.tables.blocks[k]
        u = lay.offsets[blk.iu]
        a = (int(pi % lay.grid.width), int(pi // lay.grid.width))
        b = (a[0] + int(u[0]), a[1] + int(u[1]))
        c = (a[0] + int(blk.v[ci][0]), a[1] + int(blk.v[ci][1]))
        return Triangle(int(i), a, b, c)

    def child_log_weights(self, a, b, j: int) -> tuple[np.ndarray, _TripleBlock]:
        """(4, m) log weights of the four-rule conditional on edge (a, b) at depth j."""
        tab = self.tables
        if not 1 <= j <= tab.depth:
            raise ValueError(f"child depth must be in 1..{tab.depth}, got {j}")
        lay = tab.layout
        iu = lay.offset_index[(b[0] - a[0], b[1] - a[1])]
        blk = tab.blocks[self._block_of[iu]]
        pos = [(a[1] + lay.pad) * lay.padded_shape[1] + a[0] + lay.pad]
        terms = tab.child_terms(blk, tab.levels[tab.depth - j], pos)[:, :, 0]
        return terms, blk

    def sample_child(self, a, b, j: int, rng: np.random.Generator) -> tuple[int, int, tuple[int, int]]:
        """Draw ``(ttype, glue, c)`` for the triangle grown on edge ``(a, b)`` at depth ``j``."""
        key = (a, b, j)
        hit = self._child_cache.get(key)
        if hit is None:
            terms, blk = self.child_log_weights(a, b, j)
            flat = terms.ravel()
            m = np.max(flat)
            if not np.isfinite(m):
                raise InferenceError(f"zero conditional mass on edge {a}->{b} at depth {j}")
            hit = (np.cumsum(np.exp(flat - m)), terms.shape, blk)
            self._child_cache[key] = hit
        cum, shape, blk = hit
        idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        rule, ci = np.unravel_index(min(idx, len(cum) - 1), shape)
        c = (a[0] + int(blk.v[ci][0]), a[1] + int(blk.v[ci][1]))
        ttype, glue = ((0, 0), (1, 0), (1, 1), (2, 0))[rule]
        return ttype, glue, c

    def sample(self, rng: np.random.Generator) -> TriangulatedPolygon:
        root = self.sample_root(rng)
        a, b, c = root.vertices
        triangles, parent, slot, glue = [root], [-1], [-1], [0]
        root_edges = [(a, c), (c, b), (b, a)][: root.ttype + 1]
        queue = deque((e, 1, 0, s) for s, e in enumerate(root_edges))
        while queue:
            (ea, eb), j, p, s = queue.popleft()
            ttype, g, c = self.sample_child(ea, eb, j, rng)
            idx = len(triangles)
            triangles.append(child_triangle(ttype, g, ea, eb, c))
            parent.append(p)
            slot.append(s)
            glue.append(g)
            if ttype == 2:
                grow = [(ea, c), (c, eb)]
            elif ttype == 1:
                grow = [(ea, c)] if g == 0 else [(c, eb)]
            else:
                grow = []
            for s2, e in enumerate(grow):
                queue.append((e, j + 1, idx, s2))
            if len(triangles) > self.max_triangles:
                raise InferenceError(f"sampled shape exceeds {self.max_triangles} triangles; "
                                     "lower lambda or depth")
        return TriangulatedPolygon(triangles, parent, slot, glue)

    def sample_many(self, n: int, seed: int) -> list[TriangulatedPolygon]:
        """``n`` independent shapes; shape ``i`` uses the ``i``-th spawned child stream of ``seed``."""
        streams = np.random.SeedSequence(seed).spawn(n)
        return [self.sample(np.random.default_rng(s)) for s in streams]


@dataclass
class Posterior:
    grid: Grid
    params: GrammarParams
    lcfg: LikelihoodConfig
    icfg: InferenceConfig
    table: EdgeScoreTable
    tables: DPTables
    sampler: PosteriorSampler


def build_posterior(grid: Grid, params: GrammarParams, image: GrayImage, lcfg: LikelihoodConfig,
                    icfg: InferenceConfig, table: EdgeScoreTable | None = None) -> Posterior:
    """Gradient -> edge table -> backward weights -> root marginal."""
    validate_params(params)
    if table is None:
        grad = smooth_gradient(image, lcfg)
        table = precompute_edge_table(grid, grad, lcfg, icfg.l_min, icfg.l_max)
    tables = compute_backward_weights(grid, params, table, lcfg, icfg.depth)
    return Posterior(grid, params, lcfg, icfg, table, tables, PosteriorSampler(tables))


def sample_posterior(n_samples: int, grid: Grid, params: GrammarParams, image: GrayImage,
                     lcfg: LikelihoodConfig, icfg: InferenceConfig, seed: int) -> list[TriangulatedPolygon]:
    post = build_posterior(grid, params, image, lcfg, icfg)
    return post.sampler.sample_many(n_samples, seed)
