"""The finite vertex lattice and its admissible edge offsets."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

# squared lengths are integers; absorbs rounding in l_max = sqrt(...)
_EPS = 1e-9


@dataclass(frozen=True)
class Grid:
    """``width x height`` lattice of vertex locations ``(x, y)``, integer coordinates.

    Placed over a ``px_width x px_height`` image with uniform spacing, inset by
    half a cell from each border.
    """

    width: int
    height: int

    def __post_init__(self):
        if self.width < 3 or self.height < 3:
            raise ValueError("grid must be at least 3x3")

    @property
    def size(self) -> int:
        return self.width * self.height

    @property
    def diameter(self) -> float:
        return math.hypot(self.width - 1, self.height - 1)

    def contains(self, p) -> bool:
        return 0 <= p[0] < self.width and 0 <= p[1] < self.height

    def points(self) -> list[tuple[int, int]]:
        return [(x, y) for y in range(self.height) for x in range(self.width)]

    def spacing(self, px_width: int, px_height: int) -> tuple[float, float]:
        return px_width / self.width, px_height / self.height

    def to_pixels(self, pts, px_width: int, px_height: int) -> np.ndarray:
        """Grid coordinates -> pixel coordinates (pixel centers at integers)."""
        sx, sy = self.spacing(px_width, px_height)
        pts = np.asarray(pts, dtype=float)
        return np.stack([(pts[..., 0] + 0.5) * sx - 0.5, (pts[..., 1] + 0.5) * sy - 0.5], axis=-1)


def admissible_offsets(l_min: float, l_max: float) -> np.ndarray:
    """Integer offsets ``(dx, dy)`` with ``l_min <= |(dx, dy)| <= l_max``, sorted by (dy, dx)."""
    r = int(math.floor(l_max))
    out = []
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            d2 = dx * dx + dy * dy
            if d2 > 0 and l_min * l_min - _EPS <= d2 <= l_max * l_max + _EPS:
                out.append((dx, dy))
    return np.array(out, dtype=np.int64).reshape(-1, 2)


@dataclass(frozen=True)
class EdgeLayout:
    """Dense storage for per-edge quantities on a grid.

    A value for the edge ``a -> a + offsets[o]`` lives at ``[o, y + pad, x + pad]``
    of an ``(n_offsets, height + 2 pad, width + 2 pad)`` array, so shifted
    lookups are plain flat-index arithmetic and out-of-grid endpoints land in
    the padding.
    """

    grid: Grid
    l_min: float
    l_max: float

    def __post_init__(self):
        if self.l_min < 1:
            raise ValueError("l_min must be at least one grid step")
        if self.l_max < self.l_min:
            raise ValueError("l_max must be >= l_min")

    @cached_property
    def offsets(self) -> np.ndarray:
        return admissible_offsets(self.l_min, self.l_max)

    @cached_property
    def offset_index(self) -> dict[tuple[int, int], int]:
        return {(int(dx), int(dy)): i for i, (dx, dy) in enumerate(self.offsets)}

    @property
    def n_offsets(self) -> int:
        return len(self.offsets)

    @cached_property
    def pad(self) -> int:
        return int(math.floor(self.l_max))

    @property
    def padded_shape(self) -> tuple[int, int]:
        return self.grid.height + 2 * self.pad, self.grid.width + 2 * self.pad

    @property
    def plane_size(self) -> int:
        h, w = self.padded_shape
        return h * w

    @cached_property
    def positions(self) -> np.ndarray:
        """Flat padded index of every grid point, row-major over (y, x)."""
        _, w = self.padded_shape
        ys, xs = np.mgrid[0:self.grid.height, 0:self.grid.width]
        return ((ys + self.pad) * w + (xs + self.pad)).ravel()

    def shift(self, d) -> int:
        return int(d[1]) * self.padded_shape[1] + int(d[0])

    def flat(self, o: int, p) -> int:
        _, w = self.padded_shape
        return o * self.plane_size + (int(p[1]) + self.pad) * w + int(p[0]) + self.pad

    def empty(self, fill: float) -> np.ndarray:
        h, w = self.padded_shape
        return np.full((self.n_offsets, h, w), fill, dtype=float)

    @cached_property
    def valid(self) -> np.ndarray:
        """Boolean ``(n_offsets, H, W)``: both endpoints inside the grid."""
        g = self.grid
        ys, xs = np.mgrid[0:g.height, 0:g.width]
        bx = xs[None] + self.offsets[:, 0, None, None]
        by = ys[None] + self.offsets[:, 1, None, None]
        return (bx >= 0) & (bx < g.width) & (by >= 0) & (by < g.height)

    def edge_count(self) -> int:
        return int(self.valid.sum())

    @cached_property
    def triples(self) -> list[tuple[int, np.ndarray]]:
        """For each edge offset ``u``: the candidate offsets ``v`` of the free vertex.

        ``c = a + v`` must be strictly left of ``a -> a + u`` and form admissible
        edges with both ``a`` and ``b``. Returns ``(u_index, v_array)`` pairs.
        """
        lo2, hi2 = self.l_min ** 2 - _EPS, self.l_max ** 2 + _EPS
        out = []
        offs = self.offsets
        for iu, u in enumerate(offs):
            w = u[None, :] - offs
            d2 = (w ** 2).sum(axis=1)
            crs = u[0] * offs[:, 1] - u[1] * offs[:, 0]
            keep = (crs > 0) & (d2 >= lo2) & (d2 <= hi2)
            out.append((iu, offs[keep]))
        return out
