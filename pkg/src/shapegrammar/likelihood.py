"""Grayscale images, gradients, and the boundary line integrals of the likelihood."""
from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .geometry import boundary_edges
from .grid import EdgeLayout, Grid


class ImageError(ValueError):
    pass


@dataclass(frozen=True)
class GrayImage:
    pixels: np.ndarray  # (height, width), float64 in [0, 1]

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 2 or px.shape[0] < 2 or px.shape[1] < 2:
            raise ImageError(f"image must be 2-D and at least 2x2, got shape {px.shape}")
        if not np.all(np.isfinite(px)) or px.min() < 0 or px.max() > 1:
            raise ImageError("intensities must be finite and in [0, 1]")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def digest(self) -> str:
        h = hashlib.sha256(struct.pack("<II", self.width, self.height))
        h.update(np.ascontiguousarray(self.pixels, dtype="<f8").tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class LikelihoodConfig:
    lam: float = 15.0
    smooth_sigma: float = 1.0
    sample_spacing: float = 1.0

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lambda must be >= 0")
        if not self.smooth_sigma >= 0:
            raise ValueError("smooth_sigma must be >= 0")
        if not self.sample_spacing > 0:
            raise ValueError("sample_spacing must be > 0")


@dataclass(frozen=True)
class GradientField:
    gx: np.ndarray
    gy: np.ndarray

    def __post_init__(self):
        if self.gx.shape != self.gy.shape:
            raise ValueError("gradient components differ in shape")
        if np.isnan(self.gx).any() or np.isnan(self.gy).any():
            raise ImageError("NaN in gradient field")

    @property
    def width(self) -> int:
        return self.gx.shape[1]

    @property
    def height(self) -> int:
        return self.gx.shape[0]


# -- image files -----------------------------------------------------------

def _pgm_header(data: bytes) -> tuple[int, int, int, int]:
    """Parse a P5 header; returns (width, height, maxval, data_offset)."""
    if data[:2] != b"P5":
        raise ImageError("not a binary PGM (P5): bad magic at byte offset 0")
    pos, fields = 2, []
    while len(fields) < 3:
        while pos < len(data) and (data[pos:pos + 1].isspace() or data[pos:pos + 1] == b"#"):
            if data[pos:pos + 1] == b"#":
                while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ImageError(f"malformed PGM header at byte offset {pos}")
        fields.append(int(data[start:pos]))
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ImageError(f"truncated PGM header at byte offset {pos}")
    return fields[0], fields[1], fields[2], pos + 1


def decode_pgm(data: bytes) -> GrayImage:
    if not data:
        raise ImageError("empty file (byte offset 0)")
    w, h, maxval, off = _pgm_header(data)
    if not 0 < maxval < 256:
        raise ImageError(f"only 8-bit PGM supported, maxval={maxval}")
    need = w * h
    if len(data) - off < need:
        raise ImageError(f"truncated PGM pixel data at byte offset {len(data)} "
                         f"(expected {off + need} bytes)")
    px = np.frombuffer(data, dtype=np.uint8, count=need, offset=off).reshape(h, w)
    return GrayImage(px.astype(float) / maxval)


def encode_pgm(img: GrayImage) -> bytes:
    px = np.clip(np.rint(img.pixels * 255), 0, 255).astype(np.uint8)
    return b"P5\n%d %d\n255\n" % (img.width, img.height) + px.tobytes()


def load_image(path) -> GrayImage:
    path = Path(path)
    data = path.read_bytes()
    if not data:
        raise ImageError(f"{path}: empty file (byte offset 0)")
    if data[:2] == b"P5":
        return decode_pgm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        from PIL import Image
        try:
            with Image.open(path) as im:
                im.load()
                mode = im.mode
                if mode == "P":
                    im = im.convert("RGBA" if "transparency" in im.info else "RGB")
                    mode = im.mode
                arr = np.asarray(im)
        except OSError as exc:
            raise ImageError(f"{path}: cannot decode PNG: {exc}") from exc
        if mode in ("L", "LA"):
            gray = (arr[..., 0] if arr.ndim == 3 else arr).astype(float)
        elif mode in ("RGB", "RGBA"):
            rgb = arr[..., :3].astype(float)
            gray = rgb @ np.array([0.299, 0.587, 0.114])
        else:
            raise ImageError(f"{path}: unsupported PNG mode {mode}")
        return GrayImage(np.clip(gray / 255.0, 0.0, 1.0))
    raise ImageError(f"{path}: unsupported format (byte offset 0)")


def save_pgm(img: GrayImage, path) -> None:
    Path(path).write_bytes(encode_pgm(img))


# -- gradients and edge integrals -----------------------------------------

def smooth_gradient(img: GrayImage, cfg: LikelihoodConfig) -> GradientField:
    """Gaussian smoothing (3 sigma support, reflected borders), then central differences."""
    px = img.pixels
    if cfg.smooth_sigma > 0:
        px = ndimage.gaussian_filter(px, cfg.smooth_sigma, mode="reflect", truncate=3.0)
    gy, gx = np.gradient(px)
    return GradientField(gx, gy)


def edge_integrals(a, b, grad: GradientField, cfg: LikelihoodConfig) -> np.ndarray:
    """Line integrals of |grad I x t| along segments ``a[k] -> b[k]`` (pixel coordinates).

    Midpoint rule with at most ``sample_spacing`` between samples and bilinear
    gradient interpolation; the gradient is zero outside the image.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    d = b - a
    length = np.hypot(d[:, 0], d[:, 1])
    if np.any(length == 0):
        raise ValueError("zero-length edge")
    out = np.empty(len(a))
    n_samples = np.maximum(1, np.ceil(length / cfg.sample_spacing - 1e-9)).astype(int)
    for n in np.unique(n_samples):
        sel = np.nonzero(n_samples == n)[0]
        frac = (np.arange(n) + 0.5) / n
        pts = a[sel, None, :] + frac[None, :, None] * d[sel, None, :]
        coords = [pts[..., 1].ravel(), pts[..., 0].ravel()]
        gx = ndimage.map_coordinates(grad.gx, coords, order=1, mode="grid-constant", cval=0.0)
        gy = ndimage.map_coordinates(grad.gy, coords, order=1, mode="grid-constant", cval=0.0)
        tx = (d[sel, 0] / length[sel])[:, None]
        ty = (d[sel, 1] / length[sel])[:, None]
        normal = np.abs(gx.reshape(len(sel), n) * ty - gy.reshape(len(sel), n) * tx)
        out[sel] = normal.sum(axis=1) * (length[sel] / n)
    if np.isnan(out).any():
        raise ImageError("NaN in edge integral")
    return out


def edge_integral(a, b, grad: GradientField, cfg: LikelihoodConfig) -> float:
    return float(edge_integrals([a], [b], grad, cfg)[0])


@dataclass
class EdgeScoreTable:
    """Boundary integrals for every admissible grid edge (grid units in, pixel integrals out).

    ``values[o, y, x]`` holds the integral for ``(x, y) -> (x, y) + offsets[o]``;
    NaN marks edges leaving the grid.
    """

    layout: EdgeLayout
    values: np.ndarray
    image_shape: tuple[int, int]

    @property
    def grid(self) -> Grid:
        return self.layout.grid

    def __len__(self) -> int:
        # one entry per unordered pair
        return int(np.isfinite(self.values).sum()) // 2

    def lookup(self, a, b) -> float:
        d = (int(b[0]) - int(a[0]), int(b[1]) - int(a[1]))
        o = self.layout.offset_index.get(d)
        if o is None or not self.grid.contains(a):
            raise KeyError(f"edge {tuple(a)}->{tuple(b)} not in table")
        v = self.values[o, int(a[1]), int(a[0])]
        if not np.isfinite(v):
            raise KeyError(f"edge {tuple(a)}->{tuple(b)} not in table")
        return float(v)

    def padded(self, scale: float) -> np.ndarray:
        """``scale * values`` in the padded layout, ``-inf`` where the edge is absent."""
        lay = self.layout
        out = lay.empty(-np.inf)
        p = lay.pad
        inner = np.where(np.isfinite(self.values), scale * np.nan_to_num(self.values), -np.inf)
        out[:, p:p + self.grid.height, p:p + self.grid.width] = inner
        return out

    def digest(self) -> str:
        h = hashlib.sha256(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        return h.hexdigest()


def grid_edge_integral(grid: Grid, a, b, grad: GradientField, cfg: LikelihoodConfig) -> float:
    """Edge integral for grid points ``a``, ``b`` (mapped to pixel coordinates)."""
    pa, pb = grid.to_pixels([a, b], grad.width, grad.height)
    return edge_integral(pa, pb, grad, cfg)


def precompute_edge_table(grid: Grid, grad: GradientField, cfg: LikelihoodConfig,
                          l_min: float = 1.0, l_max: float | None = None) -> EdgeScoreTable:
    """Integrals for every unordered grid pair with ``l_min <= |ab| <= l_max``.

    Each unordered pair is integrated once (from its lexicographically smaller
    offset direction) and mirrored, so lookups are exactly symmetric.
    """
    if l_max is None:
        l_max = grid.diameter
    lay = EdgeLayout(grid, l_min, l_max)
    values = np.full((lay.n_offsets, grid.height, grid.width), np.nan)
    ys, xs = np.mgrid[0:grid.height, 0:grid.width]
    for o, (dx, dy) in enumerate(lay.offsets):
        if (dy, dx) < (0, 0):
            continue
        ok = lay.valid[o]
        if not ok.any():
            continue
        a = np.stack([xs[ok], ys[ok]], axis=-1)
        b = a + np.array([dx, dy])
        pa = grid.to_pixels(a, grad.width, grad.height)
        pb = grid.to_pixels(b, grad.width, grad.height)
        vals = edge_integrals(pa, pb, grad, cfg)
        values[o][ok] = vals
        back = lay.offset_index[(-int(dx), -int(dy))]
        values[back][b[:, 1], b[:, 0]] = vals
    return EdgeScoreTable(lay, values, (grad.height, grad.width))


def triangle_edge_terms(ttype: int, x0, x1, x2, table: EdgeScoreTable, cfg: LikelihoodConfig) -> list[float]:
    """``lambda * integral`` for each solid edge of the triangle, in edge order."""
    from .geometry import Triangle
    t = Triangle(ttype, tuple(x0), tuple(x1), tuple(x2))
    return [cfg.lam * table.lookup(p, q) for p, q in boundary_edges(t)]


def triangle_log_likelihood(ttype: int, x0, x1, x2, table: EdgeScoreTable, cfg: LikelihoodConfig) -> float:
    """log pi_i = lambda * sum of the triangle's solid-edge integrals (0 for junctions)."""
    return math.fsum(triangle_edge_terms(ttype, x0, x1, x2, table, cfg))


def shape_log_likelihood(poly, table: EdgeScoreTable, cfg: LikelihoodConfig) -> float:
    """Correctly rounded sum of every triangle's edge terms."""
    return math.fsum(v for t in poly.triangles
                     for v in triangle_edge_terms(t.ttype, t.x0, t.x1, t.x2, table, cfg))


def boundary_log_likelihood(poly, table: EdgeScoreTable, cfg: LikelihoodConfig) -> float:
    """lambda times the summed integrals over the shape's solid edges."""
    return math.fsum(cfg.lam * table.lookup(p, q) for p, q in poly.solid_edges())


# -- on-disk cache ----------------------------------------------------------
# Edge table file: b"SGET" | u32 version=1 | u32 header_len | header (UTF-8 JSON)
# | float64 little-endian values, C order, shape (n_offsets, height, width).

_TABLE_MAGIC = b"SGET"


def save_edge_table(table: EdgeScoreTable, path, key: str) -> None:
    import json
    lay = table.layout
    header = json.dumps({"key": key, "grid": [lay.grid.width, lay.grid.height], "l_min": lay.l_min,
                         "l_max": lay.l_max, "image_shape": list(table.image_shape)},
                        sort_keys=True).encode()
    body = np.ascontiguousarray(table.values, dtype="<f8").tobytes()
    Path(path).write_bytes(_TABLE_MAGIC + struct.pack("<II", 1, len(header)) + header + body)


def load_edge_table(path, key: str) -> EdgeScoreTable | None:
    """Load a cached table; ``None`` if missing or built for a different key."""
    import json
    path = Path(path)
    if not path.exists():
        return None
    data = path.read_bytes()
    if data[:4] != _TABLE_MAGIC:
        return None
    _, hlen = struct.unpack_from("<II", data, 4)
    header = json.loads(data[12:12 + hlen])
    if header["key"] != key:
        return None
    grid = Grid(*header["grid"])
    lay = EdgeLayout(grid, header["l_min"], header["l_max"])
    values = np.frombuffer(data, dtype="<f8", offset=12 + hlen).reshape(
        lay.n_offsets, grid.height, grid.width).astype(float)
    return EdgeScoreTable(lay, values, tuple(header["image_shape"]))
