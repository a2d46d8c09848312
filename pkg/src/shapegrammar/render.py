"""Deterministic SVG and PPM drawings of triangulated polygons.

Solid (boundary) edges are heavy strokes, dashed (internal diagonal) edges
light dashed strokes. Coordinates are written with fixed precision and no
timestamps, so identical input gives identical bytes.
"""
from __future__ import annotations

import base64
import io

import numpy as np

from .geometry import TriangulatedPolygon
from .grid import Grid
from .likelihood import GrayImage


class RenderError(ValueError):
    pass


def _fmt(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def _png_b64(img: GrayImage) -> str:
    from PIL import Image
    px = np.clip(np.rint(img.pixels * 255), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(px).save(buf, format="PNG", optimize=False)
    return base64.b64encode(buf.getvalue()).decode("ascii")


class _Frame:
    """Maps shape coordinates to drawing coordinates."""

    def __init__(self, shapes, size: int, grid: Grid | None, image: GrayImage | None):
        self.grid, self.image = grid, image
        if image is not None:
            if grid is None:
                raise RenderError("an image backdrop needs grid coordinates")
            self.width, self.height = image.width, image.height
            self.scale = max(1.0, size / max(self.width, self.height))
            self.offset = np.zeros(2)
            return
        pts = np.array([p for s in shapes for p in s.iter_points()], dtype=float)
        lo, hi = pts.min(0), pts.max(0)
        span = max(float((hi - lo).max()), 1e-9)
        margin = 0.05 * span
        self.scale = size / (span + 2 * margin)
        self.offset = lo - margin
        self.width = self.height = size / self.scale

    def __call__(self, p) -> tuple[float, float]:
        p = np.asarray(p, dtype=float)
        if self.image is not None:
            p = self.grid.to_pixels(p, self.image.width, self.image.height) + 0.5
        q = (p - self.offset) * self.scale
        return float(q[0]), float(q[1])


def render_svg(shapes: list[TriangulatedPolygon], image: GrayImage | None = None,
               grid: Grid | None = None, size: int = 400, show_dashed: bool = True) -> str:
    """SVG of one or more shapes, optionally over a grayscale backdrop.

    With an image, shapes are in grid coordinates and ``grid`` maps them to
    pixels. Without one, the view is fitted to the shapes' bounding box.
    """
    if not shapes:
        raise RenderError("nothing to draw")
    fr = _Frame(shapes, size, grid, image)
    w, h = fr.width * fr.scale, fr.height * fr.scale
    lw = max(w, h) / 200.0
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(w)}" height="{_fmt(h)}" '
           f'viewBox="0 0 {_fmt(w)} {_fmt(h)}">']
    if image is not None:
        out.append(f'<image x="0" y="0" width="{_fmt(w)}" height="{_fmt(h)}" '
                   f'style="image-rendering:pixelated" href="data:image/png;base64,{_png_b64(image)}"/>')
    else:
        out.append(f'<rect width="{_fmt(w)}" height="{_fmt(h)}" fill="white"/>')
    for k, poly in enumerate(shapes):
        out.append(f'<g id="shape{k}">')
        if show_dashed:
            for a, b in poly.dashed_edges():
                (x1, y1), (x2, y2) = fr(a), fr(b)
                out.append(f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
                           f'stroke="#8080c0" stroke-width="{_fmt(lw * 0.5)}" '
                           f'stroke-dasharray="{_fmt(lw * 2)},{_fmt(lw * 2)}"/>')
        for a, b in poly.solid_edges():
            (x1, y1), (x2, y2) = fr(a), fr(b)
            out.append(f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
                       f'stroke="#d02020" stroke-width="{_fmt(lw * 1.5)}" stroke-linecap="round"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_gallery(shapes: list[TriangulatedPolygon], cols: int = 5, cell: int = 160) -> str:
    """Grid of independently fitted thumbnails."""
    if not shapes:
        raise RenderError("nothing to draw")
    rows = (len(shapes) + cols - 1) // cols
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{cols * cell}" height="{rows * cell}">']
    for k, poly in enumerate(shapes):
        inner = render_svg([poly], size=cell).split("\n", 1)[1].rsplit("</svg>", 1)[0]
        out.append(f'<g transform="translate({(k % cols) * cell},{(k // cols) * cell})">')
        out.append(inner.rstrip("\n"))
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_ppm(shapes: list[TriangulatedPolygon], image: GrayImage | None = None,
               grid: Grid | None = None, size: int = 400) -> bytes:
    """Binary P6 raster of the same drawing (pixel-exact, for golden tests)."""
    from PIL import Image, ImageDraw
    if not shapes:
        raise RenderError("nothing to draw")
    fr = _Frame(shapes, size, grid, image)
    w, h = int(round(fr.width * fr.scale)), int(round(fr.height * fr.scale))
    if image is not None:
        px = np.clip(np.rint(image.pixels * 255), 0, 255).astype(np.uint8)
        canvas = Image.fromarray(px).resize((w, h), Image.NEAREST).convert("RGB")
    else:
        canvas = Image.new("RGB", (w, h), (255, 255, 255))
    draw = ImageDraw.Draw(canvas)
    for poly in shapes:
        for a, b in poly.dashed_edges():
            draw.line([fr(a), fr(b)], fill=(128, 128, 192), width=1)
        for a, b in poly.solid_edges():
            draw.line([fr(a), fr(b)], fill=(208, 32, 32), width=2)
    return b"P6\n%d %d\n255\n" % (w, h) + canvas.tobytes()
