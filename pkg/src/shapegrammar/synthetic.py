"""Synthetic test images with known object boundaries."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .likelihood import GrayImage


@dataclass(frozen=True)
class Ellipse:
    cx: float
    cy: float
    rx: float
    ry: float

    def inside(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return ((x - self.cx) / self.rx) ** 2 + ((y - self.cy) / self.ry) ** 2 <= 1.0

    def outline(self, n: int = 4096) -> np.ndarray:
        th = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
        return np.stack([self.cx + self.rx * np.cos(th), self.cy + self.ry * np.sin(th)], axis=-1)


def blob_image(width: int, height: int, blobs, background: float = 0.1, foreground: float = 0.9,
               supersample: int = 4) -> GrayImage:
    """Anti-aliased image of filled ellipses (pixel centers at integer coordinates)."""
    s = supersample
    off = (np.arange(s) + 0.5) / s - 0.5
    ys, xs = np.mgrid[0:height, 0:width].astype(float)
    cover = np.zeros((height, width))
    for dy in off:
        for dx in off:
            hit = np.zeros((height, width), dtype=bool)
            for b in blobs:
                hit |= b.inside(xs + dx, ys + dy)
            cover += hit
    cover /= s * s
    return GrayImage(background + (foreground - background) * cover)


def boundary_distance(points, blobs) -> np.ndarray:
    """Distance from each point to the nearest blob outline, with the index of that blob."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    best = np.full(len(pts), np.inf)
    which = np.full(len(pts), -1)
    for i, b in enumerate(blobs):
        ol = b.outline()
        d = np.sqrt(((pts[:, None, :] - ol[None, :, :]) ** 2).sum(-1)).min(axis=1)
        closer = d < best
        best[closer] = d[closer]
        which[closer] = i
    return best, which


def single_blob_scene(size: int = 80):
    blobs = [Ellipse(size / 2, size / 2, 0.3 * size, 0.2 * size)]
    return blob_image(size, size, blobs), blobs


def two_blob_scene(size: int = 80):
    r = 0.14 * size
    blobs = [Ellipse(0.27 * size, 0.5 * size, r, 1.2 * r), Ellipse(0.73 * size, 0.5 * size, r, 1.2 * r)]
    return blob_image(size, size, blobs), blobs
