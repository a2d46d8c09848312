"""Shape documents: versioned JSON files holding sampled shapes.

Layout (schema version 1)::

    {
      "schema": 1,
      "provenance": {"config_hash": "...", "seed": 0, "image_hash": null, ...},
      "shapes": [
        {
          "triangles": [{"type": 2, "x0": [0, 0], "x1": [3, 0], "x2": [1, 2], "glue": 0}, ...],
          "edges": [[0, 1], [0, 2], ...],        # (parent, child), children in slot order
          "log_weight": -12.5                     # optional
        }
      ]
    }

Triangle 0 is the root. Integer grid coordinates stay integers; floats are
written with Python's shortest round-trip repr, so parsing gives back equal
objects.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .geometry import Triangle, TriangulatedPolygon

SCHEMA_VERSION = 1


class DocumentError(ValueError):
    pass


@dataclass
class ShapeDocument:
    shapes: list[TriangulatedPolygon]
    provenance: dict = field(default_factory=dict)
    log_weights: list[float | None] | None = None
    schema: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.log_weights is not None and len(self.log_weights) != len(self.shapes):
            raise DocumentError("log_weights must match shapes")

    def to_json(self) -> str:
        out = []
        for i, poly in enumerate(self.shapes):
            d = polygon_to_dict(poly)
            if self.log_weights is not None and self.log_weights[i] is not None:
                d["log_weight"] = _finite(self.log_weights[i])
            out.append(d)
        doc = {"schema": self.schema, "provenance": self.provenance, "shapes": out}
        return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ShapeDocument":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DocumentError(f"not JSON: {exc}") from exc
        if not isinstance(doc, dict) or "schema" not in doc:
            raise DocumentError("missing schema version")
        if doc["schema"] != SCHEMA_VERSION:
            raise DocumentError(f"schema version {doc['schema']} unsupported (expected {SCHEMA_VERSION})")
        shapes, weights = [], []
        for d in doc.get("shapes", []):
            shapes.append(polygon_from_dict(d))
            weights.append(d.get("log_weight"))
        has_w = any(w is not None for w in weights)
        return cls(shapes, doc.get("provenance", {}), weights if has_w else None)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "ShapeDocument":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise DocumentError(f"cannot read {path}: {exc}") from exc
        return cls.from_json(text)


def _finite(x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise DocumentError("log_weight must be finite")
    return x


def _pt(p):
    return [v if isinstance(v, int) else float(v) for v in p]


def _unpt(p):
    if not (isinstance(p, list) and len(p) == 2):
        raise DocumentError(f"bad point {p!r}")
    return tuple(v if isinstance(v, int) else float(v) for v in p)


def polygon_to_dict(poly: TriangulatedPolygon) -> dict:
    tris = [{"type": t.ttype, "x0": _pt(t.x0), "x1": _pt(t.x1), "x2": _pt(t.x2), "glue": g}
            for t, g in zip(poly.triangles, poly.glue)]
    edges = sorted(((p, c) for c, p in enumerate(poly.parent) if p >= 0),
                   key=lambda e: (e[0], poly.slot[e[1]]))
    return {"triangles": tris, "edges": [list(e) for e in edges]}


def polygon_from_dict(d: dict) -> TriangulatedPolygon:
    try:
        tris = [Triangle(int(t["type"]), _unpt(t["x0"]), _unpt(t["x1"]), _unpt(t["x2"]))
                for t in d["triangles"]]
        glue = [int(t.get("glue", 0)) for t in d["triangles"]]
        n = len(tris)
        parent, slot = [-1] * n, [-1] * n
        used: dict[int, int] = {}
        for p, c in d["edges"]:
            if not (0 <= p < n and 0 < c < n) or parent[c] != -1:
                raise DocumentError(f"bad edge {[p, c]}")
            parent[c] = p
            slot[c] = used.get(p, 0)
            used[p] = slot[c] + 1
        return TriangulatedPolygon(tris, parent, slot, glue)
    except DocumentError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise DocumentError(f"malformed shape: {exc}") from exc
