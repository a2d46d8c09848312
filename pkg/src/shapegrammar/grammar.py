"""Grammar parameters and the branching-process statistics they imply."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import signed_area

SIMPLEX_TOL = 1e-12

_SQ3 = math.sqrt(3.0) / 2.0
# counter-clockwise; type 1 has its short (boundary) side x0-x1 and apex x2
EQUILATERAL = ((0.0, 0.0), (1.0, 0.0), (0.5, _SQ3))
NECK = ((0.0, 0.0), (0.4, 0.0), (0.2, math.sqrt(1.0 - 0.2**2)))
DEFAULT_IDEALS = (EQUILATERAL, NECK, EQUILATERAL)
DEFAULT_K = (4.0, 4.0, 4.0)


class GrammarError(ValueError):
    pass


@dataclass(frozen=True)
class GrammarParams:
    t0: float
    t1: float
    t2: float
    k: tuple[float, float, float] = DEFAULT_K
    ideal_triangles: tuple = DEFAULT_IDEALS

    @property
    def t(self) -> tuple[float, float, float]:
        return (self.t0, self.t1, self.t2)

    @property
    def m(self) -> float:
        return self.t1 + 2.0 * self.t2

    def validated(self) -> "GrammarParams":
        """Check every invariant and return a copy renormalized to an exact simplex."""
        validate_params(self)
        s = self.t0 + self.t1 + self.t2
        t0, t2 = self.t0 / s, self.t2 / s
        t1 = 1.0 - t0 - t2
        return replace(self, t0=t0, t1=max(t1, 0.0), t2=t2,
                       k=tuple(float(v) for v in self.k),
                       ideal_triangles=tuple(tuple(tuple(map(float, p)) for p in x)
                                             for x in self.ideal_triangles))

    @classmethod
    def from_expectations(cls, en: float, ej: float, **kw) -> "GrammarParams":
        return cls(*params_from_expectations(en, ej), **kw).validated()


@dataclass(frozen=True)
class StructureStats:
    expected_n: float
    expected_j: float
    m: float
    x: float
    y: float


def validate_params(params: GrammarParams) -> None:
    """Raise GrammarError naming the first violated invariant."""
    t = np.array(params.t, dtype=float)
    if not np.all(np.isfinite(t)) or np.any(t < 0):
        raise GrammarError(f"simplex: probabilities must be nonnegative, got {tuple(t)}")
    if abs(t.sum() - 1.0) > SIMPLEX_TOL:
        raise GrammarError(f"simplex: t0 + t1 + t2 = {t.sum():.15g}, expected 1")
    if not params.t2 < params.t0:
        raise GrammarError(
            f"subcriticality: need t2 < t0 (m = t1 + 2 t2 < 1), got t0={params.t0}, t2={params.t2}")
    if len(params.k) != 3 or any(not (kk >= 0) for kk in params.k):
        raise GrammarError(f"stiffness k must be three values >= 0, got {params.k}")
    if len(params.ideal_triangles) != 3:
        raise GrammarError("need exactly three ideal triangles")
    for i, x in enumerate(params.ideal_triangles):
        if len(x) != 3 or signed_area(*x) == 0:
            raise GrammarError(f"ideal triangle X_{i} is degenerate")


def params_from_expectations(en: float, ej: float) -> tuple[float, float, float]:
    """(t0, t1, t2) giving expected triangle count ``en`` and junction count ``ej``."""
    if not en >= 2:
        raise GrammarError(f"need E(n) >= 2, got {en}")
    if not ej >= 0:
        raise GrammarError(f"need E(j) >= 0, got {ej}")
    if not en >= 2 * ej + 2:
        raise GrammarError(f"need E(n) >= 2 E(j) + 2, got E(n)={en}, E(j)={ej}")
    t0 = (2.0 + ej) / en
    t2 = ej / en
    t1 = 1.0 - (2.0 * ej + 2.0) / en
    return t0, t1, t2


def expected_counts(params: GrammarParams) -> StructureStats:
    validate_params(params)
    gap = params.t0 - params.t2
    x = 1.0 / gap
    y = params.t2 / gap
    return StructureStats(expected_n=2.0 * x, expected_j=2.0 * y, m=params.m, x=x, y=y)
