"""Run configuration: an INI file plus command-line overrides.

Schema (every key optional; defaults in brackets)::

    [grammar]
    expected_n = 20          ; give expected_n/expected_j ...
    expected_j = 1
    ; t0 = 0.15             ; ... or all of t0, t1, t2 (not both)
    ; t1 = 0.8
    ; t2 = 0.05
    k0 = 4.0
    k1 = 4.0
    k2 = 4.0

    [sampler]
    d_max = 200
    candidate_radius_steps = 24
    candidate_angle_steps = 36

    [likelihood]
    lambda = 15.0
    smooth_sigma = 1.0
    sample_spacing = 1.0

    [inference]
    grid = 40x40
    depth = 20
    l_min = 1.0
    l_max = 8.0

    [run]
    samples = 20
    seed = 0
    image =                  ; required by ``infer``
    out = out
    cache =                  ; optional directory for edge-table caches
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .dp import InferenceConfig
from .grammar import DEFAULT_K, GrammarError, GrammarParams
from .grid import Grid
from .likelihood import LikelihoodConfig
from .prior import SamplerConfig


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "grammar": {"expected_n", "expected_j", "t0", "t1", "t2", "k0", "k1", "k2"},
    "sampler": {"d_max", "candidate_radius_steps", "candidate_angle_steps"},
    "likelihood": {"lambda", "smooth_sigma", "sample_spacing"},
    "inference": {"grid", "depth", "l_min", "l_max"},
    "run": {"samples", "seed", "image", "out", "cache"},
}


@dataclass(frozen=True)
class RunConfig:
    expectations: tuple[float, float] | None = (20.0, 1.0)
    t: tuple[float, float, float] | None = None
    k: tuple[float, float, float] = DEFAULT_K
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    likelihood: LikelihoodConfig = field(default_factory=LikelihoodConfig)
    grid: tuple[int, int] = (40, 40)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    samples: int = 20
    seed: int = 0
    image: str | None = None
    out: str = "out"
    cache: str | None = None

    def __post_init__(self):
        if (self.expectations is None) == (self.t is None):
            raise ConfigError("give exactly one of (expected_n, expected_j) or (t0, t1, t2)")
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")

    def params(self) -> GrammarParams:
        """Validated grammar parameters (raises GrammarError)."""
        if self.expectations is not None:
            return GrammarParams.from_expectations(*self.expectations, k=self.k)
        return GrammarParams(*self.t, k=self.k).validated()

    def make_grid(self) -> Grid:
        return Grid(*self.grid)

    def canonical(self) -> dict:
        """Everything that affects outputs, as plain JSON data (output paths excluded)."""
        return {
            "expectations": list(self.expectations) if self.expectations else None,
            "t": list(self.t) if self.t else None,
            "k": list(self.k),
            "sampler": {k: v for k, v in asdict(self.sampler).items() if k != "rng_seed"},
            "likelihood": asdict(self.likelihood),
            "grid": list(self.grid),
            "inference": asdict(self.inference),
            "samples": self.samples,
            "seed": self.seed,
        }

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def parse_grid(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ConfigError(f"grid must look like WxH, got {text!r}") from None
    if w < 3 or h < 3:
        raise ConfigError("grid must be at least 3x3")
    return w, h


class _Section(dict):
    def __init__(self, name, items):
        super().__init__(items)
        self.name = name


def _num(sec: _Section, key, conv, default):
    if key not in sec:
        return default
    try:
        return conv(sec[key])
    except ValueError:
        raise ConfigError(f"[{sec.name}] {key}: cannot parse {sec[key]!r}") from None


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read an INI file (optional) and apply overrides; overrides win.

    Override keys: seed, samples, grid, depth, lambda, lmax, out, image,
    expected_n, expected_j.
    """
    cp = configparser.ConfigParser(interpolation=None)
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            cp.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    for name in cp.sections():
        if name not in _SCHEMA:
            raise ConfigError(f"unknown section [{name}]")
        extra = set(cp[name]) - _SCHEMA[name]
        if extra:
            raise ConfigError(f"[{name}] unknown keys: {', '.join(sorted(extra))}")
    sec = {n: _Section(n, cp[n] if cp.has_section(n) else {}) for n in _SCHEMA}
    base = RunConfig()

    g = sec["grammar"]
    has_t = [k in g for k in ("t0", "t1", "t2")]
    has_e = [k in g for k in ("expected_n", "expected_j")]
    if any(has_t) and not all(has_t):
        raise ConfigError("[grammar] needs all of t0, t1, t2")
    if any(has_e) and not all(has_e):
        raise ConfigError("[grammar] needs both expected_n and expected_j")
    if all(has_t) and all(has_e):
        raise ConfigError("[grammar] give expectations or t0/t1/t2, not both")
    t = tuple(_num(g, k, float, None) for k in ("t0", "t1", "t2")) if all(has_t) else None
    expectations = None if t else (_num(g, "expected_n", float, 20.0), _num(g, "expected_j", float, 1.0))
    k = tuple(_num(g, f"k{i}", float, DEFAULT_K[i]) for i in range(3))

    s = sec["sampler"]
    li = sec["likelihood"]
    inf = sec["inference"]
    r = sec["run"]
    ov = dict(overrides or {})
    ov = {key: v for key, v in ov.items() if v is not None}
    if "expected_n" in ov or "expected_j" in ov:
        en, ej = expectations or (20.0, 1.0)
        expectations, t = (ov.get("expected_n", en), ov.get("expected_j", ej)), None
    try:
        sampler = SamplerConfig(
            d_max=_num(s, "d_max", int, base.sampler.d_max),
            candidate_radius_steps=_num(s, "candidate_radius_steps", int, base.sampler.candidate_radius_steps),
            candidate_angle_steps=_num(s, "candidate_angle_steps", int, base.sampler.candidate_angle_steps))
        lik = LikelihoodConfig(
            lam=ov.get("lambda", _num(li, "lambda", float, base.likelihood.lam)),
            smooth_sigma=_num(li, "smooth_sigma", float, base.likelihood.smooth_sigma),
            sample_spacing=_num(li, "sample_spacing", float, base.likelihood.sample_spacing))
        icfg = InferenceConfig(
            depth=ov.get("depth", _num(inf, "depth", int, base.inference.depth)),
            l_max=ov.get("lmax", _num(inf, "l_max", float, base.inference.l_max)),
            l_min=_num(inf, "l_min", float, base.inference.l_min))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    grid = parse_grid(ov["grid"]) if "grid" in ov else \
        parse_grid(inf["grid"]) if "grid" in inf else base.grid
    cfg = RunConfig(
        expectations=expectations, t=t, k=k, sampler=sampler, likelihood=lik, grid=grid,
        inference=icfg,
        samples=ov.get("samples", _num(r, "samples", int, base.samples)),
        seed=ov.get("seed", _num(r, "seed", int, base.seed)),
        image=ov.get("image", r.get("image") or None),
        out=ov.get("out", r.get("out") or base.out),
        cache=ov.get("cache", r.get("cache") or None))
    return replace(cfg, sampler=replace(cfg.sampler, rng_seed=cfg.seed))


def check_grammar(cfg: RunConfig) -> GrammarParams:
    try:
        return cfg.params()
    except GrammarError as exc:
        raise ConfigError(str(exc)) from exc
