"""Command-line interface: ``shapegrammar {gen,infer,stats,render}``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime or data error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, check_grammar, load_config, parse_grid
from .documents import DocumentError, ShapeDocument
from .dp import InferenceError, PosteriorSampler, compute_backward_weights
from .grammar import GrammarError, expected_counts
from .grid import Grid
from .likelihood import (ImageError, load_edge_table, load_image, precompute_edge_table,
                         save_edge_table, smooth_gradient)
from .prior import empirical_stats, sample_shape, spawn_rngs
from .render import RenderError, render_gallery, render_ppm, render_svg
from .scoring import PlacementPrior, shape_log_weight

STATS_DEFAULT_SAMPLES = 100_000


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser, samples=True):
    p.add_argument("--config", metavar="PATH", help="INI config file")
    p.add_argument("--seed", type=int, help="random seed")
    if samples:
        p.add_argument("--samples", type=int, help="number of samples")
    p.add_argument("--json", action="store_true", help="print a machine-readable report")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="shapegrammar", description="Random triangulated shapes and posterior sampling.")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="sample shapes from the prior")
    _common(g)
    g.add_argument("--out", metavar="DIR")
    g.add_argument("--expected-n", type=float, dest="expected_n")
    g.add_argument("--expected-j", type=float, dest="expected_j")
    g.add_argument("--no-gallery", action="store_true")

    i = sub.add_parser("infer", help="sample shapes from the posterior given an image")
    _common(i)
    i.add_argument("--image", metavar="PATH", help="PGM or PNG image")
    i.add_argument("--out", metavar="DIR")
    i.add_argument("--grid", metavar="WxH")
    i.add_argument("--depth", type=int)
    i.add_argument("--lambda", type=float, dest="lam")
    i.add_argument("--lmax", type=float)
    i.add_argument("--cache", metavar="DIR", help="directory for edge-table caches")

    s = sub.add_parser("stats", help="analytic vs Monte Carlo structure statistics")
    _common(s)
    s.add_argument("--expected-n", type=float, dest="expected_n")
    s.add_argument("--expected-j", type=float, dest="expected_j")

    r = sub.add_parser("render", help="draw shape files as SVG or PPM")
    r.add_argument("files", nargs="+", metavar="SHAPE.json")
    r.add_argument("--image", metavar="PATH", help="backdrop image (shapes in grid coordinates)")
    r.add_argument("--overlay", action="store_true", help="draw over the image; requires --image")
    r.add_argument("--grid", metavar="WxH", help="grid size if not recorded in the files")
    r.add_argument("--format", choices=("svg", "ppm"), default="svg")
    r.add_argument("--out", metavar="DIR", default=".")
    r.add_argument("--json", action="store_true")
    return ap


def _config(args) -> RunConfig:
    ov = {"seed": getattr(args, "seed", None), "samples": getattr(args, "samples", None),
          "out": getattr(args, "out", None), "image": getattr(args, "image", None),
          "grid": getattr(args, "grid", None), "depth": getattr(args, "depth", None),
          "lambda": getattr(args, "lam", None), "lmax": getattr(args, "lmax", None),
          "cache": getattr(args, "cache", None),
          "expected_n": getattr(args, "expected_n", None),
          "expected_j": getattr(args, "expected_j", None)}
    return load_config(args.config, ov)


def _outdir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _emit(args, report: dict, lines: list[str]) -> None:
    if args.json:
        print(json.dumps(report, sort_keys=True, indent=1))
    else:
        print("\n".join(lines))


def cmd_gen(args) -> int:
    cfg = _config(args)
    params = check_grammar(cfg)
    out = _outdir(cfg.out)
    prov = {"command": "gen", "config_hash": cfg.digest(), "seed": cfg.seed, "image_hash": None}
    shapes = []
    for k, rng in enumerate(spawn_rngs(cfg.seed, cfg.samples)):
        poly = sample_shape(params, cfg.sampler, rng)
        shapes.append(poly)
        ShapeDocument([poly], dict(prov, sample_index=k)).save(out / f"shape_{k:04d}.json")
    if not args.no_gallery:
        (out / "gallery.svg").write_text(render_gallery(shapes))
    counts = [p.n for p in shapes]
    _emit(args, {"out": str(out), "samples": len(shapes), "n": counts, **prov},
          [f"wrote {len(shapes)} shapes to {out}", f"triangles per shape: {counts}"])
    return 0


def _table_key(cfg: RunConfig, image_hash: str) -> str:
    lc, ic = cfg.likelihood, cfg.inference
    blob = json.dumps([image_hash, list(cfg.grid), ic.l_min, ic.l_max, lc.smooth_sigma, lc.sample_spacing])
    return hashlib.sha256(blob.encode()).hexdigest()


def cmd_infer(args) -> int:
    cfg = _config(args)
    params = check_grammar(cfg)
    if not cfg.image:
        raise ConfigError("infer needs an image (--image or [run] image)")
    img = load_image(cfg.image)
    grid = cfg.make_grid()
    lc, ic = cfg.likelihood, cfg.inference
    key = _table_key(cfg, img.digest())
    table = None
    cache_file = None
    if cfg.cache:
        cache_file = _outdir(cfg.cache) / f"edges_{key[:16]}.sget"
        table = load_edge_table(cache_file, key)
    if table is None:
        table = precompute_edge_table(grid, smooth_gradient(img, lc), lc, ic.l_min, ic.l_max)
        if cache_file is not None:
            save_edge_table(table, cache_file, key)
    tables = compute_backward_weights(grid, params, table, lc, ic.depth)
    sampler = PosteriorSampler(tables)
    log_z = sampler.marginal.log_total
    prior = PlacementPrior(params, ic.l_min, ic.l_max)
    out = _outdir(cfg.out)
    prov = {"command": "infer", "config_hash": cfg.digest(), "seed": cfg.seed,
            "image_hash": img.digest(), "grid": list(cfg.grid)}
    sizes = []
    for k, rng in enumerate(spawn_rngs(cfg.seed, cfg.samples)):
        poly = sampler.sample(rng)
        lw = shape_log_weight(poly, prior, table, lc) - log_z
        ShapeDocument([poly], dict(prov, sample_index=k), [lw]).save(out / f"shape_{k:04d}.json")
        (out / f"overlay_{k:04d}.svg").write_text(render_svg([poly], img, grid, show_dashed=False))
        sizes.append(poly.n)
    _emit(args, {"out": str(out), "samples": len(sizes), "n": sizes, "log_z": log_z, **prov},
          [f"wrote {len(sizes)} posterior samples to {out}", f"log Z = {log_z:.6f}",
           f"triangles per shape: {sizes}"])
    return 0


def cmd_stats(args) -> int:
    cfg = _config(args)
    params = check_grammar(cfg)
    n = args.samples if args.samples is not None else STATS_DEFAULT_SAMPLES
    if n < 2:
        raise ConfigError("stats needs at least 2 samples")
    an = expected_counts(params)
    emp = empirical_stats(params, cfg.sampler, n, np.random.default_rng(cfg.seed))
    rows = [("E(n)", an.expected_n, emp.mean_n, emp.se_n),
            ("E(j)", an.expected_j, emp.mean_j, emp.se_j),
            ("m", an.m, emp.mean_m, emp.se_m)]
    ok = all(abs(a - mc) <= 4 * se for _, a, mc, se in rows)
    report = {"samples": n, "seed": cfg.seed, "t": list(params.t), "capped": emp.capped, "ok": ok,
              "stats": {name: {"analytic": a, "mc_mean": mc, "mc_se": se} for name, a, mc, se in rows}}
    lines = [f"t = ({params.t0:.6g}, {params.t1:.6g}, {params.t2:.6g}), {n} samples"]
    lines += [f"{name:5s} analytic {a:10.6f}   monte carlo {mc:10.6f} +- {se:.6f}" for name, a, mc, se in rows]
    lines.append("agreement within 4 se" if ok else "DISAGREEMENT beyond 4 se")
    _emit(args, report, lines)
    return 0 if ok else 2


def cmd_render(args) -> int:
    if args.overlay and not args.image:
        raise UsageError("--overlay needs --image")
    img = load_image(args.image) if args.image else None
    out = _outdir(args.out)
    written = []
    for f in args.files:
        doc = ShapeDocument.load(f)
        if not doc.shapes:
            raise DocumentError(f"{f}: no shapes")
        grid = None
        if img is not None:
            if args.grid:
                grid = Grid(*parse_grid(args.grid))
            elif "grid" in doc.provenance:
                grid = Grid(*doc.provenance["grid"])
            else:
                raise UsageError(f"{f}: no grid recorded; pass --grid")
        stem = Path(f).stem
        if args.format == "svg":
            target = out / f"{stem}.svg"
            target.write_text(render_svg(doc.shapes, img, grid))
        else:
            target = out / f"{stem}.ppm"
            target.write_bytes(render_ppm(doc.shapes, img, grid))
        written.append(str(target))
    _emit(args, {"written": written}, [f"wrote {w}" for w in written])
    return 0


COMMANDS = {"gen": cmd_gen, "infer": cmd_infer, "stats": cmd_stats, "render": cmd_render}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.cmd](args)
    except (UsageError, ConfigError, GrammarError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ImageError, InferenceError, DocumentError, RenderError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
