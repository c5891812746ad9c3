"""Command-line front end.

Subcommands: run, sweep, ablate, profile, sensitivity, mask, plus kernel
entry points (score-select, nn-propagate, fixtures) that operate on dumped
array buffers so other runtimes can call the native kernels. Exit code 0 on
success, 1 with a diagnostic on stderr otherwise. SCALEPRUNE_OUT overrides
the configured output directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_config
from .fixtures import dump_array, dump_sparse, load_array, load_sparse
from .grids import FeatureGrid
from .recovery import nn_propagate
from .report import (
    compare_strategies,
    export_mask,
    profile_dense,
    ratio_sweep,
    report_csv,
    resolve_out_dir,
    rows_to_csv,
    run_experiment,
    sensitivity_sweep,
)
from .scoring import PruneParams, joint_select


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scaleprune",
        description="Token-pruned coarse-to-fine transformer benchmark harness",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment_cmd(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", required=True, help="YAML config file")
        p.add_argument("-o", "--out", default=None, help="output directory override")
        return p

    experiment_cmd("run", "single dense-vs-pruned experiment")
    experiment_cmd("sweep", "pruning-ratio sweep on the last two scales")
    experiment_cmd("ablate", "strategy x recovery matrix")
    experiment_cmd("profile", "dense per-scale cost breakdown")
    experiment_cmd("sensitivity", "per-scale noise-injection analysis")

    p = experiment_cmd("mask", "export prune masks for the configured run")
    p.add_argument("--ratio", type=float, default=None,
                   help="override ratio for the mask (applied to the final scale)")

    p = sub.add_parser("score-select", help="run scoring+selection on a dumped buffer")
    p.add_argument("--input", required=True, help="buffer base path (.bin/.json pair)")
    p.add_argument("--out", required=True, help="output base path")
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--w-str", type=float, default=0.5)
    p.add_argument("--iters", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("nn-propagate", help="densify a dumped sparse buffer")
    p.add_argument("--input", required=True, help="sparse buffer base path")
    p.add_argument("--out", required=True, help="output base path")

    p = sub.add_parser("fixtures", help="generate shared fixtures plus golden outputs")
    p.add_argument("--out", required=True, help="fixture directory")
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_run(cfg, out_dir: Path) -> int:
    from .figures import save_run_figure

    report = run_experiment(cfg)
    (out_dir / "report.json").write_text(report.to_json())
    (out_dir / "report.csv").write_text(report_csv(report))
    if cfg.write_masks:
        _write_masks(cfg, out_dir)
    if cfg.write_figures:
        save_run_figure(report, out_dir / "report.png")
    print(f"flop speedup {report.flop_speedup:.2f}x, wall {report.wall_speedup:.2f}x, "
          f"PSNR {report.psnr_db:.2f} dB, SSIM {report.ssim:.4f}")
    if report.error:
        print(f"partial report; error: {report.error}", file=sys.stderr)
        return 1
    return 0


def _write_masks(cfg, out_dir: Path, ratio=None):
    from .pipeline import _scale_input, _scale_scores, run_pruned
    from .scoring import select_by_score

    masks_dir = out_dir / "masks"
    masks_dir.mkdir(exist_ok=True)
    sched = cfg.schedule() if ratio is None else cfg.schedule(ratios=(ratio,))
    dense_out, _ = run_pruned(cfg.model, cfg.dense_schedule(), cfg.input_seeds[0])
    for s, spec in enumerate(sched.prune):
        if spec.strategy == "none" or spec.ratio in (0.0, 1.0):
            continue
        prev = dense_out[s - 1] if s > 0 else None
        x_in = _scale_input(cfg.model, sched, s, prev, cfg.input_seeds[0])
        selection = select_by_score(x_in, _scale_scores(x_in, spec, s), spec.ratio)
        export_mask(selection, masks_dir / f"scale{s + 1:02d}_r{spec.ratio:.2f}.pgm")


def _cmd_sweep(cfg, out_dir: Path) -> int:
    from .figures import save_sweep_figure

    rows = ratio_sweep(cfg)
    rows_to_csv(rows, out_dir / "sweep.csv")
    if cfg.write_figures:
        save_sweep_figure(rows, out_dir / "sweep.png")
    for r in rows:
        print(f"r={r['ratio']:.2f}  flops x{r['flop_speedup']:.2f}  "
              f"wall x{r['wall_speedup']:.2f}  PSNR {r['psnr_db']:.2f} dB")
    return 0


def _cmd_ablate(cfg, out_dir: Path) -> int:
    rows = compare_strategies(cfg)
    rows_to_csv(rows, out_dir / "ablate.csv")
    for r in rows:
        print(f"{r['strategy']:>10s} + {r['recovery']:<16s} "
              f"PSNR {r['mean_psnr_db']:.2f} dB  SSIM {r['mean_ssim']:.4f}")
    return 0


def _cmd_profile(cfg, out_dir: Path) -> int:
    from .figures import save_profile_figure

    rows = profile_dense(cfg)
    rows_to_csv(rows, out_dir / "profile.csv")
    if cfg.write_figures:
        save_profile_figure(rows, out_dir / "profile.png")
    for r in rows:
        print(f"scale {r['scale']}: {r['tokens']:5d} tokens  "
              f"{100 * r['flop_share']:5.1f}% flops  {100 * r['wall_share']:5.1f}% wall")
    return 0


def _cmd_sensitivity(cfg, out_dir: Path) -> int:
    from .figures import save_sensitivity_figure

    rows = sensitivity_sweep(cfg)
    rows_to_csv(rows, out_dir / "sensitivity.csv")
    if cfg.write_figures:
        save_sensitivity_figure(rows, out_dir / "sensitivity.png")
    for r in rows:
        print(f"scale {r['scale']}: PSNR {r['mean_psnr_db']:.2f} dB  "
              f"SSIM {r['mean_ssim']:.4f}")
    return 0


def _cmd_mask(cfg, out_dir: Path, ratio) -> int:
    _write_masks(cfg, out_dir, ratio=ratio)
    print(f"masks written to {out_dir / 'masks'}")
    return 0


def _cmd_score_select(args) -> int:
    arr, meta = load_array(args.input)
    grid = FeatureGrid(arr, int(meta["height"]), int(meta["width"]))
    params = PruneParams(ratio=args.ratio, w_str=args.w_str,
                         power_iters=args.iters, rng_seed=args.seed)
    sparse, _ = joint_select(grid, params)
    dump_sparse(args.out, sparse)
    print(json.dumps({"k": sparse.k}))
    return 0


def _cmd_nn_propagate(args) -> int:
    sparse = load_sparse(args.input)
    dense = nn_propagate(sparse)
    dump_array(args.out, dense.data, dense.height, dense.width)
    print(json.dumps({"tokens": dense.tokens}))
    return 0


def _cmd_fixtures(args) -> int:
    """Random (B, L, C) buffers plus golden native selection/recovery outputs."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    manifest = []
    for i in range(args.count):
        h = int(rng.integers(2, 9))
        w = int(rng.integers(2, 9))
        c = int(rng.integers(2, 9))
        ratio = float(rng.uniform(0.1, 0.9))
        seed = int(rng.integers(0, 2 ** 31))
        data = rng.standard_normal((1, h * w, c)).astype(np.float32).astype(np.float64)
        grid = FeatureGrid(data, h, w)
        base = out / f"fixture{i:03d}"
        dump_array(base, data, h, w, {"seed": seed, "ratio": ratio})
        params = PruneParams(ratio=ratio, power_iters=3, rng_seed=seed)
        sparse, _ = joint_select(grid, params)
        dump_sparse(out / f"fixture{i:03d}.golden_sparse", sparse)
        dense = nn_propagate(sparse)
        dump_array(out / f"fixture{i:03d}.golden_dense", dense.data, h, w)
        manifest.append({
            "base": base.name, "height": h, "width": w, "channels": c,
            "ratio": ratio, "seed": seed, "k": sparse.k,
        })
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"{args.count} fixtures in {out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "score-select":
            return _cmd_score_select(args)
        if args.command == "nn-propagate":
            return _cmd_nn_propagate(args)
        if args.command == "fixtures":
            return _cmd_fixtures(args)
        cfg = load_config(args.config)
        out_dir = resolve_out_dir(cfg.out_dir, args.out)
        if args.command == "run":
            return _cmd_run(cfg, out_dir)
        if args.command == "sweep":
            return _cmd_sweep(cfg, out_dir)
        if args.command == "ablate":
            return _cmd_ablate(cfg, out_dir)
        if args.command == "profile":
            return _cmd_profile(cfg, out_dir)
        if args.command == "sensitivity":
            return _cmd_sensitivity(cfg, out_dir)
        if args.command == "mask":
            return _cmd_mask(cfg, out_dir, args.ratio)
        raise AssertionError(f"unhandled command {args.command}")
    except (ConfigError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
