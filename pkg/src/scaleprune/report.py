"""Measurement harness and report emission.

Latency protocol: every timed quantity is the median of `repeats` full runs
after `warmup` untimed runs, on the monotonic clock. Reports are emitted as
JSON (round-trippable) and CSV; prune masks go out as binary PGM images.
Figures (PNG) are rendered next to the CSV when enabled; the CSV remains the
machine-readable contract.
"""

from __future__ import annotations

import csv
import io
import json
import os
import statistics
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .grids import SparseTokens
from .metrics import psnr, ssim
from .pipeline import flop_count, inject_noise, run_dense, run_pruned

ENV_OUT_DIR = "SCALEPRUNE_OUT"

# Report fields that vary run to run (timer noise); everything else is
# seed-deterministic.
TIMING_FIELDS = ("wall_ns", "total_wall_ns", "wall_speedup")


@dataclass
class VariantResult:
    per_scale: list            # dicts: scale, h, w, tokens, kept, skipped, flops, wall_ns
    total_flops: int
    total_wall_ns: int


@dataclass
class RunReport:
    config: dict
    dense: VariantResult
    pruned: VariantResult
    psnr_db: float
    ssim: float
    flop_speedup: float
    wall_speedup: float
    error: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        raw = json.loads(text)
        return cls(
            config=raw["config"],
            dense=VariantResult(**raw["dense"]),
            pruned=VariantResult(**raw["pruned"]),
            psnr_db=raw["psnr_db"],
            ssim=raw["ssim"],
            flop_speedup=raw["flop_speedup"],
            wall_speedup=raw["wall_speedup"],
            error=raw.get("error"),
        )


def resolve_out_dir(configured: str, override: str | None = None) -> Path:
    """CLI flag > environment override > config value."""
    out = override or os.environ.get(ENV_OUT_DIR) or configured
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _timed_runs(fn, repeats: int, warmup: int):
    """Run fn repeatedly; return the result whose total time is the median."""
    for _ in range(warmup):
        fn()
    timed = []
    for _ in range(max(repeats, 1)):
        t0 = time.perf_counter_ns()
        result = fn()
        timed.append((time.perf_counter_ns() - t0, result))
    timed.sort(key=lambda t: t[0])
    median_ns = int(statistics.median(t[0] for t in timed))
    return median_ns, timed[len(timed) // 2][1]


def _variant(records, total_wall_ns: int) -> VariantResult:
    per_scale = [
        {
            "scale": r.index, "h": r.shape[0], "w": r.shape[1],
            "tokens": r.tokens, "kept": r.kept, "skipped": r.skipped,
            "flops": r.flops, "wall_ns": r.wall_ns,
        }
        for r in records
    ]
    return VariantResult(
        per_scale=per_scale,
        total_flops=sum(r.flops for r in records),
        total_wall_ns=total_wall_ns,
    )


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    """Dense reference + configured pruned run, timed and scored."""
    dense_sched = cfg.dense_schedule()
    pruned_sched = cfg.schedule()
    psnrs, ssims = [], []
    dense_records = pruned_records = None
    dense_ns = pruned_ns = 0
    error = None
    try:
        for seed in cfg.input_seeds:
            dense_ns, (dense_out, dense_records) = _timed_runs(
                lambda s=seed: run_pruned(cfg.model, dense_sched, s),
                cfg.repeats, cfg.warmup)
            pruned_ns, (pruned_out, pruned_records) = _timed_runs(
                lambda s=seed: run_pruned(cfg.model, pruned_sched, s),
                cfg.repeats, cfg.warmup)
            psnrs.append(psnr(dense_out[-1], pruned_out[-1]))
            ssims.append(ssim(dense_out[-1], pruned_out[-1]))
    except ValueError as err:
        error = str(err)
    if dense_records is None or pruned_records is None:
        raise RuntimeError(f"experiment produced no runs: {error}")
    dense_var = _variant(dense_records, dense_ns)
    pruned_var = _variant(pruned_records, pruned_ns)
    return RunReport(
        config=cfg.echo(),
        dense=dense_var,
        pruned=pruned_var,
        psnr_db=float(np.mean(psnrs)) if psnrs else float("nan"),
        ssim=float(np.mean(ssims)) if ssims else float("nan"),
        flop_speedup=dense_var.total_flops / max(pruned_var.total_flops, 1),
        wall_speedup=dense_var.total_wall_ns / max(pruned_var.total_wall_ns, 1),
        error=error,
    )


def report_csv(report: RunReport) -> str:
    """Per-scale rows for both variants, totals last."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["variant", "scale", "h", "w", "tokens", "kept", "skipped",
                     "flops", "wall_ns"])
    for name, variant in (("dense", report.dense), ("pruned", report.pruned)):
        for row in variant.per_scale:
            writer.writerow([name, row["scale"], row["h"], row["w"], row["tokens"],
                             row["kept"], int(row["skipped"]), row["flops"],
                             row["wall_ns"]])
        writer.writerow([name, "total", "", "", "", "", "",
                         variant.total_flops, variant.total_wall_ns])
    writer.writerow(["fidelity", "psnr_db", f"{report.psnr_db:.6f}", "", "", "", "", "", ""])
    writer.writerow(["fidelity", "ssim", f"{report.ssim:.6f}", "", "", "", "", "", ""])
    writer.writerow(["speedup", "flops", f"{report.flop_speedup:.4f}", "", "", "", "", "", ""])
    writer.writerow(["speedup", "wall", f"{report.wall_speedup:.4f}", "", "", "", "", "", ""])
    return buf.getvalue()


def export_mask(selection: SparseTokens, path) -> None:
    """Binary PGM (P5, maxval 255): kept tokens white. A CSV of kept indices
    goes next to it."""
    h, w = selection.source_shape
    img = np.zeros((h, w), dtype=np.uint8)
    idx = selection.kept_indices[0]
    img[idx // w, idx % w] = 255
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    with open(path.with_suffix(".csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["token_index", "row", "col"])
        for t in idx:
            writer.writerow([int(t), int(t // w), int(t % w)])


def read_mask(path) -> np.ndarray:
    """Kept token indices back out of a PGM written by export_mask."""
    raw = Path(path).read_bytes()
    header, _, rest = raw.partition(b"255\n")
    fields = header.split()
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h = int(fields[1]), int(fields[2])
    img = np.frombuffer(rest[: h * w], dtype=np.uint8).reshape(h, w)
    return np.flatnonzero(img.ravel() == 255)


def profile_dense(cfg: ExperimentConfig):
    """Per-scale cost breakdown of the dense run (latency-analysis analog)."""
    sched = cfg.dense_schedule()
    seed = cfg.input_seeds[0]
    _, (_, records) = _timed_runs(
        lambda: run_pruned(cfg.model, sched, seed), cfg.repeats, cfg.warmup)
    flops, total = flop_count(sched, cfg.model)
    rows = []
    total_wall = sum(r.wall_ns for r in records) or 1
    for r, f in zip(records, flops):
        rows.append({
            "scale": r.index, "h": r.shape[0], "w": r.shape[1], "tokens": r.tokens,
            "flops": f, "flop_share": f / total,
            "wall_ns": r.wall_ns, "wall_share": r.wall_ns / total_wall,
        })
    return rows


def sensitivity_sweep(cfg: ExperimentConfig):
    """Mean final-output PSNR/SSIM when noise hits each scale in turn."""
    sched = cfg.dense_schedule()
    rows = []
    clean = {s: run_dense(cfg.model, sched, s)[-1] for s in _sens_seeds(cfg)}
    for scale in range(1, sched.num_scales + 1):
        ps, ss = [], []
        for i, seed in enumerate(_sens_seeds(cfg)):
            noisy = inject_noise(cfg.model, sched, seed, scale,
                                 cfg.sensitivity_sigma, noise_seed=1000 + i)
            ps.append(psnr(clean[seed], noisy))
            ss.append(ssim(clean[seed], noisy))
        rows.append({
            "scale": scale, "sigma": cfg.sensitivity_sigma,
            "mean_psnr_db": float(np.mean(ps)), "mean_ssim": float(np.mean(ss)),
        })
    return rows


def _sens_seeds(cfg: ExperimentConfig):
    return range(cfg.input_seeds[0], cfg.input_seeds[0] + cfg.sensitivity_seeds)


def ratio_sweep(cfg: ExperimentConfig):
    """run_experiment at each sweep ratio applied to the last two scales."""
    rows = []
    for r in cfg.sweep_ratios:
        ratios = (r, r) if r > 0 else ()
        sub = _with(cfg, ratios=ratios)
        rep = run_experiment(sub)
        rows.append({
            "ratio": r,
            "flop_speedup": rep.flop_speedup,
            "wall_speedup": rep.wall_speedup,
            "psnr_db": rep.psnr_db,
            "ssim": rep.ssim,
        })
    return rows


def compare_strategies(cfg: ExperimentConfig, strategies=None, recoveries=None):
    """Strategy x recovery matrix at the ablation ratio, averaged over seeds."""
    from .recovery import RecoveryStrategy

    strategies = strategies or ("stepvar", "hf_only", "l2norm", "random")
    recoveries = recoveries or ("nearest_neighbor", "cache_upsample", "anchor_copy")
    r = cfg.ablate_ratio
    seeds = range(cfg.input_seeds[0], cfg.input_seeds[0] + cfg.ablate_seeds)
    dense_sched = cfg.dense_schedule()
    dense_final = {s: run_pruned(cfg.model, dense_sched, s)[0][-1] for s in seeds}
    rows = []
    for strat in strategies:
        for rec in recoveries:
            sched = cfg.schedule(ratios=(r, r), strategy=strat,
                                 recovery=RecoveryStrategy(kind=rec))
            ps, ss = [], []
            for s in seeds:
                out, _ = run_pruned(cfg.model, sched, s)
                ps.append(psnr(dense_final[s], out[-1]))
                ss.append(ssim(dense_final[s], out[-1]))
            rows.append({
                "strategy": strat, "recovery": rec, "ratio": r,
                "seeds": len(ps),
                "mean_psnr_db": float(np.mean(ps)), "mean_ssim": float(np.mean(ss)),
            })
    return rows


def _with(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    from dataclasses import replace

    return replace(cfg, **changes)


def rows_to_csv(rows, path) -> None:
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
