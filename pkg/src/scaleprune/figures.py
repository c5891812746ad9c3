"""Figure rendering for the report path. PNG output next to the CSV; the CSV
stays the machine-readable contract."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def save_profile_figure(rows, path) -> None:
    """Per-scale FLOP and wall-time shares of a dense run."""
    scales = [r["scale"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    width = 0.4
    ax.bar([s - width / 2 for s in scales], [100 * r["flop_share"] for r in rows],
           width=width, label="analytic FLOPs")
    ax.bar([s + width / 2 for s in scales], [100 * r["wall_share"] for r in rows],
           width=width, label="wall time")
    ax.set_xlabel("scale")
    ax.set_ylabel("share of total (%)")
    ax.set_xticks(scales)
    ax.legend()
    fig.tight_layout()
    fig.savefig(Path(path), dpi=120)
    plt.close(fig)


def save_sensitivity_figure(rows, path) -> None:
    """Final-output PSNR vs the scale that received the noise."""
    scales = [r["scale"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(scales, [r["mean_psnr_db"] for r in rows], marker="o", label="PSNR (dB)")
    ax2 = ax.twinx()
    ax2.plot(scales, [r["mean_ssim"] for r in rows], marker="s", color="tab:orange",
             label="SSIM")
    ax.set_xlabel(f"noise-injected scale (sigma={rows[0]['sigma']})")
    ax.set_ylabel("mean final PSNR (dB)")
    ax2.set_ylabel("mean final SSIM")
    ax.set_xticks(scales)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=120)
    plt.close(fig)


def save_sweep_figure(rows, path) -> None:
    """Speedup and fidelity against the pruning ratio."""
    ratios = [r["ratio"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(ratios, [r["flop_speedup"] for r in rows], marker="o",
            label="analytic speedup")
    ax.plot(ratios, [r["wall_speedup"] for r in rows], marker="^",
            label="wall speedup")
    ax.set_xlabel("pruning ratio")
    ax.set_ylabel("speedup vs dense")
    ax.legend(loc="upper left")
    ax2 = ax.twinx()
    ax2.plot(ratios, [r["psnr_db"] for r in rows], marker="s", color="tab:green",
             label="PSNR")
    ax2.set_ylabel("PSNR vs dense (dB)")
    fig.tight_layout()
    fig.savefig(Path(path), dpi=120)
    plt.close(fig)


def save_run_figure(report, path) -> None:
    """Dense vs pruned per-scale analytic FLOPs for a single experiment."""
    scales = [r["scale"] for r in report.dense.per_scale]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    width = 0.4
    ax.bar([s - width / 2 for s in scales],
           [r["flops"] / 1e6 for r in report.dense.per_scale],
           width=width, label="dense")
    ax.bar([s + width / 2 for s in scales],
           [r["flops"] / 1e6 for r in report.pruned.per_scale],
           width=width, label="pruned")
    ax.set_xlabel("scale")
    ax.set_ylabel("analytic MFLOPs")
    ax.set_xticks(scales)
    ax.legend()
    fig.tight_layout()
    fig.savefig(Path(path), dpi=120)
    plt.close(fig)
