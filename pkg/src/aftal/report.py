"""Render training curves and precision-recall curves to image files."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def render_training_curves(log_path, out_path) -> Path:
    """Loss components and total versus training step."""
    log_path = Path(log_path)
    with log_path.open() as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{log_path}: empty training log")
    steps = [int(r["step"]) for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    for column in ("cls_coarse", "loc_coarse", "cls_refined", "loc_refined", "quality"):
        ax1.plot(steps, [float(r[column]) for r in rows], label=column, linewidth=1)
    ax1.plot(steps, [float(r["total"]) for r in rows], label="total",
             color="black", linewidth=1.5)
    ax1.set_xlabel("step")
    ax1.set_ylabel("loss")
    ax1.set_title("detection objective")
    ax1.legend(fontsize=8)

    bcl_rows = [r for r in rows if r["bcl_eligible"] == "1"]
    if bcl_rows:
        bcl_steps = [int(r["step"]) for r in bcl_rows]
        ax2.plot(bcl_steps, [float(r["act"]) for r in bcl_rows], label="act", linewidth=1)
        ax2.plot(bcl_steps, [float(r["trip"]) for r in bcl_rows], label="trip", linewidth=1)
        ax2.legend(fontsize=8)
    else:
        ax2.text(0.5, 0.5, "no eligible samples", ha="center", va="center",
                 transform=ax2.transAxes)
    ax2.set_xlabel("step")
    ax2.set_ylabel("loss")
    ax2.set_title("consistency objective")

    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_pr_curves(report_path, out_path) -> Path:
    """One panel per class: PR curves across evaluation thresholds."""
    doc = json.loads(Path(report_path).read_text())
    classes = doc["classes"]
    thresholds = doc["thresholds"]
    n = max(len(classes), 1)
    fig, axes = plt.subplots(1, n, figsize=(4 * n, 3.6), squeeze=False)
    for ax, name in zip(axes[0], classes):
        for t in thresholds:
            curve = doc["pr_curves"][name][f"{t:g}"]
            ax.plot(curve["recall"], curve["precision"],
                    label=f"tIoU {t:g}", linewidth=1)
        ax.set_xlim(0, 1.02)
        ax.set_ylim(0, 1.02)
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_title(f"{name} (avg AP "
                     f"{sum(doc['ap'][name].values()) / len(thresholds):.3f})")
        ax.legend(fontsize=7)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_map_summary(report_path, out_path) -> Path:
    """Bar chart of mAP per threshold plus the cross-threshold average."""
    doc = json.loads(Path(report_path).read_text())
    thresholds = doc["thresholds"]
    values = [doc["map_per_threshold"][f"{t:g}"] for t in thresholds]
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.bar([f"{t:g}" for t in thresholds], values, color="#4878b0")
    ax.axhline(doc["average_map"], color="black", linestyle="--", linewidth=1,
               label=f"average {doc['average_map']:.3f}")
    ax.set_xlabel("tIoU threshold")
    ax.set_ylabel("mAP")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_all(run_dir, out_dir=None) -> list[Path]:
    """Render every figure the run directory has data for."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir is not None else run_dir / "figures"
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    log_path = run_dir / "train_log.csv"
    if log_path.exists():
        written.append(render_training_curves(log_path, out_dir / "training_curves.png"))
    report_path = run_dir / "report.json"
    if report_path.exists():
        written.append(render_pr_curves(report_path, out_dir / "pr_curves.png"))
        written.append(render_map_summary(report_path, out_dir / "map_summary.png"))
    return written
