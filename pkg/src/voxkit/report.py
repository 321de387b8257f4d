"""Figure rendering for evaluation reports (headless matplotlib)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import METRIC_NAMES, DatasetEvaluation

__all__ = ["render_metric_figures"]


def _per_class_figure(evaluation: DatasetEvaluation, path: Path) -> None:
    rows = evaluation.per_class_mean_over_samples
    classes = [r["class"] for r in rows]
    x = np.arange(len(classes), dtype=float)
    width = 0.2
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(classes)), 4))
    for i, name in enumerate(METRIC_NAMES):
        values = [100.0 * r[name] if r[name] is not None else 0.0 for r in rows]
        ax.bar(x + (i - 1.5) * width, values, width, label=name)
    ax.set_xticks(x)
    ax.set_xticklabels([str(c) for c in classes])
    ax.set_xlabel("class")
    ax.set_ylabel("%")
    ax.set_ylim(0, 105)
    ax.set_title("Per-class metrics (mean over samples)")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _per_sample_figure(evaluation: DatasetEvaluation, path: Path) -> None:
    stems = sorted(evaluation.per_sample, key=str.encode)
    dices = [evaluation.per_sample[s].mean["dice"] for s in stems]
    values = [100.0 * d if d is not None else 0.0 for d in dices]
    fig, ax = plt.subplots(figsize=(max(6, 0.4 * len(stems)), 4))
    ax.bar(range(len(stems)), values, color="#4878d0")
    ax.set_xticks(range(len(stems)))
    ax.set_xticklabels(stems, rotation=90, fontsize=7)
    ax.set_ylabel("Dice %")
    ax.set_ylim(0, 105)
    ax.set_title("Per-sample foreground Dice")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_metric_figures(evaluation: DatasetEvaluation, out_dir) -> list[Path]:
    """Write the per-class and per-sample figures; returns the file paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_class = out_dir / "metrics_per_class.png"
    per_sample = out_dir / "metrics_per_sample.png"
    _per_class_figure(evaluation, per_class)
    _per_sample_figure(evaluation, per_sample)
    return [per_class, per_sample]
