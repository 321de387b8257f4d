"""Semantic segmentation accuracy: per-class confusion counts and the
Dice / IoU / Recall / Precision family, per sample and aggregated.

Undefined ratios (0/0) are reported as ``None`` and excluded from means.
Class means exclude the background class (0); a with-background variant is
emitted alongside since either convention may be wanted downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._parallel import pmap
from .errors import EvalError
from .io import VOLUME_SUFFIXES, read_volume, volume_stem
from .volume import Volume

__all__ = [
    "ConfusionCounts",
    "MetricsReport",
    "DatasetEvaluation",
    "confusion",
    "metrics_from_counts",
    "evaluate_dataset",
    "format_table",
]

METRIC_NAMES = ("dice", "iou", "recall", "precision")


@dataclass(frozen=True)
class ConfusionCounts:
    """One-vs-rest voxel tallies per class; exact integers."""

    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray

    @property
    def num_classes(self) -> int:
        return len(self.tp)

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        if self.num_classes != other.num_classes:
            raise EvalError("cannot merge counts with different class counts")
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )


def _as_labels(volume_or_array, name: str) -> np.ndarray:
    data = volume_or_array.data if isinstance(volume_or_array, Volume) else np.asarray(volume_or_array)
    if not np.issubdtype(data.dtype, np.integer):
        raise EvalError(f"{name} must hold integer labels, got {data.dtype}")
    return data


def confusion(pred, gt, num_classes: int) -> ConfusionCounts:
    """Exact per-class TP/FP/FN/TN over two label volumes of equal shape."""
    p = _as_labels(pred, "pred")
    g = _as_labels(gt, "gt")
    if p.shape != g.shape:
        raise EvalError(f"shape mismatch: pred {p.shape} vs gt {g.shape}")
    if num_classes < 1:
        raise EvalError(f"num_classes must be >= 1, got {num_classes}")
    for name, arr in (("pred", p), ("gt", g)):
        if arr.size and (int(arr.min()) < 0 or int(arr.max()) >= num_classes):
            raise EvalError(
                f"{name} labels outside [0, {num_classes}): "
                f"range [{int(arr.min())}, {int(arr.max())}]"
            )
    matrix = np.bincount(
        (g.astype(np.int64).ravel() * num_classes + p.astype(np.int64).ravel()),
        minlength=num_classes * num_classes,
    ).reshape(num_classes, num_classes)  # rows gt, cols pred
    tp = np.diag(matrix).copy()
    fp = matrix.sum(axis=0) - tp
    fn = matrix.sum(axis=1) - tp
    tn = int(p.size) - tp - fp - fn
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def _ratio(num: int, den: int) -> float | None:
    return None if den == 0 else num / den


@dataclass(frozen=True)
class MetricsReport:
    """Per-class metrics plus class means; values in [0, 1] or None."""

    per_class: tuple[dict, ...]  # {class, dice, iou, recall, precision, support}
    mean: dict  # foreground classes, None entries excluded
    mean_with_background: dict

    def to_json(self) -> dict:
        return {
            "per_class": list(self.per_class),
            "mean": self.mean,
            "mean_with_background": self.mean_with_background,
        }


def _mean_over(entries: Sequence[dict]) -> dict:
    out = {}
    for name in METRIC_NAMES:
        values = [e[name] for e in entries if e[name] is not None]
        out[name] = sum(values) / len(values) if values else None
    return out


def metrics_from_counts(counts: ConfusionCounts) -> MetricsReport:
    per_class = []
    for c in range(counts.num_classes):
        tp = int(counts.tp[c])
        fp = int(counts.fp[c])
        fn = int(counts.fn[c])
        per_class.append(
            {
                "class": c,
                "dice": _ratio(2 * tp, 2 * tp + fp + fn),
                "iou": _ratio(tp, tp + fp + fn),
                "recall": _ratio(tp, tp + fn),
                "precision": _ratio(tp, tp + fp),
                "support": tp + fn,
            }
        )
    return MetricsReport(
        per_class=tuple(per_class),
        mean=_mean_over(per_class[1:] if len(per_class) > 1 else per_class),
        mean_with_background=_mean_over(per_class),
    )


@dataclass(frozen=True)
class DatasetEvaluation:
    per_sample: dict[str, MetricsReport]
    aggregate_mean_of_samples: dict  # mean over samples of per-sample class means
    aggregate_pooled: MetricsReport  # metrics of summed counts
    per_class_mean_over_samples: tuple[dict, ...]
    pred_only: tuple[str, ...]
    gt_only: tuple[str, ...]
    num_classes: int

    def to_json(self) -> dict:
        return {
            "per_sample": {stem: r.to_json() for stem, r in sorted(self.per_sample.items())},
            "aggregate": {
                "mean_of_sample_means": self.aggregate_mean_of_samples,
                "pooled_counts": self.aggregate_pooled.to_json(),
                "per_class_mean_over_samples": list(self.per_class_mean_over_samples),
            },
            "unmatched": {"pred_only": list(self.pred_only), "gt_only": list(self.gt_only)},
            "num_classes": self.num_classes,
            "sample_count": len(self.per_sample),
            "convention": {
                "class_mean": "foreground classes (label > 0); undefined (0/0) entries excluded",
                "sample_aggregate": "mean over samples of per-sample class means; "
                "pooled_counts variant sums confusion counts first",
            },
        }


def _label_dir(path: Path) -> Path:
    sub = path / "label"
    return sub if sub.is_dir() else path


def _volume_map(directory: Path) -> dict[str, Path]:
    files: dict[str, Path] = {}
    for entry in sorted(directory.iterdir(), key=lambda p: p.name.encode()):
        if entry.is_file() and entry.name.lower().endswith(VOLUME_SUFFIXES):
            files[volume_stem(entry)] = entry
    return files


@dataclass(frozen=True)
class _EvalTask:
    stem: str
    pred_path: Path
    gt_path: Path
    num_classes: int


def _run_eval_task(task: _EvalTask) -> tuple[str, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    pred = read_volume(task.pred_path)
    gt = read_volume(task.gt_path)
    counts = confusion(pred, gt, task.num_classes)
    return task.stem, counts.tp, counts.fp, counts.fn, counts.tn


def evaluate_dataset(pred_dir, gt_dir, num_classes: int, workers: int = 1) -> DatasetEvaluation:
    """Pair prediction and ground-truth volumes by stem and score them.

    Directories may be flat or contain a ``label/`` subdirectory. Stems
    present on only one side are reported and excluded.
    """
    pred_map = _volume_map(_label_dir(Path(pred_dir)))
    gt_map = _volume_map(_label_dir(Path(gt_dir)))
    shared = sorted(set(pred_map) & set(gt_map), key=str.encode)
    pred_only = tuple(sorted(set(pred_map) - set(gt_map), key=str.encode))
    gt_only = tuple(sorted(set(gt_map) - set(pred_map), key=str.encode))

    tasks = [_EvalTask(s, pred_map[s], gt_map[s], num_classes) for s in shared]
    results = pmap(_run_eval_task, tasks, workers)

    per_sample: dict[str, MetricsReport] = {}
    pooled: ConfusionCounts | None = None
    for stem, tp, fp, fn, tn in results:
        counts = ConfusionCounts(tp, fp, fn, tn)
        per_sample[stem] = metrics_from_counts(counts)
        pooled = counts if pooled is None else pooled + counts

    sample_means = [r.mean for r in per_sample.values()]
    aggregate_mean = _mean_over(sample_means) if sample_means else {m: None for m in METRIC_NAMES}

    per_class_rows = []
    for c in range(num_classes):
        rows = [r.per_class[c] for r in per_sample.values()]
        entry = _mean_over(rows)
        entry["class"] = c
        entry["support"] = int(sum(r["support"] for r in rows)) if rows else 0
        per_class_rows.append(entry)

    if pooled is None:
        pooled = ConfusionCounts(*(np.zeros(num_classes, dtype=np.int64) for _ in range(4)))
    return DatasetEvaluation(
        per_sample=per_sample,
        aggregate_mean_of_samples=aggregate_mean,
        aggregate_pooled=metrics_from_counts(pooled),
        per_class_mean_over_samples=tuple(per_class_rows),
        pred_only=pred_only,
        gt_only=gt_only,
        num_classes=num_classes,
    )


def _fmt_pct(value: float | None) -> str:
    return "  --  " if value is None else f"{100.0 * value:6.2f}"


def format_table(evaluation: DatasetEvaluation) -> str:
    """Aligned plain-text table: one row per sample plus aggregate rows.

    Percentages with two decimals; undefined entries shown as ``--``.
    """
    stem_width = max([len(s) for s in evaluation.per_sample] + [len("sample"), len("mean(pooled)")])
    header = f"{'sample':<{stem_width}}  {'Dice':>6}  {'IoU':>6}  {'Recall':>6}  {'Prec':>6}"
    rule = "-" * len(header)
    lines = [header, rule]
    for stem in sorted(evaluation.per_sample, key=str.encode):
        mean = evaluation.per_sample[stem].mean
        lines.append(
            f"{stem:<{stem_width}}  "
            + "  ".join(_fmt_pct(mean[m]) for m in METRIC_NAMES)
        )
    lines.append(rule)
    agg = evaluation.aggregate_mean_of_samples
    lines.append(f"{'mean(samples)':<{stem_width}}  " + "  ".join(_fmt_pct(agg[m]) for m in METRIC_NAMES))
    pooled = evaluation.aggregate_pooled.mean
    lines.append(f"{'mean(pooled)':<{stem_width}}  " + "  ".join(_fmt_pct(pooled[m]) for m in METRIC_NAMES))
    if evaluation.pred_only or evaluation.gt_only:
        lines.append(rule)
        if evaluation.pred_only:
            lines.append("pred only: " + ", ".join(evaluation.pred_only))
        if evaluation.gt_only:
            lines.append("gt only:   " + ", ".join(evaluation.gt_only))
    return "\n".join(lines)


def to_csv(evaluation: DatasetEvaluation) -> str:
    """Delimited per-sample, per-class export."""
    rows = ["stem,class,dice,iou,recall,precision,support"]

    def cell(v):
        return "" if v is None else repr(v)

    for stem in sorted(evaluation.per_sample, key=str.encode):
        for entry in evaluation.per_sample[stem].per_class:
            rows.append(
                f"{stem},{entry['class']},{cell(entry['dice'])},{cell(entry['iou'])},"
                f"{cell(entry['recall'])},{cell(entry['precision'])},{entry['support']}"
            )
    for entry in evaluation.per_class_mean_over_samples:
        rows.append(
            f"__mean__,{entry['class']},{cell(entry['dice'])},{cell(entry['iou'])},"
            f"{cell(entry['recall'])},{cell(entry['precision'])},{entry['support']}"
        )
    return "\n".join(rows) + "\n"
