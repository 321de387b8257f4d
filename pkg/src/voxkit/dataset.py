"""Pair-centric dataset layout: scanning, metadata repository, filtering,
and layout conversion.

A dataset root holds an ``image/`` directory and an optional ``label/``
directory; volumes are coupled by identical filename stems. ``meta.json``
at the root caches per-sample geometry so constraints can be evaluated
without touching voxel data.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from ._parallel import pmap
from ._util import utc_timestamp, write_json_atomic
from .errors import DatasetError, VoxkitError
from .io import (
    VOLUME_SUFFIXES,
    read_info,
    read_volume,
    volume_stem,
    write_mha,
    write_nifti,
)

logger = logging.getLogger(__name__)

__all__ = [
    "SamplePair",
    "scan_pairs",
    "build_meta",
    "load_meta",
    "verify_meta",
    "filter_symlink",
    "convert_layout",
    "write_process_config",
    "LAYOUTS",
]

META_NAME = "meta.json"
LAYOUTS = ("native", "decathlon", "pairs")


@dataclass(frozen=True)
class SamplePair:
    """An image volume coupled to its (optional) label volume by stem."""

    stem: str
    image_path: Path
    label_path: Path | None = None


def _volume_files(directory: Path) -> dict[str, Path]:
    files: dict[str, Path] = {}
    for entry in directory.iterdir():
        if not entry.is_file():
            continue
        name = entry.name.lower()
        if not name.endswith(VOLUME_SUFFIXES):
            continue
        stem = volume_stem(entry)
        if stem in files:
            raise DatasetError(f"duplicate stem {stem!r} in {directory}")
        files[stem] = entry
    return files


def scan_pairs(root) -> list[SamplePair]:
    """Deterministic (byte-wise lexicographic) pairing of image/ and label/.

    Unlabeled images are kept; labels without an image are logged as a
    warning and dropped.
    """
    root = Path(root)
    image_dir = root / "image"
    if not image_dir.is_dir():
        raise DatasetError(f"dataset root {root} has no image/ directory")
    images = _volume_files(image_dir)
    label_dir = root / "label"
    labels = _volume_files(label_dir) if label_dir.is_dir() else {}

    orphans = sorted(set(labels) - set(images), key=str.encode)
    if orphans:
        logger.warning("labels without a matching image: %s", ", ".join(orphans))

    return [
        SamplePair(stem, images[stem], labels.get(stem))
        for stem in sorted(images, key=str.encode)
    ]


def _meta_record(pair: SamplePair, root: Path) -> tuple[str, dict | None, dict | None]:
    """Worker: returns (stem, record, error)."""
    try:
        info = read_info(pair.image_path)
        record = {
            "stem": pair.stem,
            "image_file": str(pair.image_path.relative_to(root)),
            "label_file": None,
            "size": list(info.size),
            "spacing": list(info.spacing),
            "origin": list(info.origin),
            "orientation": info.orientation,
            "element_type": info.element_type,
            "label_classes": None,
        }
        if pair.label_path is not None:
            label_info = read_info(pair.label_path)
            if label_info.size != info.size:
                raise DatasetError(
                    f"label size {label_info.size} differs from image size {info.size}"
                )
            label = read_volume(pair.label_path)
            record["label_file"] = str(pair.label_path.relative_to(root))
            record["label_classes"] = [int(v) for v in np.unique(label.data)]
        return pair.stem, record, None
    except (VoxkitError, OSError) as exc:
        return pair.stem, None, {
            "stem": pair.stem,
            "file": str(pair.image_path.relative_to(root)),
            "error": type(exc).__name__,
            "detail": str(exc),
        }


def build_meta(root, workers: int = 1) -> dict:
    """Build and write ``meta.json``; geometry comes from headers only,
    label payloads are decoded just for the class inventory.

    Unreadable samples are skipped and listed under ``errors``.
    """
    root = Path(root)
    pairs = scan_pairs(root)
    results = pmap(_MetaTask(root), pairs, workers)
    samples = {}
    errors = []
    for stem, record, error in results:
        if record is not None:
            samples[stem] = record
        else:
            errors.append(error)
    meta = {
        "samples": samples,
        "errors": errors,
        "generator": {"tool": "voxkit", "version": __version__, "timestamp": utc_timestamp()},
    }
    write_json_atomic(root / META_NAME, meta)
    return meta


class _MetaTask:
    """Picklable wrapper binding the dataset root for pool workers."""

    def __init__(self, root: Path):
        self.root = root

    def __call__(self, pair: SamplePair):
        return _meta_record(pair, self.root)


def load_meta(root) -> dict:
    path = Path(root) / META_NAME
    if not path.is_file():
        raise DatasetError(f"{path} not found; run the meta step first")
    return json.loads(path.read_text(encoding="utf-8"))


def verify_meta(root) -> list[str]:
    """Re-read headers and report any disagreement with meta.json."""
    root = Path(root)
    meta = load_meta(root)
    problems: list[str] = []
    pairs = {p.stem: p for p in scan_pairs(root)}
    recorded = set(meta.get("samples", {})) | {e["stem"] for e in meta.get("errors", [])}
    for stem in sorted(set(pairs) - recorded, key=str.encode):
        problems.append(f"{stem}: present on disk but missing from meta.json")
    for stem, record in sorted(meta.get("samples", {}).items()):
        pair = pairs.get(stem)
        if pair is None:
            problems.append(f"{stem}: in meta.json but not on disk")
            continue
        info = read_info(pair.image_path)
        if list(info.size) != list(record["size"]):
            problems.append(f"{stem}: size {record['size']} != on-disk {list(info.size)}")
        if not np.allclose(info.spacing, record["spacing"], atol=1e-9):
            problems.append(f"{stem}: spacing {record['spacing']} != on-disk {list(info.spacing)}")
        if not np.allclose(info.origin, record["origin"], atol=1e-9):
            problems.append(f"{stem}: origin {record['origin']} != on-disk {list(info.origin)}")
        if record["orientation"] != info.orientation:
            problems.append(
                f"{stem}: orientation {record['orientation']} != on-disk {info.orientation}"
            )
        if record["element_type"] != info.element_type:
            problems.append(
                f"{stem}: element_type {record['element_type']} != on-disk {info.element_type}"
            )
    return problems


def _require_empty_destination(out_root: Path) -> None:
    if out_root.exists() and any(out_root.iterdir()):
        raise DatasetError(f"destination {out_root} is not empty")


def _link_or_copy(src: Path, dst: Path) -> None:
    try:
        os.symlink(src.resolve(), dst)
    except OSError:
        shutil.copy2(src, dst)


@dataclass(frozen=True)
class FilterResult:
    kept: tuple[str, ...]
    dropped: tuple[str, ...]


def filter_symlink(
    root,
    out_root,
    min_size: tuple[int, int, int],
    min_spacing: tuple[float, float, float] | None = None,
    max_spacing: tuple[float, float, float] | None = None,
    workers: int = 1,
) -> FilterResult:
    """Link the samples meeting size/spacing constraints into a new dataset.

    Source data is never modified; links (or copies where linking fails)
    are created under ``out_root`` and a fresh meta.json of the survivors
    is written there.
    """
    root = Path(root)
    out_root = Path(out_root)
    _require_empty_destination(out_root)
    meta = load_meta(root) if (root / META_NAME).is_file() else build_meta(root, workers)
    pairs = {p.stem: p for p in scan_pairs(root)}

    kept: list[str] = []
    dropped: list[str] = []
    (out_root / "image").mkdir(parents=True, exist_ok=True)
    for stem in sorted(meta["samples"], key=str.encode):
        record = meta["samples"][stem]
        ok = all(s >= m for s, m in zip(record["size"], min_size))
        if ok and min_spacing is not None:
            ok = all(s >= m for s, m in zip(record["spacing"], min_spacing))
        if ok and max_spacing is not None:
            ok = all(s <= m for s, m in zip(record["spacing"], max_spacing))
        if not ok:
            dropped.append(stem)
            continue
        pair = pairs[stem]
        _link_or_copy(pair.image_path, out_root / "image" / pair.image_path.name)
        if pair.label_path is not None:
            (out_root / "label").mkdir(exist_ok=True)
            _link_or_copy(pair.label_path, out_root / "label" / pair.label_path.name)
        kept.append(stem)

    build_meta(out_root, workers)
    return FilterResult(kept=tuple(kept), dropped=tuple(dropped))


def _detect_layout(root: Path) -> str:
    if (root / "image").is_dir():
        return "native"
    if (root / "imagesTr").is_dir():
        return "decathlon"
    if any(p.is_dir() and list(p.glob("image.*")) for p in root.iterdir()):
        return "pairs"
    raise DatasetError(f"cannot detect dataset layout under {root}")


def _pairs_from_layout(root: Path, layout: str) -> list[SamplePair]:
    if layout == "native":
        return scan_pairs(root)
    if layout == "decathlon":
        images = _volume_files(root / "imagesTr")
        labels = _volume_files(root / "labelsTr") if (root / "labelsTr").is_dir() else {}
        return [
            SamplePair(stem, images[stem], labels.get(stem))
            for stem in sorted(images, key=str.encode)
        ]
    if layout == "pairs":
        out = []
        for sub in sorted((p for p in root.iterdir() if p.is_dir()), key=lambda p: p.name.encode()):
            image = next(iter(sorted(sub.glob("image.*"))), None)
            if image is None:
                continue
            label = next(iter(sorted(sub.glob("label.*"))), None)
            out.append(SamplePair(sub.name, image, label))
        return out
    raise DatasetError(f"unknown layout {layout!r}")


def convert_layout(root, out_root, target: str, workers: int = 1) -> list[str]:
    """Convert between the native layout, decathlon-style (imagesTr/labelsTr
    plus dataset.json), and per-sample directory pairs. Voxel data is
    rewritten bit-exactly; the container format follows the target
    convention (.nii.gz for decathlon, .mha for pairs).
    """
    if target not in LAYOUTS:
        raise DatasetError(f"unknown layout {target!r}; choose from {LAYOUTS}")
    root = Path(root)
    out_root = Path(out_root)
    _require_empty_destination(out_root)
    source_layout = _detect_layout(root)
    pairs = _pairs_from_layout(root, source_layout)

    tasks = [_ConvertTask(pair, out_root, target) for pair in pairs]
    pmap(_run_convert_task, tasks, workers)

    if target == "decathlon":
        training = [
            {
                "image": f"./imagesTr/{p.stem}.nii.gz",
                "label": f"./labelsTr/{p.stem}.nii.gz",
            }
            for p in pairs
            if p.label_path is not None
        ]
        test = [f"./imagesTr/{p.stem}.nii.gz" for p in pairs if p.label_path is None]
        manifest = {
            "name": root.name,
            "tensorImageSize": "3D",
            "numTraining": len(training),
            "numTest": len(test),
            "training": training,
            "test": test,
        }
        write_json_atomic(out_root / "dataset.json", manifest)
    elif target == "native":
        build_meta(out_root, workers)
    return [p.stem for p in pairs]


@dataclass(frozen=True)
class _ConvertTask:
    pair: SamplePair
    out_root: Path
    target: str


def _run_convert_task(task: _ConvertTask) -> str:
    pair, out_root, target = task.pair, task.out_root, task.target
    image = read_volume(pair.image_path)
    label = read_volume(pair.label_path) if pair.label_path is not None else None
    if target == "native":
        (out_root / "image").mkdir(parents=True, exist_ok=True)
        write_mha(image, out_root / "image" / f"{pair.stem}.mha")
        if label is not None:
            (out_root / "label").mkdir(exist_ok=True)
            write_mha(label, out_root / "label" / f"{pair.stem}.mha")
    elif target == "decathlon":
        (out_root / "imagesTr").mkdir(parents=True, exist_ok=True)
        write_nifti(image, out_root / "imagesTr" / f"{pair.stem}.nii.gz")
        if label is not None:
            (out_root / "labelsTr").mkdir(exist_ok=True)
            write_nifti(label, out_root / "labelsTr" / f"{pair.stem}.nii.gz")
    else:  # pairs
        sub = out_root / pair.stem
        sub.mkdir(parents=True, exist_ok=True)
        write_mha(image, sub / "image.mha")
        if label is not None:
            write_mha(label, sub / "label.mha")
    return pair.stem


def write_process_config(out_root, op: str, params: dict) -> None:
    """Provenance file describing how an output dataset was produced."""
    config = {
        "op": op,
        "params": params,
        "tool": "voxkit",
        "version": __version__,
        "timestamp": utc_timestamp(),
    }
    write_json_atomic(Path(out_root) / "process_config.json", config)
