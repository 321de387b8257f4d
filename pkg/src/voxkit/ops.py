"""Geometric and intensity preprocessing: resampling, patch split/assemble,
label remapping, window-level, and instance normalization.

All functions are pure; they return new Volumes and never mutate inputs.
Triples are [Z, Y, X] throughout.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np

from .errors import PatchError, TransformError
from .volume import Volume, index_to_physical

__all__ = [
    "ResampleSpec",
    "CropMetaRecord",
    "PatchItem",
    "resample",
    "patch_positions",
    "split_patches",
    "assemble_patches",
    "remap_labels",
    "window_level",
    "instance_normalize",
    "patch_stem_for",
]


@dataclass(frozen=True)
class ResampleSpec:
    """Resampling request: a target spacing or a target size, plus interpolation."""

    mode: Literal["to-spacing", "to-size"]
    target: tuple[float, float, float]  # [Z, Y, X]; ints for to-size
    interpolation: Literal["trilinear", "nearest"] = "trilinear"

    def __post_init__(self):
        if self.mode not in ("to-spacing", "to-size"):
            raise TransformError(f"unknown resample mode {self.mode!r}")
        if self.interpolation not in ("trilinear", "nearest"):
            raise TransformError(f"unknown interpolation {self.interpolation!r}")
        if len(self.target) != 3 or any(t <= 0 for t in self.target):
            raise TransformError(f"resample target must be 3 positive values, got {self.target}")


@dataclass(frozen=True)
class CropMetaRecord:
    """Provenance of one extracted patch."""

    patch_stem: str
    source_stem: str
    index_offset: tuple[int, int, int]
    patch_size: tuple[int, int, int]
    stride: tuple[int, int, int]
    source_size: tuple[int, int, int]

    def __post_init__(self):
        for off, p, src in zip(self.index_offset, self.patch_size, self.source_size):
            if off < 0 or off + p > src:
                raise PatchError(
                    f"patch at {self.index_offset} size {self.patch_size} exceeds "
                    f"source size {self.source_size}"
                )

    def to_json(self) -> dict:
        return {
            "patch_stem": self.patch_stem,
            "source_stem": self.source_stem,
            "index_offset": list(self.index_offset),
            "patch_size": list(self.patch_size),
            "stride": list(self.stride),
            "source_size": list(self.source_size),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "CropMetaRecord":
        return cls(
            patch_stem=obj["patch_stem"],
            source_stem=obj["source_stem"],
            index_offset=tuple(obj["index_offset"]),
            patch_size=tuple(obj["patch_size"]),
            stride=tuple(obj["stride"]),
            source_size=tuple(obj["source_size"]),
        )


@dataclass(frozen=True)
class PatchItem:
    stem: str
    image: Volume
    label: Volume | None
    record: CropMetaRecord


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def _axis_linear_weights(n_out: int, scale: float, n_in: int):
    u = np.arange(n_out, dtype=np.float64) * scale
    f = np.floor(u)
    t = u - f
    i0 = np.clip(f.astype(np.int64), 0, n_in - 1)
    i1 = np.clip(f.astype(np.int64) + 1, 0, n_in - 1)
    return i0, i1, t


def resample(volume: Volume, spec: ResampleSpec, *, label: bool = False) -> Volume:
    """Resample onto a new grid sharing the volume's origin and direction.

    ``to-spacing`` picks the voxel count that preserves physical extent
    (round half away from zero, minimum 1) and then recomputes the spacing
    so the extent is exact. Images interpolate trilinearly with edge
    clamping; label volumes must use nearest neighbor.
    """
    if label and spec.interpolation != "nearest":
        raise TransformError("label volumes must be resampled with nearest interpolation")

    old_size = volume.size
    old_spacing = volume.spacing
    extent = [s * sp for s, sp in zip(old_size, old_spacing)]
    if spec.mode == "to-spacing":
        new_size = [max(1, _round_half_away(e / t)) for e, t in zip(extent, spec.target)]
    else:
        new_size = [int(t) for t in spec.target]
        if any(n != t for n, t in zip(new_size, spec.target)):
            raise TransformError(f"to-size target must be integers, got {spec.target}")
    new_spacing = tuple(e / n for e, n in zip(extent, new_size))
    scales = [ns / os for ns, os in zip(new_spacing, old_spacing)]

    if tuple(new_size) == old_size and all(abs(s - 1.0) < 1e-12 for s in scales):
        return volume.with_data(volume.data, spacing=new_spacing)

    if spec.interpolation == "nearest":
        idx = [
            np.clip(np.floor(np.arange(n, dtype=np.float64) * sc + 0.5).astype(np.int64), 0, l - 1)
            for n, sc, l in zip(new_size, scales, old_size)
        ]
        out = volume.data[np.ix_(idx[0], idx[1], idx[2])]
        return volume.with_data(np.ascontiguousarray(out), spacing=new_spacing)

    src = volume.data.astype(np.float64, copy=False)
    axes = [_axis_linear_weights(n, sc, l) for n, sc, l in zip(new_size, scales, old_size)]
    (z0, z1, tz), (y0, y1, ty), (x0, x1, tx) = axes
    wz = (1.0 - tz, tz)
    wy = (1.0 - ty, ty)
    wx = (1.0 - tx, tx)
    zi = (z0, z1)
    yi = (y0, y1)
    xi = (x0, x1)
    out = np.zeros(tuple(new_size), dtype=np.float64)
    for a, b, c in itertools.product((0, 1), repeat=3):
        w = (
            wz[a][:, None, None]
            * wy[b][None, :, None]
            * wx[c][None, None, :]
        )
        out += w * src[np.ix_(zi[a], yi[b], xi[c])]
    if np.issubdtype(volume.data.dtype, np.integer):
        out = np.rint(out)
    out = out.astype(volume.data.dtype)
    return volume.with_data(out, spacing=new_spacing)


def patch_positions(length: int, patch: int, stride: int) -> list[int]:
    """Start offsets of sliding windows along one axis.

    Multiples of ``stride`` with the final window snapped back so it ends
    exactly at ``length``; together the windows cover [0, length).
    """
    if patch <= 0 or stride <= 0:
        raise PatchError(f"patch and stride must be positive, got {patch}, {stride}")
    if stride > patch:
        raise PatchError(f"stride {stride} larger than patch {patch} leaves gaps")
    if length < patch:
        raise PatchError(f"axis length {length} smaller than patch {patch}")
    count = math.ceil((length - patch) / stride) + 1
    positions = [k * stride for k in range(count)]
    positions[-1] = length - patch
    return positions


def patch_stem_for(source_stem: str, offset: Sequence[int]) -> str:
    return f"{source_stem}__z{offset[0]}_y{offset[1]}_x{offset[2]}"


def _crop(volume: Volume, offset, size) -> Volume:
    sl = tuple(slice(o, o + s) for o, s in zip(offset, size))
    data = np.ascontiguousarray(volume.data[sl])
    origin = tuple(index_to_physical(volume, np.asarray(offset, dtype=float)))
    return volume.with_data(data, origin=origin)


def split_patches(
    image: Volume,
    label: Volume | None,
    patch_size: Sequence[int],
    stride: Sequence[int],
    source_stem: str,
) -> list[PatchItem]:
    """Regular-grid patch extraction over an image (and matching label).

    Image and label are cropped identically; each patch keeps the source
    spacing and direction with its origin moved to the patch corner voxel.
    Raises PatchError when the volume is smaller than the patch on any axis.
    """
    patch_size = tuple(int(p) for p in patch_size)
    stride = tuple(int(s) for s in stride)
    if label is not None and label.size != image.size:
        raise PatchError(f"label size {label.size} differs from image size {image.size}")
    per_axis = [patch_positions(l, p, s) for l, p, s in zip(image.size, patch_size, stride)]
    items = []
    for offset in itertools.product(*per_axis):
        record = CropMetaRecord(
            patch_stem=patch_stem_for(source_stem, offset),
            source_stem=source_stem,
            index_offset=offset,
            patch_size=patch_size,
            stride=stride,
            source_size=image.size,
        )
        items.append(
            PatchItem(
                stem=record.patch_stem,
                image=_crop(image, offset, patch_size),
                label=_crop(label, offset, patch_size) if label is not None else None,
                record=record,
            )
        )
    return items


def assemble_patches(
    patches: Iterable[Volume],
    records: Iterable[CropMetaRecord],
    reduce: Literal["mean", "max"] = "mean",
) -> Volume:
    """Inverse of :func:`split_patches`: recombine patches onto the source grid.

    Overlaps are combined by ``reduce``; ``mean`` divides by per-voxel
    coverage counts so a split/assemble round trip is exact. Voxels not
    covered by any patch are zero.
    """
    patches = list(patches)
    records = list(records)
    if not patches or len(patches) != len(records):
        raise PatchError("assemble_patches needs equally many patches and records")
    source_size = records[0].source_size
    if any(r.source_size != source_size for r in records):
        raise PatchError("records disagree on source size")

    first = patches[0]
    if reduce == "mean":
        acc = np.zeros(source_size, dtype=np.float64)
    elif reduce == "max":
        acc = np.full(source_size, -np.inf, dtype=np.float64)
    else:
        raise TransformError(f"unknown reduce mode {reduce!r}")
    counts = np.zeros(source_size, dtype=np.int64)

    for patch, record in zip(patches, records):
        sl = tuple(slice(o, o + p) for o, p in zip(record.index_offset, record.patch_size))
        block = patch.data.astype(np.float64, copy=False)
        if reduce == "mean":
            acc[sl] += block
        else:
            np.maximum(acc[sl], block, out=acc[sl])
        counts[sl] += 1

    covered = counts > 0
    if reduce == "mean":
        out = np.zeros(source_size, dtype=np.float64)
        np.divide(acc, counts, out=out, where=covered)
    else:
        out = np.where(covered, acc, 0.0)
    out = out.astype(first.data.dtype)

    # Source origin recovered from the first patch's world-space corner.
    off_xyz = np.asarray(records[0].index_offset, dtype=np.float64)[::-1]
    sp_xyz = np.asarray(first.spacing[::-1], dtype=np.float64)
    origin = np.asarray(first.origin) - first.direction @ (sp_xyz * off_xyz)
    return Volume(
        out,
        spacing=first.spacing,
        origin=tuple(origin),
        direction=first.direction,
    )


def remap_labels(volume: Volume, mapping: Mapping[int, int]) -> Volume:
    """Value substitution over a label volume; values absent from the mapping
    become 0, which implements partial class extraction via identity entries.
    """
    if not np.issubdtype(volume.data.dtype, np.integer):
        raise TransformError(f"label volume must be integer-typed, got {volume.element_type}")
    if volume.data.size and int(volume.data.min()) < 0:
        raise TransformError("label volume contains negative values")
    mapping = {int(k): int(v) for k, v in mapping.items()}
    if any(k < 0 or v < 0 for k, v in mapping.items()):
        raise TransformError("label map keys and values must be non-negative")

    top = max([int(volume.data.max()) if volume.data.size else 0, *mapping.keys(), 0])
    new_max = max(mapping.values(), default=0)
    dtype = volume.data.dtype
    if new_max > np.iinfo(dtype).max:
        dtype = np.dtype(np.int32)
    lut = np.zeros(top + 1, dtype=dtype)
    for old, new in mapping.items():
        lut[old] = new
    return volume.with_data(lut[volume.data])


def window_level(volume: Volume, center: float, width: float) -> Volume:
    """Linear window-level mapping to float32 [0, 1]."""
    if width <= 0:
        raise TransformError(f"window width must be positive, got {width}")
    lo = center - width / 2.0
    out = (volume.data.astype(np.float32) - np.float32(lo)) / np.float32(width)
    np.clip(out, 0.0, 1.0, out=out)
    return volume.with_data(out)


def instance_normalize(volume: Volume) -> Volume:
    """Zero-mean unit-variance normalization with a variance floor."""
    data = volume.data.astype(np.float64)
    mean = data.mean()
    std = data.std()
    out = ((data - mean) / max(std, 1e-8)).astype(np.float32)
    return volume.with_data(out)
