"""Stochastic augmentations over image/label pairs.

Randomness is counter-based (Philox) and keyed on
``(seed, sample stem, transform name)`` so results do not depend on
processing order or worker count. Geometric transforms draw their
parameters once and apply them identically to image and label; intensity
and erasure transforms leave the label untouched.
"""

from __future__ import annotations

import hashlib
from typing import Mapping

import numpy as np

from .errors import TransformError
from .volume import Volume

__all__ = ["TRANSFORM_NAMES", "derive_rng", "augment"]

TRANSFORM_NAMES = ("roll", "flip", "erase_continuous", "erase_discrete", "rotate3d", "gamma")


def derive_rng(seed: int, *parts: str) -> np.random.Generator:
    """Deterministic generator keyed on the seed plus arbitrary labels."""
    digest = hashlib.sha256("|".join([str(int(seed)), *parts]).encode()).digest()
    key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


def _roll(image, label, rng, params):
    max_shift = params.get("max_shift")
    if max_shift is None:
        max_shift = [max(1, s // 4) for s in image.size]
    elif np.isscalar(max_shift):
        max_shift = [int(max_shift)] * 3
    shifts = tuple(int(rng.integers(-m, m + 1)) for m in max_shift)
    out_image = image.with_data(np.roll(image.data, shifts, axis=(0, 1, 2)))
    out_label = label.with_data(np.roll(label.data, shifts, axis=(0, 1, 2))) if label else None
    return out_image, out_label


def _flip(image, label, rng, params):
    p = float(params.get("p", 0.5))
    axes = tuple(int(a) for a in range(3) if rng.random() < p)
    if not axes:
        return image, label
    out_image = image.with_data(np.ascontiguousarray(np.flip(image.data, axis=axes)))
    out_label = (
        label.with_data(np.ascontiguousarray(np.flip(label.data, axis=axes))) if label else None
    )
    return out_image, out_label


def _erase_fill(image, params):
    fill = params.get("fill")
    return image.data.min() if fill is None else fill


def _erase_continuous(image, label, rng, params):
    min_frac = float(params.get("min_frac", 0.1))
    max_frac = float(params.get("max_frac", 0.3))
    fill = _erase_fill(image, params)
    data = image.data.copy()
    box = [max(1, int(round(rng.uniform(min_frac, max_frac) * s))) for s in image.size]
    start = [int(rng.integers(0, s - b + 1)) for s, b in zip(image.size, box)]
    sl = tuple(slice(st, st + b) for st, b in zip(start, box))
    data[sl] = fill
    return image.with_data(data), label


def _erase_discrete(image, label, rng, params):
    count = params.get("count")
    if count is None:
        count = max(1, int(round(float(params.get("frac", 0.005)) * image.data.size)))
    fill = _erase_fill(image, params)
    data = image.data.copy()
    flat = rng.integers(0, data.size, size=int(count))
    data.reshape(-1)[flat] = fill
    return image.with_data(data), label


def _rotate_plane_arbitrary(data, angle_deg, axis, order):
    """In-plane rotation about the slice center; clamp-to-edge sampling."""
    moved = np.moveaxis(data, axis, 0)
    n0, h, w = moved.shape
    theta = np.deg2rad(angle_deg)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    # inverse mapping: output pixel pulls from the source rotated by -angle
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    sy = cos_t * (yy - cy) - sin_t * (xx - cx) + cy
    sx = sin_t * (yy - cy) + cos_t * (xx - cx) + cx
    if order == 0:
        iy = np.clip(np.floor(sy + 0.5).astype(np.int64), 0, h - 1)
        ix = np.clip(np.floor(sx + 0.5).astype(np.int64), 0, w - 1)
        out = moved[:, iy, ix]
    else:
        fy = np.floor(sy)
        fx = np.floor(sx)
        ty = sy - fy
        tx = sx - fx
        y0 = np.clip(fy.astype(np.int64), 0, h - 1)
        y1 = np.clip(fy.astype(np.int64) + 1, 0, h - 1)
        x0 = np.clip(fx.astype(np.int64), 0, w - 1)
        x1 = np.clip(fx.astype(np.int64) + 1, 0, w - 1)
        src = moved.astype(np.float64)
        out = (
            src[:, y0, x0] * ((1 - ty) * (1 - tx))
            + src[:, y0, x1] * ((1 - ty) * tx)
            + src[:, y1, x0] * (ty * (1 - tx))
            + src[:, y1, x1] * (ty * tx)
        )
        if np.issubdtype(data.dtype, np.integer):
            out = np.rint(out)
        out = out.astype(data.dtype)
    return np.ascontiguousarray(np.moveaxis(out, 0, axis))


def _rotate3d(image, label, rng, params):
    axis = params.get("axis")
    axis = int(rng.integers(0, 3)) if axis is None else int(axis)
    plane = tuple(a for a in range(3) if a != axis)
    if params.get("mode", "exact") == "exact":
        k = int(rng.choice([1, 2, 3]))
        if k != 2 and image.size[plane[0]] != image.size[plane[1]]:
            raise TransformError(
                f"exact 90-degree rotation about axis {axis} needs square in-plane dims, "
                f"got {image.size}"
            )
        out_image = image.with_data(np.ascontiguousarray(np.rot90(image.data, k, axes=plane)))
        out_label = (
            label.with_data(np.ascontiguousarray(np.rot90(label.data, k, axes=plane)))
            if label
            else None
        )
        return out_image, out_label
    lo, hi = params.get("angle_range", (-15.0, 15.0))
    angle = float(rng.uniform(lo, hi))
    out_image = image.with_data(_rotate_plane_arbitrary(image.data, angle, axis, order=1))
    out_label = (
        label.with_data(_rotate_plane_arbitrary(label.data, angle, axis, order=0))
        if label
        else None
    )
    return out_image, out_label


def _gamma(image, label, rng, params):
    lo = float(image.data.min())
    hi = float(image.data.max())
    if lo < -1e-6 or hi > 1.0 + 1e-6:
        raise TransformError(
            f"gamma expects a [0, 1]-normalized image, got range [{lo}, {hi}]"
        )
    g_lo, g_hi = params.get("gamma_range", (0.7, 1.5))
    gamma = float(rng.uniform(g_lo, g_hi))
    out = np.clip(image.data.astype(np.float32), 0.0, 1.0) ** np.float32(gamma)
    return image.with_data(out), label


_DISPATCH = {
    "roll": _roll,
    "flip": _flip,
    "erase_continuous": _erase_continuous,
    "erase_discrete": _erase_discrete,
    "rotate3d": _rotate3d,
    "gamma": _gamma,
}


def augment(
    image: Volume,
    label: Volume | None,
    transform: str,
    seed: int,
    stem: str = "",
    params: Mapping | None = None,
) -> tuple[Volume, Volume | None]:
    """Apply one named stochastic transform to an image/label pair."""
    if transform not in _DISPATCH:
        raise TransformError(f"unknown transform {transform!r}; choose from {TRANSFORM_NAMES}")
    if label is not None and label.size != image.size:
        raise TransformError(f"label size {label.size} differs from image size {image.size}")
    rng = derive_rng(seed, stem, transform)
    return _DISPATCH[transform](image, label, rng, dict(params or {}))
