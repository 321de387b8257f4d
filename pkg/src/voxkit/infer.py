"""Sliding-window volumetric inference with pluggable patch predictors.

A predictor maps a float32 patch of exactly the configured patch size to a
per-class probability array of shape (classes, *patch); the engine slides
windows with the configured stride, mean-aggregates overlaps with coverage
counts, and emits an argmax label volume carrying the input geometry.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import PatchError, PredictorError, TransformError
from .ops import instance_normalize, patch_positions, window_level
from .onnxlite.runtime import GraphRunner
from .volume import Volume

__all__ = [
    "SlidingWindowConfig",
    "PatchPredictor",
    "ThresholdPredictor",
    "OnnxPredictor",
    "InferenceResult",
    "sliding_window_infer",
    "threshold_predictor",
    "onnx_predictor",
]

PreprocessStep = tuple[str, dict]


@runtime_checkable
class PatchPredictor(Protocol):
    """Deterministic patch-to-probability function."""

    num_classes: int

    def __call__(self, patch: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class SlidingWindowConfig:
    patch_size: tuple[int, int, int]
    stride: tuple[int, int, int]
    aggregation: str = "mean"
    output: str = "argmax-labels"  # or "probabilities" to keep the per-class array
    preprocess: tuple[PreprocessStep, ...] = ()

    def __post_init__(self):
        patch = tuple(int(p) for p in self.patch_size)
        stride = tuple(int(s) for s in self.stride)
        if len(patch) != 3 or len(stride) != 3 or min(patch) <= 0 or min(stride) <= 0:
            raise PatchError(f"patch {patch} and stride {stride} must be positive triples")
        if any(s > p for s, p in zip(stride, patch)):
            raise PatchError(f"stride {stride} must not exceed patch size {patch}")
        if self.aggregation != "mean":
            raise TransformError(f"unsupported aggregation {self.aggregation!r}")
        if self.output not in ("argmax-labels", "probabilities"):
            raise TransformError(f"unsupported output mode {self.output!r}")
        object.__setattr__(self, "patch_size", patch)
        object.__setattr__(self, "stride", stride)
        object.__setattr__(self, "preprocess", tuple((n, dict(p)) for n, p in self.preprocess))


@dataclass(frozen=True)
class InferenceResult:
    labels: Volume
    probabilities: np.ndarray | None  # (classes, Z, Y, X) float32 when requested
    invocations: int
    padding: tuple[tuple[int, int], ...] | None


class ThresholdPredictor:
    """Pointwise two-class predictor: class 1 inside [lo, hi], inclusive.

    A desk-scale stand-in for a trained network; pointwise, so the
    sliding-window result must equal whole-volume thresholding.
    """

    num_classes = 2

    def __init__(self, lo: float, hi: float):
        if hi < lo:
            raise PredictorError(f"threshold window [{lo}, {hi}] is empty")
        self.lo = float(lo)
        self.hi = float(hi)

    def __call__(self, patch: np.ndarray) -> np.ndarray:
        inside = ((patch >= self.lo) & (patch <= self.hi)).astype(np.float32)
        return np.stack([1.0 - inside, inside])


def threshold_predictor(lo: float, hi: float) -> ThresholdPredictor:
    return ThresholdPredictor(lo, hi)


class OnnxPredictor:
    """Runs an ONNX graph as the patch predictor.

    Input is fed as NCDHW float32 (batch 1, one channel); the output must
    be NCDHW with ``class_count`` channels, optionally passed through a
    softmax when ``apply_softmax`` is set in the io spec.
    """

    def __init__(self, model_path, io_spec: dict):
        for key in ("input_name", "output_name", "class_count"):
            if key not in io_spec:
                raise PredictorError(f"io spec missing required key {key!r}")
        self.runner = GraphRunner.from_path(model_path)
        opset = self.runner.model.opset
        if opset and opset < 13:
            raise PredictorError(f"model opset {opset} unsupported; need >= 13")
        self.input_name = str(io_spec["input_name"])
        self.output_name = str(io_spec["output_name"])
        self.apply_softmax = bool(io_spec.get("apply_softmax", False))
        self.num_classes = int(io_spec["class_count"])
        matches = [vi for vi in self.runner.model.graph.inputs if vi.name == self.input_name]
        if not matches:
            names = [vi.name for vi in self.runner.model.graph.inputs]
            raise PredictorError(f"model has no input {self.input_name!r}; inputs are {names}")
        self._declared_shape = matches[0].shape  # None when the model omits it

    def _check_shape(self, fed: tuple[int, ...]) -> None:
        declared = self._declared_shape
        if declared is None:
            return
        if len(declared) != len(fed):
            raise PredictorError(f"model input rank mismatch: expected {declared}, got {fed}")
        for want, got in zip(declared, fed):
            if want is not None and want != got:
                raise PredictorError(f"model input shape mismatch: expected {declared}, got {fed}")

    def __call__(self, patch: np.ndarray) -> np.ndarray:
        fed = patch.astype(np.float32)[None, None]
        self._check_shape(fed.shape)
        outputs = self.runner.run({self.input_name: fed})
        if self.output_name not in outputs:
            raise PredictorError(
                f"model has no output {self.output_name!r}; outputs are {list(outputs)}"
            )
        out = np.asarray(outputs[self.output_name], dtype=np.float32)
        expected = (1, self.num_classes, *patch.shape)
        if out.shape != expected:
            raise PredictorError(f"model output shape mismatch: expected {expected}, got {out.shape}")
        out = out[0]
        if self.apply_softmax:
            shifted = out - out.max(axis=0, keepdims=True)
            e = np.exp(shifted)
            out = e / e.sum(axis=0, keepdims=True)
        return out


def onnx_predictor(model_path, io_spec) -> OnnxPredictor:
    """Build a predictor from a model path and an io spec (dict or JSON path)."""
    if not isinstance(io_spec, dict):
        io_spec = json.loads(Path(io_spec).read_text(encoding="utf-8"))
    return OnnxPredictor(model_path, io_spec)


def _apply_preprocess(volume: Volume, steps: Sequence[PreprocessStep]) -> Volume:
    out = volume
    for name, params in steps:
        if name == "window_level":
            out = window_level(out, params["center"], params["width"])
        elif name == "instance_normalize":
            out = instance_normalize(out)
        else:
            raise TransformError(f"unknown preprocessing step {name!r}")
    return out


def sliding_window_infer(
    volume: Volume,
    predictor: PatchPredictor,
    config: SlidingWindowConfig,
    progress: Callable[[int, int], None] | None = None,
) -> InferenceResult:
    """Predict a full volume by aggregating overlapping patch predictions.

    Volumes smaller than the patch are symmetrically zero-padded after
    preprocessing and the output is cropped back (noted on the result).
    The label volume inherits the input geometry bit-exactly.
    """
    prepared = _apply_preprocess(volume, config.preprocess)
    arr = prepared.data.astype(np.float32, copy=False)

    pads = []
    for axis_len, patch in zip(arr.shape, config.patch_size):
        need = max(0, patch - axis_len)
        pads.append((need // 2, need - need // 2))
    padded = any(before or after for before, after in pads)
    if padded:
        arr = np.pad(arr, pads, mode="constant", constant_values=0.0)

    num_classes = int(predictor.num_classes)
    if num_classes < 1:
        raise PredictorError(f"predictor must declare num_classes >= 1, got {num_classes}")
    positions = [
        patch_positions(axis_len, patch, stride)
        for axis_len, patch, stride in zip(arr.shape, config.patch_size, config.stride)
    ]
    total = len(positions[0]) * len(positions[1]) * len(positions[2])

    acc = np.zeros((num_classes, *arr.shape), dtype=np.float64)
    counts = np.zeros(arr.shape, dtype=np.int64)
    done = 0
    for offset in itertools.product(*positions):
        sl = tuple(slice(o, o + p) for o, p in zip(offset, config.patch_size))
        patch = np.ascontiguousarray(arr[sl])
        probs = np.asarray(predictor(patch))
        if probs.shape != (num_classes, *config.patch_size):
            raise PredictorError(
                f"predictor output shape mismatch: expected {(num_classes, *config.patch_size)}, "
                f"got {probs.shape}"
            )
        acc[(slice(None), *sl)] += probs
        counts[sl] += 1
        done += 1
        if progress is not None:
            progress(done, total)

    mean = acc / counts  # cover property guarantees counts >= 1 everywhere
    if padded:
        crop = tuple(
            slice(before, dim - after)
            for (before, after), dim in zip(pads, arr.shape)
        )
        mean = mean[(slice(None), *crop)]

    label_dtype = np.uint8 if num_classes <= 256 else np.int32
    labels = np.argmax(mean, axis=0).astype(label_dtype)  # ties -> lowest class index
    notes = volume.notes
    if padded:
        notes = notes + (f"inference zero-padded by {tuple(pads)} and cropped back",)
    label_volume = Volume(
        labels,
        spacing=volume.spacing,
        origin=volume.origin,
        direction=volume.direction,
        notes=notes,
    )
    probabilities = mean.astype(np.float32) if config.output == "probabilities" else None
    return InferenceResult(
        labels=label_volume,
        probabilities=probabilities,
        invocations=done,
        padding=tuple(pads) if padded else None,
    )
