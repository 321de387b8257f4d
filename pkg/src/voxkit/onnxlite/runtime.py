"""Graph execution for the supported ONNX op subset.

Nodes are evaluated in file order (ONNX graphs are topologically sorted);
values live in a name -> ndarray environment seeded with the initializers
and the caller's feeds. Elementwise ops broadcast with numpy semantics.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import PredictorError
from .model import OnnxGraph, OnnxModel, OnnxNode, parse_model

__all__ = ["run_graph", "load_model", "GraphRunner"]


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _op_identity(node, values):
    return values[0]


def _op_neg(node, values):
    return -values[0]


def _op_add(node, values):
    return values[0] + values[1]


def _op_sub(node, values):
    return values[0] - values[1]


def _op_mul(node, values):
    return values[0] * values[1]


def _op_div(node, values):
    return values[0] / values[1]


def _op_min(node, values):
    out = values[0]
    for v in values[1:]:
        out = np.minimum(out, v)
    return out


def _op_max(node, values):
    out = values[0]
    for v in values[1:]:
        out = np.maximum(out, v)
    return out


def _op_relu(node, values):
    return np.maximum(values[0], 0)


def _op_sigmoid(node, values):
    x = values[0]
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)), np.exp(x) / (1.0 + np.exp(x)))


def _op_exp(node, values):
    return np.exp(values[0])


def _op_clip(node, values):
    x = values[0]
    lo = values[1] if len(values) > 1 and values[1] is not None else None
    hi = values[2] if len(values) > 2 and values[2] is not None else None
    return np.clip(x, lo, hi)


def _op_concat(node, values):
    axis = int(node.attrs.get("axis", 0))
    return np.concatenate(values, axis=axis)


def _op_softmax(node, values):
    axis = int(node.attrs.get("axis", -1))
    return _softmax(values[0], axis)


def _op_reshape(node, values):
    shape = [int(s) for s in np.asarray(values[1]).ravel()]
    data = values[0]
    shape = [data.shape[i] if s == 0 else s for i, s in enumerate(shape)]
    return data.reshape(shape)


def _op_cast(node, values):
    from .model import TENSOR_DTYPES

    to = int(node.attrs.get("to", 1))
    if to not in TENSOR_DTYPES:
        raise PredictorError(f"Cast to unsupported data type {to}")
    return values[0].astype(TENSOR_DTYPES[to])


def _op_constant(node, values):
    if "value" not in node.attrs:
        raise PredictorError("Constant node without a value attribute")
    return node.attrs["value"]


_OPS = {
    "Identity": _op_identity,
    "Neg": _op_neg,
    "Add": _op_add,
    "Sub": _op_sub,
    "Mul": _op_mul,
    "Div": _op_div,
    "Min": _op_min,
    "Max": _op_max,
    "Relu": _op_relu,
    "Sigmoid": _op_sigmoid,
    "Exp": _op_exp,
    "Clip": _op_clip,
    "Concat": _op_concat,
    "Softmax": _op_softmax,
    "Reshape": _op_reshape,
    "Cast": _op_cast,
    "Constant": _op_constant,
}

SUPPORTED_OPS = tuple(sorted(_OPS))


def run_graph(graph: OnnxGraph, feeds: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    env: dict[str, np.ndarray] = dict(graph.initializers)
    env.update(feeds)
    for node in graph.nodes:
        fn = _OPS.get(node.op_type)
        if fn is None:
            raise PredictorError(
                f"unsupported op {node.op_type!r}; this runtime supports {SUPPORTED_OPS}"
            )
        values = []
        for name in node.inputs:
            if name == "":
                values.append(None)  # optional input slot
            elif name in env:
                values.append(env[name])
            else:
                raise PredictorError(f"node {node.op_type} input {name!r} is not available")
        result = fn(node, values)
        outputs = result if isinstance(result, tuple) else (result,)
        for name, value in zip(node.outputs, outputs):
            env[name] = np.asarray(value)
    missing = [vi.name for vi in graph.outputs if vi.name not in env]
    if missing:
        raise PredictorError(f"graph outputs never produced: {missing}")
    return {vi.name: env[vi.name] for vi in graph.outputs}


def load_model(path) -> OnnxModel:
    path = Path(path)
    if not path.is_file():
        raise PredictorError(f"model file not found: {path}")
    return parse_model(path.read_bytes())


class GraphRunner:
    """Parsed model plus a run() bound to its graph."""

    def __init__(self, model: OnnxModel):
        self.model = model

    @classmethod
    def from_path(cls, path) -> "GraphRunner":
        return cls(load_model(path))

    def input_shape(self, name: str) -> tuple[int | None, ...] | None:
        for vi in self.model.graph.inputs:
            if vi.name == name:
                return vi.shape
        return None

    def run(self, feeds: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        return run_graph(self.model.graph, feeds)
