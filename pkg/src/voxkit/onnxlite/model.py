"""ONNX model file parsing into plain dataclasses (no protobuf dependency).

Only the message fields the executor needs are decoded; everything else is
skipped field-by-field, so files written by standard exporters load fine.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import PredictorError
from . import wire

__all__ = ["OnnxModel", "OnnxGraph", "OnnxNode", "OnnxValueInfo", "parse_model"]

TENSOR_DTYPES = {
    1: np.float32,
    2: np.uint8,
    3: np.int8,
    4: np.uint16,
    5: np.int16,
    6: np.int32,
    7: np.int64,
    9: np.bool_,
    11: np.float64,
    12: np.uint32,
    13: np.uint64,
}
DTYPE_TO_TENSOR = {np.dtype(v): k for k, v in TENSOR_DTYPES.items()}


@dataclass(frozen=True)
class OnnxValueInfo:
    name: str
    elem_type: int | None
    shape: tuple[int | None, ...] | None  # None entries are symbolic dims


@dataclass(frozen=True)
class OnnxNode:
    op_type: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    attrs: dict
    name: str = ""


@dataclass(frozen=True)
class OnnxGraph:
    nodes: tuple[OnnxNode, ...]
    initializers: dict[str, np.ndarray]
    inputs: tuple[OnnxValueInfo, ...]
    outputs: tuple[OnnxValueInfo, ...]
    name: str = ""


@dataclass(frozen=True)
class OnnxModel:
    graph: OnnxGraph
    ir_version: int = 0
    opset: int = 0
    producer: str = ""


def _signed(value: int) -> int:
    return value - (1 << 64) if value >= (1 << 63) else value


def _parse_tensor(buf: bytes) -> tuple[str, np.ndarray]:
    dims: list[int] = []
    data_type = None
    raw: bytes | None = None
    name = ""
    float_data: list[float] = []
    int32_data: list[int] = []
    int64_data: list[int] = []
    double_data: list[float] = []
    for field_no, wt, value in wire.iter_fields(buf):
        if field_no == 1 and wt == wire.VARINT:
            dims.append(_signed(value))
        elif field_no == 2 and wt == wire.VARINT:
            data_type = value
        elif field_no == 4:  # float_data, packed or not
            if wt == wire.LENGTH:
                float_data.extend(struct.unpack(f"<{len(value) // 4}f", value))
            else:
                float_data.append(struct.unpack("<f", value)[0])
        elif field_no == 5:
            if wt == wire.LENGTH:
                pos = 0
                while pos < len(value):
                    v, pos = wire.read_varint(value, pos)
                    int32_data.append(_signed(v))
            else:
                int32_data.append(_signed(value))
        elif field_no == 7:
            if wt == wire.LENGTH:
                pos = 0
                while pos < len(value):
                    v, pos = wire.read_varint(value, pos)
                    int64_data.append(_signed(v))
            else:
                int64_data.append(_signed(value))
        elif field_no == 8 and wt == wire.LENGTH:
            name = value.decode("utf-8")
        elif field_no == 9 and wt == wire.LENGTH:
            raw = value
        elif field_no == 10:
            if wt == wire.LENGTH:
                double_data.extend(struct.unpack(f"<{len(value) // 8}d", value))
            else:
                double_data.append(struct.unpack("<d", value)[0])
    if data_type is None or data_type not in TENSOR_DTYPES:
        raise PredictorError(f"initializer {name!r} has unsupported data type {data_type}")
    dtype = np.dtype(TENSOR_DTYPES[data_type])
    shape = tuple(dims)
    if raw is not None:
        arr = np.frombuffer(raw, dtype=dtype.newbyteorder("<")).astype(dtype, copy=False)
    elif float_data:
        arr = np.array(float_data, dtype=dtype)
    elif int64_data:
        arr = np.array(int64_data, dtype=dtype)
    elif int32_data:
        arr = np.array(int32_data, dtype=dtype)
    elif double_data:
        arr = np.array(double_data, dtype=dtype)
    else:
        arr = np.zeros(shape, dtype=dtype)
    try:
        return name, arr.reshape(shape)
    except ValueError as exc:
        raise PredictorError(f"initializer {name!r}: {exc}") from exc


def _parse_attribute(buf: bytes) -> tuple[str, object]:
    name = ""
    value: object = None
    floats: list[float] = []
    ints: list[int] = []
    for field_no, wt, raw in wire.iter_fields(buf):
        if field_no == 1 and wt == wire.LENGTH:
            name = raw.decode("utf-8")
        elif field_no == 2:
            value = struct.unpack("<f", raw)[0]
        elif field_no == 3 and wt == wire.VARINT:
            value = _signed(raw)
        elif field_no == 4 and wt == wire.LENGTH:
            value = raw
        elif field_no == 5 and wt == wire.LENGTH:
            value = _parse_tensor(raw)[1]
        elif field_no == 7:
            if wt == wire.LENGTH:
                floats.extend(struct.unpack(f"<{len(raw) // 4}f", raw))
            else:
                floats.append(struct.unpack("<f", raw)[0])
        elif field_no == 8:
            if wt == wire.LENGTH:
                pos = 0
                while pos < len(raw):
                    v, pos = wire.read_varint(raw, pos)
                    ints.append(_signed(v))
            else:
                ints.append(_signed(raw))
    if floats:
        value = tuple(floats)
    elif ints:
        value = tuple(ints)
    return name, value


def _parse_node(buf: bytes) -> OnnxNode:
    inputs: list[str] = []
    outputs: list[str] = []
    op_type = ""
    name = ""
    attrs: dict = {}
    for field_no, wt, value in wire.iter_fields(buf):
        if field_no == 1 and wt == wire.LENGTH:
            inputs.append(value.decode("utf-8"))
        elif field_no == 2 and wt == wire.LENGTH:
            outputs.append(value.decode("utf-8"))
        elif field_no == 3 and wt == wire.LENGTH:
            name = value.decode("utf-8")
        elif field_no == 4 and wt == wire.LENGTH:
            op_type = value.decode("utf-8")
        elif field_no == 5 and wt == wire.LENGTH:
            key, attr_value = _parse_attribute(value)
            attrs[key] = attr_value
    return OnnxNode(op_type=op_type, inputs=tuple(inputs), outputs=tuple(outputs), attrs=attrs, name=name)


def _parse_dims(buf: bytes) -> tuple[int | None, ...]:
    dims: list[int | None] = []
    for field_no, wt, value in wire.iter_fields(buf):
        if field_no != 1 or wt != wire.LENGTH:
            continue
        dim: int | None = None
        for sub_no, sub_wt, sub_value in wire.iter_fields(value):
            if sub_no == 1 and sub_wt == wire.VARINT:
                dim = _signed(sub_value)
            elif sub_no == 2:
                dim = None  # symbolic
        dims.append(dim)
    return tuple(dims)


def _parse_value_info(buf: bytes) -> OnnxValueInfo:
    name = ""
    elem_type = None
    shape = None
    for field_no, wt, value in wire.iter_fields(buf):
        if field_no == 1 and wt == wire.LENGTH:
            name = value.decode("utf-8")
        elif field_no == 2 and wt == wire.LENGTH:  # TypeProto
            for t_no, t_wt, t_value in wire.iter_fields(value):
                if t_no == 1 and t_wt == wire.LENGTH:  # tensor_type
                    for tt_no, tt_wt, tt_value in wire.iter_fields(t_value):
                        if tt_no == 1 and tt_wt == wire.VARINT:
                            elem_type = tt_value
                        elif tt_no == 2 and tt_wt == wire.LENGTH:
                            shape = _parse_dims(tt_value)
    return OnnxValueInfo(name=name, elem_type=elem_type, shape=shape)


def _parse_graph(buf: bytes) -> OnnxGraph:
    nodes: list[OnnxNode] = []
    initializers: dict[str, np.ndarray] = {}
    inputs: list[OnnxValueInfo] = []
    outputs: list[OnnxValueInfo] = []
    name = ""
    for field_no, wt, value in wire.iter_fields(buf):
        if field_no == 1 and wt == wire.LENGTH:
            nodes.append(_parse_node(value))
        elif field_no == 2 and wt == wire.LENGTH:
            name = value.decode("utf-8")
        elif field_no == 5 and wt == wire.LENGTH:
            tensor_name, arr = _parse_tensor(value)
            initializers[tensor_name] = arr
        elif field_no == 11 and wt == wire.LENGTH:
            inputs.append(_parse_value_info(value))
        elif field_no == 12 and wt == wire.LENGTH:
            outputs.append(_parse_value_info(value))
    return OnnxGraph(
        nodes=tuple(nodes),
        initializers=initializers,
        inputs=tuple(inputs),
        outputs=tuple(outputs),
        name=name,
    )


def parse_model(blob: bytes) -> OnnxModel:
    graph = None
    ir_version = 0
    opset = 0
    producer = ""
    for field_no, wt, value in wire.iter_fields(blob):
        if field_no == 1 and wt == wire.VARINT:
            ir_version = _signed(value)
        elif field_no == 2 and wt == wire.LENGTH:
            producer = value.decode("utf-8", "replace")
        elif field_no == 7 and wt == wire.LENGTH:
            graph = _parse_graph(value)
        elif field_no == 8 and wt == wire.LENGTH:
            for op_no, op_wt, op_value in wire.iter_fields(value):
                if op_no == 2 and op_wt == wire.VARINT:
                    opset = max(opset, _signed(op_value))
    if graph is None:
        raise PredictorError("model file contains no graph")
    return OnnxModel(graph=graph, ir_version=ir_version, opset=opset, producer=producer)
