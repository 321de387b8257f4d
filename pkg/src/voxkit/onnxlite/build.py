"""Hand-rolled ONNX model serialization for small test/utility graphs."""

from __future__ import annotations

import struct

import numpy as np

from ..errors import PredictorError
from . import wire
from .model import DTYPE_TO_TENSOR

__all__ = ["tensor", "node", "value_info", "model_bytes"]

ATTR_FLOAT = 1
ATTR_INT = 2
ATTR_TENSOR = 4
ATTR_FLOATS = 6
ATTR_INTS = 7


def tensor(name: str, array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if array.dtype not in DTYPE_TO_TENSOR:
        raise PredictorError(f"cannot serialize dtype {array.dtype}")
    out = b"".join(wire.varint_field(1, int(d)) for d in array.shape)
    out += wire.varint_field(2, DTYPE_TO_TENSOR[array.dtype])
    out += wire.string_field(8, name)
    out += wire.bytes_field(9, np.ascontiguousarray(array).astype(array.dtype.newbyteorder("<")).tobytes())
    return out


def _attribute(name: str, value) -> bytes:
    out = wire.string_field(1, name)
    if isinstance(value, float):
        out += wire.float_field(2, value) + wire.varint_field(20, ATTR_FLOAT)
    elif isinstance(value, int):
        out += wire.varint_field(3, value) + wire.varint_field(20, ATTR_INT)
    elif isinstance(value, np.ndarray):
        out += wire.bytes_field(5, tensor(name, value)) + wire.varint_field(20, ATTR_TENSOR)
    elif isinstance(value, (tuple, list)) and all(isinstance(v, int) for v in value):
        packed = b"".join(wire.encode_varint(v) for v in value)
        out += wire.bytes_field(8, packed) + wire.varint_field(20, ATTR_INTS)
    elif isinstance(value, (tuple, list)):
        packed = b"".join(struct.pack("<f", float(v)) for v in value)
        out += wire.bytes_field(7, packed) + wire.varint_field(20, ATTR_FLOATS)
    else:
        raise PredictorError(f"unsupported attribute value {value!r}")
    return out


def node(op_type: str, inputs: list[str], outputs: list[str], **attrs) -> bytes:
    out = b"".join(wire.string_field(1, name) for name in inputs)
    out += b"".join(wire.string_field(2, name) for name in outputs)
    out += wire.string_field(4, op_type)
    out += b"".join(wire.bytes_field(5, _attribute(k, v)) for k, v in attrs.items())
    return out


def value_info(name: str, elem_type: int = 1, shape: tuple[int | None, ...] = ()) -> bytes:
    dims = b""
    for dim in shape:
        if dim is None:
            entry = wire.string_field(2, "d")
        else:
            entry = wire.varint_field(1, int(dim))
        dims += wire.bytes_field(1, entry)
    tensor_type = wire.varint_field(1, elem_type) + wire.bytes_field(2, dims)
    type_proto = wire.bytes_field(1, tensor_type)
    return wire.string_field(1, name) + wire.bytes_field(2, type_proto)


def model_bytes(
    nodes: list[bytes],
    inputs: list[bytes],
    outputs: list[bytes],
    initializers: list[bytes] = (),
    opset: int = 13,
    graph_name: str = "graph",
) -> bytes:
    graph = b"".join(wire.bytes_field(1, n) for n in nodes)
    graph += wire.string_field(2, graph_name)
    graph += b"".join(wire.bytes_field(5, t) for t in initializers)
    graph += b"".join(wire.bytes_field(11, vi) for vi in inputs)
    graph += b"".join(wire.bytes_field(12, vi) for vi in outputs)
    opset_id = wire.string_field(1, "") + wire.varint_field(2, opset)
    return (
        wire.varint_field(1, 8)  # ir_version
        + wire.string_field(2, "voxkit")
        + wire.bytes_field(7, graph)
        + wire.bytes_field(8, opset_id)
    )
