"""Protocol-buffers wire-format primitives (the subset ONNX files use).

A message is a sequence of (tag, value) fields; tag = (field << 3) | type.
Wire types: 0 varint, 1 fixed64, 2 length-delimited, 5 fixed32.
"""

from __future__ import annotations

import struct
from typing import Iterator

from ..errors import PredictorError

VARINT = 0
FIXED64 = 1
LENGTH = 2
FIXED32 = 5


def read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise PredictorError("truncated varint in model file")
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7
        if shift > 70:
            raise PredictorError("malformed varint in model file")


def iter_fields(buf: bytes) -> Iterator[tuple[int, int, object]]:
    """Yield (field_number, wire_type, value); value is int or bytes."""
    pos = 0
    while pos < len(buf):
        tag, pos = read_varint(buf, pos)
        field, wire = tag >> 3, tag & 0x7
        if wire == VARINT:
            value, pos = read_varint(buf, pos)
        elif wire == FIXED64:
            if pos + 8 > len(buf):
                raise PredictorError("truncated fixed64 field")
            value = buf[pos : pos + 8]
            pos += 8
        elif wire == LENGTH:
            length, pos = read_varint(buf, pos)
            if pos + length > len(buf):
                raise PredictorError("truncated length-delimited field")
            value = buf[pos : pos + length]
            pos += length
        elif wire == FIXED32:
            if pos + 4 > len(buf):
                raise PredictorError("truncated fixed32 field")
            value = buf[pos : pos + 4]
            pos += 4
        else:
            raise PredictorError(f"unsupported wire type {wire}")
        yield field, wire, value


def encode_varint(value: int) -> bytes:
    if value < 0:
        value &= (1 << 64) - 1  # two's complement, 10-byte form
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def tag(field: int, wire: int) -> bytes:
    return encode_varint((field << 3) | wire)


def varint_field(field: int, value: int) -> bytes:
    return tag(field, VARINT) + encode_varint(value)


def bytes_field(field: int, payload: bytes) -> bytes:
    return tag(field, LENGTH) + encode_varint(len(payload)) + payload


def string_field(field: int, text: str) -> bytes:
    return bytes_field(field, text.encode("utf-8"))


def float_field(field: int, value: float) -> bytes:
    return tag(field, FIXED32) + struct.pack("<f", value)
