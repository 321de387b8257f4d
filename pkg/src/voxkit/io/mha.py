"""Single-file MetaImage (.mha) reader and writer.

The header is a plain-text ``Key = Value`` block terminated by the
``ElementDataFile = LOCAL`` line; the voxel payload follows immediately,
raw or zlib-compressed, little-endian, X fastest. Split .mhd+.raw files
are rejected. Unrecognized header keys are preserved on the Volume and
re-emitted on write.
"""

from __future__ import annotations

import re
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import (
    CompressedStreamError,
    MhaHeaderError,
    PayloadSizeError,
    UnsupportedElementTypeError,
    UnsupportedFormatError,
)
from ..volume import Volume

__all__ = ["read_mha", "read_mha_bytes", "write_mha", "mha_bytes", "read_mha_info", "MET_TO_DTYPE"]

MET_TO_DTYPE = {
    "MET_CHAR": np.int8,
    "MET_UCHAR": np.uint8,
    "MET_SHORT": np.int16,
    "MET_USHORT": np.uint16,
    "MET_INT": np.int32,
    "MET_UINT": np.uint32,
    "MET_FLOAT": np.float32,
    "MET_DOUBLE": np.float64,
}
DTYPE_TO_MET = {np.dtype(v): k for k, v in MET_TO_DTYPE.items()}

_KNOWN_KEYS = {
    "ObjectType",
    "NDims",
    "DimSize",
    "ElementType",
    "ElementSpacing",
    "Offset",
    "TransformMatrix",
    "CompressedData",
    "CompressedDataSize",
    "ElementDataFile",
    "BinaryData",
    "BinaryDataByteOrderMSB",
}
_KEY_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_\-]*$")


@dataclass(frozen=True)
class MhaInfo:
    """Geometry parsed from a header, without decoding the payload."""

    size: tuple[int, int, int]  # [Z, Y, X]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    direction: np.ndarray
    dtype: np.dtype
    compressed: bool
    extra_meta: tuple[tuple[str, str], ...]
    payload_offset: int
    compressed_size: int | None


def _split_header(blob: bytes) -> tuple[list[tuple[str, str]], int]:
    pairs: list[tuple[str, str]] = []
    pos = 0
    while True:
        nl = blob.find(b"\n", pos)
        if nl < 0:
            raise MhaHeaderError("header ended before ElementDataFile")
        raw_line = blob[pos:nl].rstrip(b"\r")
        pos = nl + 1
        try:
            line = raw_line.decode("ascii")
        except UnicodeDecodeError as exc:
            raise MhaHeaderError(f"non-ASCII bytes in header line: {raw_line[:40]!r}") from exc
        if "=" not in line:
            raise MhaHeaderError(f"header line without '=': {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not _KEY_RE.match(key):
            raise MhaHeaderError(f"malformed header key {key!r}")
        pairs.append((key, value))
        if key == "ElementDataFile":
            return pairs, pos


def _parse_bool(key: str, value: str) -> bool:
    low = value.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    raise MhaHeaderError(f"{key} must be True or False, got {value!r}")


def _parse_numbers(key: str, value: str, count: int, cast):
    parts = value.split()
    if len(parts) != count:
        raise MhaHeaderError(f"{key} must have {count} values, got {value!r}")
    try:
        return [cast(p) for p in parts]
    except ValueError as exc:
        raise MhaHeaderError(f"cannot parse {key} value {value!r}") from exc


def _parse_header(blob: bytes) -> MhaInfo:
    pairs, payload_offset = _split_header(blob)
    fields = {}
    extra: list[tuple[str, str]] = []
    for key, value in pairs:
        if key in _KNOWN_KEYS:
            if key in fields:
                raise MhaHeaderError(f"duplicate header key {key}")
            fields[key] = value
        else:
            extra.append((key, value))

    for required in ("ObjectType", "NDims", "DimSize", "ElementType", "ElementDataFile"):
        if required not in fields:
            raise MhaHeaderError(f"missing required header key {required}")

    if fields["ObjectType"] != "Image":
        raise MhaHeaderError(f"unsupported ObjectType {fields['ObjectType']!r}")
    ndims = _parse_numbers("NDims", fields["NDims"], 1, int)[0]
    if ndims != 3:
        raise MhaHeaderError(f"only 3-D images supported, NDims={ndims}")
    if fields["ElementDataFile"].upper() != "LOCAL":
        raise UnsupportedFormatError(
            "only single-file MHA supported (ElementDataFile = LOCAL); "
            f"got {fields['ElementDataFile']!r}"
        )
    if "BinaryData" in fields and not _parse_bool("BinaryData", fields["BinaryData"]):
        raise MhaHeaderError("ASCII voxel data not supported")
    if "BinaryDataByteOrderMSB" in fields and _parse_bool(
        "BinaryDataByteOrderMSB", fields["BinaryDataByteOrderMSB"]
    ):
        raise MhaHeaderError("big-endian payloads not supported")

    met = fields["ElementType"]
    if met not in MET_TO_DTYPE:
        raise UnsupportedElementTypeError(f"unsupported ElementType {met!r}")
    dtype = np.dtype(MET_TO_DTYPE[met])

    dims_xyz = _parse_numbers("DimSize", fields["DimSize"], 3, int)
    if any(d <= 0 for d in dims_xyz):
        raise MhaHeaderError(f"DimSize must be positive, got {dims_xyz}")

    spacing_xyz = _parse_numbers("ElementSpacing", fields.get("ElementSpacing", "1 1 1"), 3, float)
    if any(s <= 0 for s in spacing_xyz):
        raise MhaHeaderError(f"ElementSpacing must be positive, got {spacing_xyz}")
    offset = _parse_numbers("Offset", fields.get("Offset", "0 0 0"), 3, float)
    tm = _parse_numbers(
        "TransformMatrix", fields.get("TransformMatrix", "1 0 0 0 1 0 0 0 1"), 9, float
    )
    # File rows are the world directions of the X, Y, Z index axes; our
    # direction matrix keeps those as columns.
    direction = np.array(tm, dtype=np.float64).reshape(3, 3).T

    compressed = _parse_bool("CompressedData", fields.get("CompressedData", "False"))
    compressed_size = None
    if compressed:
        if "CompressedDataSize" not in fields:
            raise MhaHeaderError("CompressedData without CompressedDataSize")
        compressed_size = _parse_numbers("CompressedDataSize", fields["CompressedDataSize"], 1, int)[0]
        if compressed_size < 0:
            raise MhaHeaderError(f"negative CompressedDataSize {compressed_size}")

    return MhaInfo(
        size=(dims_xyz[2], dims_xyz[1], dims_xyz[0]),
        spacing=(spacing_xyz[2], spacing_xyz[1], spacing_xyz[0]),
        origin=tuple(offset),
        direction=direction,
        dtype=dtype,
        compressed=compressed,
        extra_meta=tuple(extra),
        payload_offset=payload_offset,
        compressed_size=compressed_size,
    )


def read_mha_bytes(blob: bytes) -> Volume:
    """Decode an in-memory .mha file."""
    info = _parse_header(blob)
    payload = blob[info.payload_offset :]
    if info.compressed:
        if len(payload) != info.compressed_size:
            raise PayloadSizeError(
                f"compressed payload length mismatch: header says {info.compressed_size}, "
                f"file holds {len(payload)}"
            )
        try:
            raw = zlib.decompress(payload)
        except zlib.error as exc:
            raise CompressedStreamError(f"bad zlib stream: {exc}") from exc
    else:
        raw = payload
    expected = int(np.prod(info.size)) * info.dtype.itemsize
    if len(raw) != expected:
        raise PayloadSizeError(
            f"payload length mismatch: expected {expected} bytes for "
            f"DimSize {info.size[::-1]} x {info.dtype.name}, got {len(raw)}"
        )
    data = np.frombuffer(raw, dtype=info.dtype.newbyteorder("<")).reshape(info.size)
    data = data.astype(info.dtype, copy=False)
    return Volume(
        data,
        spacing=info.spacing,
        origin=info.origin,
        direction=info.direction,
        extra_meta=info.extra_meta,
    )


def read_mha(path) -> Volume:
    return read_mha_bytes(Path(path).read_bytes())


def read_mha_info(path) -> MhaInfo:
    """Parse header only; cheap geometry inspection without payload decode."""
    blob = bytearray()
    with open(path, "rb") as fh:
        while True:
            marker = blob.find(b"ElementDataFile")
            if marker >= 0 and blob.find(b"\n", marker) >= 0:
                break
            chunk = fh.read(4096)
            if not chunk:
                break
            blob.extend(chunk)
    return _parse_header(bytes(blob))


def _fmt(value: float) -> str:
    return repr(float(value))


def mha_bytes(volume: Volume, compress: bool = True) -> bytes:
    """Serialize a Volume to .mha file bytes."""
    z, y, x = volume.size
    sz, sy, sx = volume.spacing
    rows = volume.direction.T.reshape(-1)
    lines = [
        "ObjectType = Image",
        "NDims = 3",
        f"DimSize = {x} {y} {z}",
        f"ElementType = {DTYPE_TO_MET[volume.data.dtype]}",
        f"ElementSpacing = {_fmt(sx)} {_fmt(sy)} {_fmt(sz)}",
        f"Offset = {_fmt(volume.origin[0])} {_fmt(volume.origin[1])} {_fmt(volume.origin[2])}",
        "TransformMatrix = " + " ".join(_fmt(v) for v in rows),
        f"CompressedData = {compress}",
    ]
    raw = np.ascontiguousarray(volume.data).astype(volume.data.dtype.newbyteorder("<"), copy=False)
    payload = raw.tobytes()
    if compress:
        payload = zlib.compress(payload, 6)
        lines.append(f"CompressedDataSize = {len(payload)}")
    lines.extend(f"{k} = {v}" for k, v in volume.extra_meta)
    lines.append("ElementDataFile = LOCAL")
    header = ("\n".join(lines) + "\n").encode("ascii")
    return header + payload


def write_mha(volume: Volume, path, compress: bool = True) -> None:
    Path(path).write_bytes(mha_bytes(volume, compress=compress))
