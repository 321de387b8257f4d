"""NIfTI-1 reader and writer (.nii and .nii.gz, single file).

Geometry comes from the sform when sform_code > 0, else from the qform
quaternion, else a spacing-only identity. NIfTI's RAS+ world is converted
to the internal LPS world by negating the first two world axes. Headers
are read little- or big-endian (detected via sizeof_hdr); files are
written little-endian with an sform only.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import (
    GeometryError,
    NiftiHeaderError,
    PayloadSizeError,
    UnsupportedElementTypeError,
    UnsupportedFormatError,
)
from ..volume import Volume

__all__ = ["read_nifti", "read_nifti_bytes", "write_nifti", "nifti_bytes", "read_nifti_info"]

HEADER_SIZE = 348
VOX_OFFSET = 352

DATATYPE_TO_DTYPE = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
    768: np.uint32,
}
DTYPE_TO_DATATYPE = {np.dtype(v): k for k, v in DATATYPE_TO_DTYPE.items()}

_RAS_TO_LPS = np.diag([-1.0, -1.0, 1.0])


@dataclass(frozen=True)
class NiftiInfo:
    size: tuple[int, int, int]  # [Z, Y, X]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    direction: np.ndarray
    dtype: np.dtype
    vox_offset: int
    scl_slope: float
    scl_inter: float
    byte_order: str  # "<" or ">"


def _maybe_gunzip(blob: bytes) -> bytes:
    if blob[:2] == b"\x1f\x8b":
        try:
            return gzip.decompress(blob)
        except (OSError, EOFError) as exc:
            raise NiftiHeaderError(f"bad gzip stream: {exc}") from exc
    return blob


def _parse_header(blob: bytes) -> NiftiInfo:
    if len(blob) < HEADER_SIZE:
        raise NiftiHeaderError(f"file too short for a NIfTI-1 header ({len(blob)} bytes)")
    order = "<"
    (sizeof_hdr,) = struct.unpack_from("<i", blob, 0)
    if sizeof_hdr != HEADER_SIZE:
        (sizeof_hdr,) = struct.unpack_from(">i", blob, 0)
        if sizeof_hdr != HEADER_SIZE:
            raise NiftiHeaderError("sizeof_hdr is not 348 in either byte order")
        order = ">"

    magic = blob[344:348]
    if magic == b"ni1\x00":
        raise UnsupportedFormatError("detached .hdr/.img NIfTI pairs not supported")
    if magic != b"n+1\x00":
        raise NiftiHeaderError(f"bad magic {magic!r}")

    dim = struct.unpack_from(f"{order}8h", blob, 40)
    if dim[0] != 3:
        raise NiftiHeaderError(f"only 3-D files supported, dim[0]={dim[0]}")
    nx, ny, nz = dim[1], dim[2], dim[3]
    if min(nx, ny, nz) <= 0:
        raise NiftiHeaderError(f"non-positive dimensions {(nx, ny, nz)}")

    (datatype, bitpix) = struct.unpack_from(f"{order}2h", blob, 70)
    if datatype not in DATATYPE_TO_DTYPE:
        raise UnsupportedElementTypeError(f"unsupported NIfTI datatype {datatype}")
    dtype = np.dtype(DATATYPE_TO_DTYPE[datatype])
    if bitpix != dtype.itemsize * 8:
        raise NiftiHeaderError(f"bitpix {bitpix} inconsistent with datatype {datatype}")

    pixdim = struct.unpack_from(f"{order}8f", blob, 76)
    (vox_offset,) = struct.unpack_from(f"{order}f", blob, 108)
    scl_slope, scl_inter = struct.unpack_from(f"{order}2f", blob, 112)
    qform_code, sform_code = struct.unpack_from(f"{order}2h", blob, 252)
    quatern = struct.unpack_from(f"{order}3f", blob, 256)
    qoffset = struct.unpack_from(f"{order}3f", blob, 268)
    srow = np.array(struct.unpack_from(f"{order}12f", blob, 280), dtype=np.float64).reshape(3, 4)

    if sform_code > 0:
        affine = srow[:, :3]
        translation = srow[:, 3]
        norms = np.linalg.norm(affine, axis=0)
        if np.any(norms <= 0):
            raise NiftiHeaderError("sform has a zero-length column")
        direction_ras = affine / norms
        spacing_xyz = norms
        origin_ras = translation
    elif qform_code > 0:
        b, c, d = (float(q) for q in quatern)
        a_sq = 1.0 - (b * b + c * c + d * d)
        if a_sq < -1e-6:
            raise NiftiHeaderError("quaternion norm exceeds 1")
        a = float(np.sqrt(max(a_sq, 0.0)))
        r = np.array(
            [
                [a * a + b * b - c * c - d * d, 2 * b * c - 2 * a * d, 2 * b * d + 2 * a * c],
                [2 * b * c + 2 * a * d, a * a - b * b + c * c - d * d, 2 * c * d - 2 * a * b],
                [2 * b * d - 2 * a * c, 2 * c * d + 2 * a * b, a * a - b * b - c * c + d * d],
            ]
        )
        qfac = -1.0 if pixdim[0] < 0 else 1.0
        r[:, 2] *= qfac
        direction_ras = r
        spacing_xyz = np.abs(np.array(pixdim[1:4], dtype=np.float64))
        origin_ras = np.array(qoffset, dtype=np.float64)
    else:
        direction_ras = _RAS_TO_LPS.copy()  # identity once converted to LPS
        spacing_xyz = np.array([p if p > 0 else 1.0 for p in pixdim[1:4]], dtype=np.float64)
        origin_ras = np.zeros(3)

    direction = _RAS_TO_LPS @ direction_ras
    origin = _RAS_TO_LPS @ origin_ras

    offset = int(vox_offset) if vox_offset else VOX_OFFSET
    if offset < HEADER_SIZE:
        raise NiftiHeaderError(f"vox_offset {offset} overlaps the header")

    return NiftiInfo(
        size=(nz, ny, nx),
        spacing=(float(spacing_xyz[2]), float(spacing_xyz[1]), float(spacing_xyz[0])),
        origin=tuple(float(v) for v in origin),
        direction=direction,
        dtype=dtype,
        vox_offset=offset,
        scl_slope=float(scl_slope),
        scl_inter=float(scl_inter),
        byte_order=order,
    )


def read_nifti_bytes(blob: bytes) -> Volume:
    """Decode an in-memory .nii or .nii.gz file."""
    blob = _maybe_gunzip(blob)
    info = _parse_header(blob)
    nbytes = int(np.prod(info.size)) * info.dtype.itemsize
    payload = blob[info.vox_offset : info.vox_offset + nbytes]
    if len(payload) < nbytes:
        raise PayloadSizeError(
            f"payload length mismatch: expected {nbytes} bytes, got {len(payload)}"
        )
    data = np.frombuffer(payload, dtype=info.dtype.newbyteorder(info.byte_order))
    data = data.reshape(info.size).astype(info.dtype, copy=False)
    if info.scl_slope not in (0.0, 1.0):
        scaled = data.astype(np.float32) * np.float32(info.scl_slope) + np.float32(info.scl_inter)
        data = scaled
    try:
        return Volume(data, spacing=info.spacing, origin=info.origin, direction=info.direction)
    except GeometryError as exc:
        raise NiftiHeaderError(f"invalid geometry: {exc}") from exc


def read_nifti(path) -> Volume:
    return read_nifti_bytes(Path(path).read_bytes())


def read_nifti_info(path) -> NiftiInfo:
    """Parse only the 348-byte header (streaming through gzip if needed)."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
        fh.seek(0)
        if head == b"\x1f\x8b":
            with gzip.open(fh) as gz:
                blob = gz.read(HEADER_SIZE)
        else:
            blob = fh.read(HEADER_SIZE)
    return _parse_header(blob)


def _build_header(volume: Volume) -> bytes:
    z, y, x = volume.size
    dtype = np.dtype(volume.data.dtype)
    if dtype not in DTYPE_TO_DATATYPE:
        raise UnsupportedElementTypeError(f"cannot write element type {dtype} to NIfTI")
    sp_xyz = (volume.spacing[2], volume.spacing[1], volume.spacing[0])

    affine_ras = _RAS_TO_LPS @ (volume.direction * np.asarray(sp_xyz))
    origin_ras = _RAS_TO_LPS @ np.asarray(volume.origin)

    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, x, y, z, 1, 1, 1, 1)
    struct.pack_into("<2h", hdr, 70, DTYPE_TO_DATATYPE[dtype], dtype.itemsize * 8)
    struct.pack_into("<8f", hdr, 76, 1.0, sp_xyz[0], sp_xyz[1], sp_xyz[2], 0, 0, 0, 0)
    struct.pack_into("<f", hdr, 108, float(VOX_OFFSET))
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)  # scl_slope, scl_inter
    hdr[123] = 2  # spatial units: millimeters
    struct.pack_into("<2h", hdr, 252, 0, 1)  # qform_code, sform_code
    struct.pack_into(
        "<12f",
        hdr,
        280,
        *(float(v) for row in range(3) for v in (*affine_ras[row], origin_ras[row])),
    )
    hdr[344:348] = b"n+1\x00"
    return bytes(hdr)


def nifti_bytes(volume: Volume, gz: bool = False) -> bytes:
    """Serialize a Volume to .nii (or .nii.gz) file bytes."""
    raw = np.ascontiguousarray(volume.data).astype(volume.data.dtype.newbyteorder("<"), copy=False)
    blob = _build_header(volume) + b"\x00\x00\x00\x00" + raw.tobytes()
    if gz:
        blob = gzip.compress(blob, compresslevel=6, mtime=0)
    return blob


def write_nifti(volume: Volume, path) -> None:
    path = Path(path)
    gz = path.name.endswith(".gz")
    path.write_bytes(nifti_bytes(volume, gz=gz))
