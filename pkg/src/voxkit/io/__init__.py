"""Volume file I/O: MetaImage (MHA) and NIfTI-1 with format auto-detection."""

from __future__ import annotations

import enum
import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import OrientationError, UnsupportedFormatError
from ..volume import Volume, orientation_of
from .mha import MET_TO_DTYPE, mha_bytes, read_mha, read_mha_bytes, read_mha_info, write_mha
from .nifti import nifti_bytes, read_nifti, read_nifti_bytes, read_nifti_info, write_nifti

__all__ = [
    "Format",
    "detect_format",
    "detect_format_bytes",
    "read_volume",
    "read_volume_bytes",
    "write_volume",
    "read_info",
    "VolumeInfo",
    "volume_stem",
    "VOLUME_SUFFIXES",
    "read_mha",
    "write_mha",
    "read_nifti",
    "write_nifti",
    "mha_bytes",
    "nifti_bytes",
    "read_mha_bytes",
    "read_nifti_bytes",
]

VOLUME_SUFFIXES = (".mha", ".nii.gz", ".nii")


class Format(enum.Enum):
    MHA = "mha"
    NIFTI = "nifti"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class VolumeInfo:
    """Header-level geometry, shared across formats."""

    size: tuple[int, int, int]  # [Z, Y, X]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    direction: np.ndarray
    element_type: str
    format: Format

    @property
    def orientation(self) -> str | None:
        try:
            return orientation_of(self.direction)
        except OrientationError:
            return None


def _looks_like_nifti(blob: bytes) -> bool:
    if len(blob) < 348:
        return False
    for order in ("<", ">"):
        (sizeof_hdr,) = struct.unpack_from(f"{order}i", blob, 0)
        if sizeof_hdr == 348 and blob[344:348] in (b"n+1\x00", b"ni1\x00"):
            return True
    return False


def _looks_like_mha(blob: bytes) -> bool:
    line, _, _ = blob[:256].partition(b"\n")
    try:
        text = line.decode("ascii")
    except UnicodeDecodeError:
        return False
    key, _, value = text.partition("=")
    return key.strip() == "ObjectType" and value.strip() == "Image"


def detect_format_bytes(blob: bytes) -> Format:
    """Magic-byte detection on in-memory file content."""
    if not blob:
        return Format.UNKNOWN
    if blob[:2] == b"\x1f\x8b":
        try:
            with gzip.GzipFile(fileobj=_Bytes(blob)) as gz:
                head = gz.read(348)
        except (OSError, EOFError):
            return Format.UNKNOWN
        return Format.NIFTI if _looks_like_nifti(head) else Format.UNKNOWN
    if _looks_like_nifti(blob):
        return Format.NIFTI
    if _looks_like_mha(blob):
        return Format.MHA
    return Format.UNKNOWN


class _Bytes:
    """Minimal read-only file object over bytes (avoids one io.BytesIO copy)."""

    def __init__(self, blob: bytes):
        self._view = memoryview(blob)
        self._pos = 0

    def read(self, n: int = -1) -> bytes:
        if n is None or n < 0:
            out = bytes(self._view[self._pos :])
            self._pos = len(self._view)
            return out
        out = bytes(self._view[self._pos : self._pos + n])
        self._pos += len(out)
        return out

    def seek(self, pos: int, whence: int = 0) -> int:
        if whence == 0:
            self._pos = pos
        elif whence == 1:
            self._pos += pos
        else:
            self._pos = len(self._view) + pos
        return self._pos

    def tell(self) -> int:
        return self._pos


def detect_format(path) -> Format:
    """Detect by content magic alone; never guesses from the name.

    Empty, unreadable, truncated, or unrecognized files are UNKNOWN.
    """
    try:
        with open(path, "rb") as fh:
            head = fh.read(64 * 1024)
    except OSError:
        return Format.UNKNOWN
    return detect_format_bytes(head)


def read_volume(path) -> Volume:
    fmt = detect_format(path)
    if fmt is Format.MHA:
        return read_mha(path)
    if fmt is Format.NIFTI:
        return read_nifti(path)
    raise UnsupportedFormatError(f"cannot determine volume format of {path}")


def read_volume_bytes(blob: bytes) -> Volume:
    fmt = detect_format_bytes(blob)
    if fmt is Format.MHA:
        return read_mha_bytes(blob)
    if fmt is Format.NIFTI:
        return read_nifti_bytes(blob)
    raise UnsupportedFormatError("cannot determine volume format of uploaded bytes")


def write_volume(volume: Volume, path, compress: bool = True) -> None:
    """Write by destination extension (.mha, .nii, .nii.gz)."""
    name = Path(path).name.lower()
    if name.endswith(".mha"):
        write_mha(volume, path, compress=compress)
    elif name.endswith(".nii") or name.endswith(".nii.gz"):
        write_nifti(volume, path)
    else:
        raise UnsupportedFormatError(f"cannot infer output format from {path}")


def read_info(path) -> VolumeInfo:
    """Header-only geometry read (no voxel payload decode)."""
    fmt = detect_format(path)
    if fmt is Format.MHA:
        info = read_mha_info(path)
        element = np.dtype(info.dtype).name
    elif fmt is Format.NIFTI:
        info = read_nifti_info(path)
        element = np.dtype(info.dtype).name
    else:
        raise UnsupportedFormatError(f"cannot determine volume format of {path}")
    return VolumeInfo(
        size=info.size,
        spacing=info.spacing,
        origin=info.origin,
        direction=info.direction,
        element_type=element,
        format=fmt,
    )


def volume_stem(path) -> str:
    """Filename stem with the volume suffix (including .nii.gz) removed."""
    name = Path(path).name
    for suffix in VOLUME_SUFFIXES:
        if name.lower().endswith(suffix):
            return name[: -len(suffix)]
    return Path(path).stem
