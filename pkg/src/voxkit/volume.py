"""In-memory volumetric image: a voxel buffer tied to physical-space geometry.

Conventions used throughout the toolkit:

* Voxel buffers are indexed ``[Z, Y, X]`` with Z slowest and X fastest, and
  ``size``/``spacing`` triples follow the same ``[Z, Y, X]`` order.
* World coordinates are LPS millimeters: +x carries Left, +y Posterior,
  +z Superior. World points are ``(x, y, z)`` tuples.
* ``direction`` is a 3x3 matrix whose column ``j`` is the world-space unit
  vector along increasing index axis ``j``, with columns ordered (X, Y, Z)
  as in the on-disk transform matrices.
* Orientation codes list one anatomical letter per index axis from slowest
  to fastest, e.g. the identity direction is ``"SPL"`` (Z runs Superior,
  Y Posterior, X Left).
* Voxel world positions refer to voxel centers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, OrientationError

__all__ = [
    "Volume",
    "ALL_ORIENTATION_CODES",
    "orientation_of",
    "reorient",
    "index_to_physical",
    "physical_to_index",
    "validate_orientation_code",
]

SUPPORTED_DTYPES = (
    np.int8,
    np.int16,
    np.int32,
    np.uint8,
    np.uint16,
    np.uint32,
    np.float32,
    np.float64,
)

_UNIT_TOL = 1e-6
_TIE_TOL = 1e-9

# Letter of the positive/negative world direction per world axis (x, y, z).
_POSITIVE_LETTER = ("L", "P", "S")
_NEGATIVE_LETTER = ("R", "A", "I")
OPPOSITE_LETTER = {"L": "R", "R": "L", "P": "A", "A": "P", "S": "I", "I": "S"}
_WORLD_AXIS_OF_LETTER = {"L": 0, "R": 0, "P": 1, "A": 1, "S": 2, "I": 2}
_SIGN_OF_LETTER = {"L": 1.0, "R": -1.0, "P": 1.0, "A": -1.0, "S": 1.0, "I": -1.0}

ALL_ORIENTATION_CODES = tuple(
    "".join(p)
    for letters in itertools.product("LR", "PA", "SI")
    for p in itertools.permutations(letters)
)


def _as_direction(matrix) -> np.ndarray:
    d = np.array(matrix, dtype=np.float64, copy=True)
    if d.shape != (3, 3):
        raise GeometryError(f"direction must be 3x3, got shape {d.shape}")
    norms = np.linalg.norm(d, axis=0)
    if np.any(np.abs(norms - 1.0) > _UNIT_TOL):
        raise GeometryError(f"direction columns must be unit vectors, norms {norms}")
    det = float(np.linalg.det(d))
    if abs(abs(det) - 1.0) > _UNIT_TOL:
        raise GeometryError(f"direction determinant must be +-1, got {det}")
    d.setflags(write=False)
    return d


@dataclass(frozen=True)
class Volume:
    """Immutable voxel buffer plus geometric metadata.

    ``data`` is a read-only view; construct a new Volume to change voxels.
    ``extra_meta`` carries unrecognized MetaImage header keys through a
    read/write round trip; ``notes`` records non-fatal processing warnings.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    direction: np.ndarray = field(default_factory=lambda: np.eye(3))
    extra_meta: tuple[tuple[str, str], ...] = ()
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise GeometryError(f"volume buffer must be 3-D, got {arr.ndim}-D")
        if arr.dtype.type not in SUPPORTED_DTYPES:
            raise GeometryError(f"unsupported element type {arr.dtype}")
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        view = arr.view()
        view.setflags(write=False)
        object.__setattr__(self, "data", view)

        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise GeometryError(f"spacing must be 3 positive values, got {self.spacing}")
        object.__setattr__(self, "spacing", spacing)

        origin = tuple(float(o) for o in self.origin)
        if len(origin) != 3:
            raise GeometryError(f"origin must have 3 components, got {self.origin}")
        object.__setattr__(self, "origin", origin)

        object.__setattr__(self, "direction", _as_direction(self.direction))
        object.__setattr__(self, "extra_meta", tuple((str(k), str(v)) for k, v in self.extra_meta))
        object.__setattr__(self, "notes", tuple(str(n) for n in self.notes))

    @property
    def size(self) -> tuple[int, int, int]:
        """Voxel counts in [Z, Y, X] order."""
        return tuple(int(s) for s in self.data.shape)

    @property
    def element_type(self) -> str:
        """Canonical scalar kind name, e.g. ``"int16"``."""
        return self.data.dtype.name

    def with_data(self, data: np.ndarray, **overrides) -> "Volume":
        """New Volume sharing this geometry but holding ``data``."""
        kwargs = dict(
            spacing=self.spacing,
            origin=self.origin,
            direction=self.direction,
            extra_meta=self.extra_meta,
            notes=self.notes,
        )
        kwargs.update(overrides)
        return Volume(data, **kwargs)

    def describe(self) -> dict:
        """JSON-friendly geometry summary."""
        try:
            code = orientation_of(self.direction)
        except OrientationError:
            code = None
        return {
            "size": list(self.size),
            "spacing": list(self.spacing),
            "origin": list(self.origin),
            "orientation": code,
            "element_type": self.element_type,
        }


def validate_orientation_code(code: str) -> str:
    """Return the normalized (upper-case) code or raise OrientationError."""
    code = str(code).upper()
    if len(code) != 3 or any(c not in _WORLD_AXIS_OF_LETTER for c in code):
        raise OrientationError(f"invalid orientation code {code!r}")
    axes = sorted(_WORLD_AXIS_OF_LETTER[c] for c in code)
    if axes != [0, 1, 2]:
        raise OrientationError(
            f"orientation code {code!r} must use one letter per anatomical axis pair"
        )
    return code


def _dominant_letter(column: np.ndarray, axis_name: str) -> str:
    mags = np.abs(column)
    order = np.argsort(mags)
    if mags[order[2]] - mags[order[1]] <= _TIE_TOL:
        raise OrientationError(
            f"direction column for axis {axis_name} has tied dominant components {column}"
        )
    world = int(order[2])
    return _POSITIVE_LETTER[world] if column[world] > 0 else _NEGATIVE_LETTER[world]


def orientation_of(direction) -> str:
    """Anatomical orientation code of a direction matrix.

    One letter per index axis, slowest (Z) first; each letter is the world
    direction of the dominant component of that axis's direction column.
    Raises OrientationError on 45-degree ties or when two index axes share
    a dominant world axis.
    """
    d = _as_direction(direction)
    letters = []
    seen_world = set()
    for axis_name, col_index in (("Z", 2), ("Y", 1), ("X", 0)):
        letter = _dominant_letter(d[:, col_index], axis_name)
        world = _WORLD_AXIS_OF_LETTER[letter]
        if world in seen_world:
            raise OrientationError(
                f"axes {sorted(seen_world)} and {axis_name} share dominant world axis {world}"
            )
        seen_world.add(world)
        letters.append(letter)
    return "".join(letters)


def signed_permutation_for(code: str) -> np.ndarray:
    """Exact direction matrix whose orientation code is ``code``."""
    code = validate_orientation_code(code)
    d = np.zeros((3, 3))
    for pos, letter in enumerate(code):
        col = (2, 1, 0)[pos]  # code positions are Z, Y, X; columns are X, Y, Z
        d[_WORLD_AXIS_OF_LETTER[letter], col] = _SIGN_OF_LETTER[letter]
    return d


def index_to_physical(volume: Volume, index) -> np.ndarray:
    """World (x, y, z) mm position of a (possibly fractional) [Z, Y, X] index.

    ``index`` may be a single triple or an (N, 3) array of triples.
    """
    idx = np.asarray(index, dtype=np.float64)
    idx_xyz = idx[..., ::-1]
    sp_xyz = np.asarray(volume.spacing[::-1], dtype=np.float64)
    return np.asarray(volume.origin) + (sp_xyz * idx_xyz) @ volume.direction.T


def physical_to_index(volume: Volume, point) -> np.ndarray:
    """Exact inverse of :func:`index_to_physical`; returns [Z, Y, X] indices."""
    p = np.asarray(point, dtype=np.float64) - np.asarray(volume.origin)
    idx_xyz = p @ np.linalg.inv(volume.direction).T
    idx_xyz = idx_xyz / np.asarray(volume.spacing[::-1], dtype=np.float64)
    return idx_xyz[..., ::-1]


def _is_signed_permutation(direction: np.ndarray) -> bool:
    return bool(np.all(np.isclose(np.abs(direction), np.rint(np.abs(direction)), atol=_UNIT_TOL)))


def reorient(volume: Volume, target: str) -> Volume:
    """Permute/flip the buffer so the orientation code becomes ``target``.

    Pure axis relabeling: no interpolation, every voxel keeps its world
    position. Oblique directions are handled by their dominant axes and a
    note is recorded on the result.
    """
    target = validate_orientation_code(target)
    current = orientation_of(volume.direction)
    if current == target:
        return volume

    # Output array axis t takes input array axis source[t], flipped when the
    # requested letter is the anatomical opposite of the current one.
    source: list[int] = []
    flips: list[bool] = []
    for letter in target:
        if letter in current:
            source.append(current.index(letter))
            flips.append(False)
        else:
            source.append(current.index(OPPOSITE_LETTER[letter]))
            flips.append(True)

    data = volume.data.transpose(source)
    flip_axes = tuple(t for t, f in enumerate(flips) if f)
    if flip_axes:
        data = np.flip(data, axis=flip_axes)
    data = np.ascontiguousarray(data)

    col_of_array_axis = (2, 1, 0)
    new_direction = np.zeros((3, 3))
    for t, (s, flip) in enumerate(zip(source, flips)):
        sign = -1.0 if flip else 1.0
        new_direction[:, col_of_array_axis[t]] = sign * volume.direction[:, col_of_array_axis[s]]

    # World position of the voxel that becomes the new (0, 0, 0).
    old_corner = np.zeros(3)
    for t, (s, flip) in enumerate(zip(source, flips)):
        old_corner[s] = volume.size[s] - 1 if flip else 0
    new_origin = tuple(index_to_physical(volume, old_corner))

    notes = volume.notes
    if not _is_signed_permutation(volume.direction):
        notes = notes + (f"reorient {current}->{target} on oblique direction uses dominant axes",)

    return Volume(
        data,
        spacing=tuple(volume.spacing[s] for s in source),
        origin=new_origin,
        direction=new_direction,
        extra_meta=volume.extra_meta,
        notes=notes,
    )
