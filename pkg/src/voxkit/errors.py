"""Exception hierarchy shared across the toolkit.

Every failure mode that callers are expected to distinguish gets its own
class; parsers raise these instead of bare ValueError so the CLI and the
HTTP service can surface the error name.
"""


class VoxkitError(Exception):
    """Base class for all toolkit errors."""


class GeometryError(VoxkitError):
    """Volume geometry violates an invariant (spacing, direction, buffer size)."""


class OrientationError(VoxkitError):
    """Direction matrix has no well-defined anatomical orientation code."""


class VolumeIOError(VoxkitError):
    """Base class for file format reader/writer errors."""


class MhaHeaderError(VolumeIOError):
    """Malformed MetaImage header key or value."""


class NiftiHeaderError(VolumeIOError):
    """Malformed NIfTI-1 header (bad magic, sizeof_hdr, or dim)."""


class UnsupportedElementTypeError(VolumeIOError):
    """File declares an element type outside the supported scalar kinds."""


class PayloadSizeError(VolumeIOError):
    """Voxel payload length does not match the declared dimensions."""


class CompressedStreamError(VolumeIOError):
    """Compressed voxel payload is truncated or corrupt."""


class UnsupportedFormatError(VolumeIOError):
    """File is recognized but uses an unsupported variant, or not recognized at all."""


class DatasetError(VoxkitError):
    """Dataset layout problem (missing image/, non-empty destination, ...)."""


class PatchError(VoxkitError):
    """Invalid patch geometry (patch larger than volume, stride > size, ...)."""


class TransformError(VoxkitError):
    """Invalid preprocessing or augmentation request."""


class EvalError(VoxkitError):
    """Prediction/ground-truth pair cannot be scored."""


class PredictorError(VoxkitError):
    """Patch predictor could not be built or violated its output contract."""
