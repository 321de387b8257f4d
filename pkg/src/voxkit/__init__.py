"""voxkit: volumetric CT dataset toolkit.

Pair-centric dataset management, MHA/NIfTI I/O, geometric and intensity
preprocessing, segmentation metrics, sliding-window inference, and an HTTP
segmentation backend, exposed as a library and the ``voxkit`` CLI.
"""

__version__ = "0.1.0"

from . import errors
from .volume import (
    ALL_ORIENTATION_CODES,
    Volume,
    index_to_physical,
    orientation_of,
    physical_to_index,
    reorient,
)

__all__ = [
    "__version__",
    "errors",
    "Volume",
    "ALL_ORIENTATION_CODES",
    "orientation_of",
    "reorient",
    "index_to_physical",
    "physical_to_index",
]
