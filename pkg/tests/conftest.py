import numpy as np
import pytest

from voxkit.volume import Volume


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_volume(rng, shape=(8, 8, 8), dtype=np.int16, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)):
    info = np.iinfo(dtype) if np.issubdtype(dtype, np.integer) else None
    if info is not None:
        data = rng.integers(info.min, info.max, size=shape, endpoint=True, dtype=dtype)
    else:
        data = rng.standard_normal(shape).astype(dtype) * 100
    return Volume(data, spacing=spacing, origin=origin)


@pytest.fixture
def small_volume(rng):
    return random_volume(rng, shape=(4, 5, 6), spacing=(2.0, 1.5, 1.0), origin=(3.0, -2.0, 10.0))
