import numpy as np
import pytest

from voxkit.augment import TRANSFORM_NAMES, augment, derive_rng
from voxkit.errors import TransformError
from voxkit.volume import Volume

from .conftest import random_volume


def labeled_pair(rng, shape=(8, 8, 8)):
    image = random_volume(rng, shape=shape, dtype=np.int16)
    label = Volume(rng.integers(0, 3, size=shape).astype(np.uint8))
    return image, label


def normalized_image(rng, shape=(8, 8, 8)):
    return Volume(rng.random(shape).astype(np.float32))


class TestDeterminism:
    @pytest.mark.parametrize("name", TRANSFORM_NAMES)
    def test_same_seed_same_output(self, rng, name):
        image, label = labeled_pair(rng)
        if name == "gamma":
            image = normalized_image(rng)
        a_img, a_lbl = augment(image, label, name, seed=7, stem="case1")
        b_img, b_lbl = augment(image, label, name, seed=7, stem="case1")
        assert np.array_equal(a_img.data, b_img.data)
        if a_lbl is not None:
            assert np.array_equal(a_lbl.data, b_lbl.data)

    def test_different_stem_different_stream(self, rng):
        image, label = labeled_pair(rng)
        a, _ = augment(image, label, "roll", seed=7, stem="case1")
        b, _ = augment(image, label, "roll", seed=7, stem="case2")
        assert not np.array_equal(a.data, b.data)

    def test_rng_is_order_independent(self):
        a = derive_rng(3, "x", "roll").integers(0, 1 << 30)
        derive_rng(3, "q", "flip").integers(0, 1 << 30, size=100)
        b = derive_rng(3, "x", "roll").integers(0, 1 << 30)
        assert a == b


class TestGeometricPairs:
    def test_roll_moves_image_and_label_together(self, rng):
        image = random_volume(rng, shape=(6, 7, 8), dtype=np.int16)
        label_data = np.zeros((6, 7, 8), dtype=np.uint8)
        label_data[2, 3, 4] = 1
        out_img, out_lbl = augment(image, Volume(label_data), "roll", seed=1, stem="s")
        pos = tuple(np.argwhere(out_lbl.data == 1)[0])
        assert out_img.data[pos] == image.data[2, 3, 4]

    def test_delta_label_follows_flip(self, rng):
        image = random_volume(rng, shape=(4, 6, 8), dtype=np.int16)
        label_data = np.zeros((4, 6, 8), dtype=np.uint8)
        label_data[1, 2, 3] = 1
        label = Volume(label_data)
        out_img, out_lbl = augment(image, label, "flip", seed=11, stem="s")
        pos = tuple(np.argwhere(out_lbl.data == 1)[0])
        assert out_img.data[pos] == image.data[1, 2, 3]

    def test_flip_twice_is_identity(self, rng):
        image, label = labeled_pair(rng)
        once_img, once_lbl = augment(image, label, "flip", seed=5, stem="s")
        twice_img, twice_lbl = augment(once_img, once_lbl, "flip", seed=5, stem="s")
        assert np.array_equal(twice_img.data, image.data)
        assert np.array_equal(twice_lbl.data, label.data)

    def test_four_exact_quarter_turns_are_identity(self, rng):
        image, label = labeled_pair(rng, shape=(6, 8, 8))
        out_i, out_l = image, label
        for _ in range(4):
            out_i, out_l = augment(out_i, out_l, "rotate3d", seed=2, stem="s",
                                   params={"axis": 0, "k": None})
        # same seed/stem -> same k each time; 4k quarter turns about one axis
        assert np.array_equal(out_i.data, image.data)
        assert np.array_equal(out_l.data, label.data)

    def test_exact_rotation_requires_square_plane(self, rng):
        image, label = labeled_pair(rng, shape=(4, 6, 8))
        with pytest.raises(TransformError):
            for seed in range(20):  # some draw k in {1, 3}
                augment(image, label, "rotate3d", seed=seed, stem="s", params={"axis": 0})

    def test_arbitrary_rotation_label_keeps_classes(self, rng):
        image, label = labeled_pair(rng, shape=(4, 9, 9))
        _, out_lbl = augment(image, label, "rotate3d", seed=3, stem="s",
                             params={"axis": 0, "mode": "arbitrary"})
        assert set(np.unique(out_lbl.data)) <= set(np.unique(label.data))

    def test_rotation_zero_angle_identity(self, rng):
        image, label = labeled_pair(rng, shape=(4, 9, 9))
        out_img, _ = augment(image, label, "rotate3d", seed=3, stem="s",
                             params={"axis": 0, "mode": "arbitrary", "angle_range": (0.0, 0.0)})
        assert np.allclose(out_img.data, image.data)


class TestErase:
    def test_continuous_erase_touches_box_only_image(self, rng):
        image, label = labeled_pair(rng)
        out_img, out_lbl = augment(image, label, "erase_continuous", seed=9, stem="s")
        assert np.array_equal(out_lbl.data, label.data)
        changed = out_img.data != image.data
        assert changed.any()
        # changed voxels form one axis-aligned box filled with the minimum
        idx = np.argwhere(changed)
        lo, hi = idx.min(axis=0), idx.max(axis=0)
        box = out_img.data[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1, lo[2]:hi[2] + 1]
        assert (box == image.data.min()).all()

    def test_discrete_erase_count(self, rng):
        image, label = labeled_pair(rng, shape=(10, 10, 10))
        out_img, out_lbl = augment(image, label, "erase_discrete", seed=4, stem="s",
                                   params={"count": 17, "fill": -5000})
        assert np.array_equal(out_lbl.data, label.data)
        assert 0 < (out_img.data == -5000).sum() <= 17

    def test_custom_fill(self, rng):
        image, _ = labeled_pair(rng)
        out_img, _ = augment(image, None, "erase_continuous", seed=1, stem="s",
                             params={"fill": 1234})
        assert (out_img.data == 1234).any()


class TestGamma:
    def test_gamma_one_is_identity(self, rng):
        image = normalized_image(rng)
        out, _ = augment(image, None, "gamma", seed=1, stem="s",
                         params={"gamma_range": (1.0, 1.0)})
        assert np.allclose(out.data, image.data)

    def test_gamma_two_squares(self):
        image = Volume(np.full((2, 2, 2), 0.25, dtype=np.float32))
        out, _ = augment(image, None, "gamma", seed=1, stem="s",
                         params={"gamma_range": (2.0, 2.0)})
        assert np.allclose(out.data, 0.0625)

    def test_gamma_rejects_unnormalized(self, rng):
        image, _ = labeled_pair(rng)
        with pytest.raises(TransformError):
            augment(image, None, "gamma", seed=1, stem="s")


def test_unknown_transform_rejected(rng):
    image, _ = labeled_pair(rng)
    with pytest.raises(TransformError):
        augment(image, None, "elastic", seed=0)
