"""End-to-end acceptance suite.

Each test enforces one pipeline-fidelity criterion at a fixed tolerance and
prints a single PASS line on success, so a -s run reads as a checklist.
"""

import itertools
import json
import os
import time

import numpy as np
import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from voxkit.cli import main as cli_main
from voxkit.infer import SlidingWindowConfig, sliding_window_infer, threshold_predictor
from voxkit.io import mha_bytes, nifti_bytes, read_mha_bytes, read_nifti_bytes, write_mha
from voxkit.io.mha import MET_TO_DTYPE
from voxkit.metrics import confusion, metrics_from_counts
from voxkit.ops import patch_positions
from voxkit.service import create_app
from voxkit.volume import (
    ALL_ORIENTATION_CODES,
    Volume,
    index_to_physical,
    orientation_of,
    physical_to_index,
    reorient,
    signed_permutation_for,
)


def _pass(name: str, detail: str = "") -> None:
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {name}: PASS{suffix}")


def f32(value: float) -> float:
    """Snap to a float32-representable value (NIfTI headers store float32)."""
    return float(np.float32(value))


class TestFormatRoundTrip:
    def test_200_random_volumes_bit_identical(self):
        started = time.monotonic()
        rng = np.random.default_rng(7)
        dtypes = sorted(MET_TO_DTYPE.values(), key=lambda d: np.dtype(d).name)
        checked = 0
        for i in range(200):
            dtype = np.dtype(dtypes[i % len(dtypes)])
            compress = i % 2 == 0
            shape = tuple(int(rng.integers(1, 33)) for _ in range(3))
            if np.issubdtype(dtype, np.integer):
                info = np.iinfo(dtype)
                data = rng.integers(info.min, info.max, size=shape, endpoint=True).astype(dtype)
            else:
                data = rng.standard_normal(shape).astype(dtype) * 500
            spacing = tuple(f32(s) for s in rng.uniform(0.25, 4.0, 3))
            origin = tuple(f32(o) for o in rng.uniform(-100, 100, 3))
            direction = signed_permutation_for(
                ALL_ORIENTATION_CODES[int(rng.integers(0, 48))]
            )
            v = Volume(data, spacing=spacing, origin=origin, direction=direction)

            back_mha = read_mha_bytes(mha_bytes(v, compress=compress))
            assert back_mha.data.tobytes() == v.data.tobytes()
            assert back_mha.data.dtype == v.data.dtype
            assert back_mha.spacing == v.spacing
            assert back_mha.origin == v.origin
            assert np.array_equal(back_mha.direction, v.direction)

            back_nii = read_nifti_bytes(nifti_bytes(v, gz=compress))
            assert back_nii.data.tobytes() == v.data.tobytes()
            assert back_nii.data.dtype == v.data.dtype
            assert back_nii.spacing == v.spacing
            assert back_nii.origin == v.origin
            assert np.array_equal(back_nii.direction, v.direction)
            checked += 1
        elapsed = time.monotonic() - started
        assert checked == 200
        assert elapsed < 10.0, f"round trips took {elapsed:.1f}s"
        _pass("format-round-trip", f"200 volumes x 2 formats in {elapsed:.2f}s")


class TestGeometryOracle:
    def test_all_48_codes_preserve_world_positions(self):
        started = time.monotonic()
        rng = np.random.default_rng(11)
        tol = 1e-9
        sources = ("SPL", "IAR", "LIP", "ASR")
        all_idx = np.array(list(np.ndindex(4, 4, 4)), dtype=float)
        for source_code in sources:
            v = Volume(
                rng.integers(-1000, 1000, size=(4, 4, 4)).astype(np.int16),
                spacing=(0.5, 1.25, 2.0),
                origin=(10.0, -20.0, 5.0),
                direction=signed_permutation_for(source_code),
            )
            src_points = index_to_physical(v, all_idx)
            src_lookup = {
                tuple(np.round(p / tol).astype(np.int64)): v.data[tuple(idx.astype(int))]
                for p, idx in zip(src_points, all_idx)
            }
            for target in ALL_ORIENTATION_CODES:
                out = reorient(v, target)
                assert orientation_of(out.direction) == target
                out_points = index_to_physical(out, all_idx)
                for p, idx in zip(out_points, all_idx):
                    key = tuple(np.round(p / tol).astype(np.int64))
                    assert key in src_lookup, f"voxel moved more than {tol} mm"
                    assert src_lookup[key] == out.data[tuple(idx.astype(int))]
                back = physical_to_index(v, out_points)
                assert np.allclose(back - np.round(back), 0.0, atol=tol)
        elapsed = time.monotonic() - started
        assert elapsed < 5.0, f"geometry oracle took {elapsed:.1f}s"
        _pass("geometry-oracle", f"{len(sources)}x48 reorientations in {elapsed:.2f}s")


def synthetic_sample(rng, shape, spacing):
    z, y, x = np.indices(shape, dtype=np.float32)
    image = (z * 3 + y * 2 + x - 400).astype(np.int16)
    center = [s / 2 for s in shape]
    radius2 = (min(shape) / 3) ** 2
    sphere = (z - center[0]) ** 2 + (y - center[1]) ** 2 + (x - center[2]) ** 2 < radius2
    image[sphere] += 500
    label = np.zeros(shape, dtype=np.uint8)
    label[sphere] = 1
    label[image > 200] = 2
    return (
        Volume(image, spacing=spacing),
        Volume(label, spacing=spacing),
    )


class TestPipeline:
    def test_meta_filter_resample_patch(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
        started = time.monotonic()
        rng = np.random.default_rng(3)
        src = tmp_path / "raw"
        (src / "image").mkdir(parents=True)
        (src / "label").mkdir()
        shapes = {
            "case_a": (100, 100, 100),
            "case_b": (100, 100, 100),
            "case_c": (100, 100, 100),
            "case_small": (64, 100, 100),  # fails the 96-voxel minimum on Z
        }
        spacing = (2.4, 2.4, 2.4)
        for stem, shape in shapes.items():
            image, label = synthetic_sample(rng, shape, spacing)
            write_mha(image, src / "image" / f"{stem}.mha")
            write_mha(label, src / "label" / f"{stem}.mha")

        runner = CliRunner()

        def run(*args):
            result = runner.invoke(cli_main, [str(a) for a in args], catch_exceptions=False)
            assert result.exit_code == 0, result.output
            return result

        from voxkit.dataset import load_meta, verify_meta

        run("meta", src, "--mp")
        assert verify_meta(src) == []

        filtered = tmp_path / "filtered"
        run("check", "symlink", src, filtered, "--min-size", 96, 96, 96)
        assert verify_meta(filtered) == []
        assert set(load_meta(filtered)["samples"]) == {"case_a", "case_b", "case_c"}

        resampled = tmp_path / "resampled"
        run("resample", "dataset", filtered, resampled, "--spacing", 2, 2, 2, "--mp")
        assert verify_meta(resampled) == []
        meta = load_meta(resampled)
        for record in meta["samples"].values():
            assert record["spacing"] == [2.0, 2.0, 2.0]
            assert record["size"] == [120, 120, 120]

        patched = tmp_path / "patched"
        run("patch", resampled, patched, "--patch-size", 96, 96, 96,
            "--patch-stride", 48, 48, 48, "--mp")
        assert verify_meta(patched) == []
        crop_meta = json.loads((patched / "crop_meta.json").read_text())
        per_axis = len(patch_positions(120, 96, 48))
        expected_patches = 3 * per_axis ** 3
        assert len(crop_meta["patches"]) == expected_patches
        for record in crop_meta["patches"].values():
            assert record["patch_size"] == [96, 96, 96]
            assert record["stride"] == [48, 48, 48]
        elapsed = time.monotonic() - started
        assert elapsed < 60.0, f"pipeline took {elapsed:.1f}s"
        _pass("pipeline", f"{expected_patches} patches, verifier clean, {elapsed:.1f}s")


class TestMetricsOracle:
    def brute_force(self, pred, gt, num_classes):
        tallies = [[0, 0, 0, 0] for _ in range(num_classes)]
        for p, g in zip(pred.ravel().tolist(), gt.ravel().tolist()):
            for c in range(num_classes):
                if p == c and g == c:
                    tallies[c][0] += 1
                elif p == c:
                    tallies[c][1] += 1
                elif g == c:
                    tallies[c][2] += 1
                else:
                    tallies[c][3] += 1
        return tallies

    def test_100_random_pairs_match_voxel_loop(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            num_classes = int(rng.integers(2, 7))
            pred = rng.integers(0, num_classes, size=(8, 8, 8)).astype(np.uint8)
            gt = rng.integers(0, num_classes, size=(8, 8, 8)).astype(np.uint8)
            counts = confusion(pred, gt, num_classes)
            report = metrics_from_counts(counts)
            for c, (tp, fp, fn, tn) in enumerate(self.brute_force(pred, gt, num_classes)):
                assert (int(counts.tp[c]), int(counts.fp[c]),
                        int(counts.fn[c]), int(counts.tn[c])) == (tp, fp, fn, tn)
                entry = report.per_class[c]
                for got, num, den in (
                    (entry["dice"], 2 * tp, 2 * tp + fp + fn),
                    (entry["iou"], tp, tp + fp + fn),
                    (entry["recall"], tp, tp + fn),
                    (entry["precision"], tp, tp + fp),
                ):
                    if den == 0:
                        assert got is None
                    else:
                        assert abs(got - num / den) <= 1e-12
        _pass("metrics-oracle", "100 pairs, counts exact, ratios within 1e-12")

    def test_worked_confusion_example(self):
        pred = np.array([0, 1, 1, 2], dtype=np.uint8).reshape(1, 1, 4)
        gt = np.array([0, 1, 2, 2], dtype=np.uint8).reshape(1, 1, 4)
        entry = metrics_from_counts(confusion(pred, gt, 3)).per_class[1]
        assert entry["dice"] == 2 / 3
        assert entry["iou"] == 1 / 2
        assert entry["recall"] == 1.0
        assert entry["precision"] == 1 / 2
        _pass("metrics-worked-example", "class1 dice=2/3 iou=1/2")


def build_phantom(shape=(100, 100, 100)):
    rng = np.random.default_rng(31)
    data = np.full(shape, -1000, dtype=np.int16)
    z, y, x = np.indices(shape)
    blob1 = (z - 30) ** 2 + (y - 35) ** 2 + (x - 40) ** 2 < 18 ** 2
    blob2 = (z - 70) ** 2 + (y - 65) ** 2 + (x - 55) ** 2 < 14 ** 2
    data[blob1] = 40 + rng.integers(-20, 21, size=shape, dtype=np.int16)[blob1]
    data[blob2] = 80
    return Volume(data, spacing=(1.0, 1.0, 1.0))


class TestSlidingWindowEquivalence:
    def test_strides_match_whole_volume_thresholding(self):
        started = time.monotonic()
        phantom = build_phantom()
        expected = ((phantom.data >= 0) & (phantom.data <= 100)).astype(np.uint8)
        for stride in (32, 48, 96):
            cfg = SlidingWindowConfig((96, 96, 96), (stride, stride, stride),
                                      output="probabilities")
            result = sliding_window_infer(phantom, threshold_predictor(0, 100), cfg)
            assert np.array_equal(result.labels.data, expected), f"stride {stride}"
            sums = result.probabilities.sum(axis=0)
            assert np.abs(sums - 1.0).max() <= 1e-4
        elapsed = time.monotonic() - started
        assert elapsed < 30.0, f"sliding-window equivalence took {elapsed:.1f}s"
        _pass("sliding-window-equivalence", f"strides 32/48/96 exact, {elapsed:.1f}s")


class TestCliDeterminism:
    def test_every_verb_identical_across_mp_1_and_8(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
        rng = np.random.default_rng(5)
        src = tmp_path / "src"
        (src / "image").mkdir(parents=True)
        (src / "label").mkdir()
        for i in range(6):
            image, label = synthetic_sample(rng, (12, 12, 12), (1.0, 1.0, 1.0))
            write_mha(image, src / "image" / f"s{i}.mha")
            write_mha(label, src / "label" / f"s{i}.mha")

        runner = CliRunner()

        def run(*args):
            result = runner.invoke(cli_main, [str(a) for a in args], catch_exceptions=False)
            assert result.exit_code == 0, result.output

        def tree_bytes(root):
            return {
                str(p.relative_to(root)): p.read_bytes()
                for p in sorted(root.rglob("*"))
                if p.is_file()
            }

        verbs = {
            "meta": lambda out, mp: run("meta", src, "--mp", mp),
            "check-symlink": lambda out, mp: run("check", "symlink", src, out,
                                                 "--min-size", 4, 4, 4, "--mp", mp),
            "resample": lambda out, mp: run("resample", "dataset", src, out,
                                            "--spacing", 2, 2, 2, "--mp", mp),
            "patch": lambda out, mp: run("patch", src, out, "--patch-size", 8, 8, 8,
                                         "--patch-stride", 4, 4, 4, "--mp", mp),
            "remap": lambda out, mp: run("remap", src, out, "--map", "2:1", "--mp", mp),
            "convert": lambda out, mp: run("convert", src, out, "--layout", "decathlon",
                                           "--mp", mp),
            "orient": lambda out, mp: run("orient", src, out, "--code", "IAR", "--mp", mp),
            "augment": lambda out, mp: run("augment", src, out, "--transform", "roll",
                                           "--seed", 9, "--mp", mp),
            "eval": lambda out, mp: run("eval", src / "label", src / "label",
                                        "--classes", 3, "--out", out, "--mp", mp),
        }
        for name, invoke in verbs.items():
            if name == "meta":
                invoke(None, 1)
                first = (src / "meta.json").read_bytes()
                invoke(None, 8)
                assert (src / "meta.json").read_bytes() == first, "meta differs across --mp"
                continue
            out1 = tmp_path / f"{name}-mp1"
            out8 = tmp_path / f"{name}-mp8"
            invoke(out1, 1)
            invoke(out8, 8)
            t1 = tree_bytes(out1)
            t8 = tree_bytes(out8)
            assert t1.keys() == t8.keys(), f"{name}: file sets differ"
            for rel in t1:
                assert t1[rel] == t8[rel], f"{name}: {rel} differs across --mp"
        _pass("cli-determinism", f"{len(verbs)} verbs byte-identical across --mp 1/8")


class TestServiceFidelity:
    def test_http_segmentation_equals_offline_cli(self, tmp_path):
        phantom = build_phantom((60, 60, 60))
        phantom_path = tmp_path / "phantom.mha"
        write_mha(phantom, phantom_path)

        mask_path = tmp_path / "mask.mha"
        runner = CliRunner()
        result = runner.invoke(cli_main, [
            "infer", str(phantom_path), str(mask_path), "--model", "threshold",
            "--lo", "0", "--hi", "100",
            "--patch-size", "48", "48", "48", "--stride", "24", "24", "24",
        ], catch_exceptions=False)
        assert result.exit_code == 0, result.output
        offline_bytes = mask_path.read_bytes()

        with TestClient(create_app()) as client:
            vid = client.post("/volumes", content=phantom_path.read_bytes()).json()["id"]
            job_id = client.post(f"/volumes/{vid}/segment", json={
                "predictor": "threshold", "patch_size": [48, 48, 48],
                "stride": [24, 24, 24], "lo": 0, "hi": 100,
            }).json()["job_id"]
            deadline = time.time() + 60
            while time.time() < deadline:
                job = client.get(f"/jobs/{job_id}").json()
                if job["state"] in ("done", "failed"):
                    break
                time.sleep(0.05)
            assert job["state"] == "done", job
            served_bytes = client.get(f"/masks/{job['mask_id']}").content
        assert served_bytes == offline_bytes
        _pass("service-fidelity", f"{len(served_bytes)} mask bytes identical")
