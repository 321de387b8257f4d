"""Command-line interface.

One verb per pipeline capability: ``meta``, ``check symlink``,
``resample dataset``, ``patch``, ``augment``, ``remap``, ``convert``,
``eval``, ``orient``, ``infer``, ``serve``. The paper-style entry points
``itk_resample``, ``itk_patch``, and ``itk_check`` alias their respective
verbs so existing invocations keep working.

Exit codes: 0 success, 1 any per-sample failure, 2 usage error.
Every dataset-mutating verb rebuilds meta.json, writes
process_config.json next to the output, and re-verifies the result.
All verbs are deterministic for fixed inputs (and ``--seed`` where
randomness is involved); ``--mp`` changes wall time only.
"""

from __future__ import annotations

import json as json_module
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import click

from . import __version__
from ._parallel import pmap, resolve_workers
from ._util import write_json_atomic
from .augment import TRANSFORM_NAMES, augment as apply_augment
from .dataset import (
    LAYOUTS,
    SamplePair,
    build_meta,
    convert_layout,
    filter_symlink,
    scan_pairs,
    verify_meta,
    write_process_config,
)
from .errors import PatchError, VoxkitError
from .infer import SlidingWindowConfig, onnx_predictor, sliding_window_infer, threshold_predictor
from .io import read_volume, write_volume
from .metrics import evaluate_dataset, format_table, to_csv
from .ops import ResampleSpec, remap_labels, resample as resample_volume, split_patches
from .volume import reorient, validate_orientation_code

TRIPLE = click.Tuple([int, int, int])
FTRIPLE = click.Tuple([float, float, float])

mp_option = click.option(
    "--mp",
    "mp",
    is_flag=False,
    flag_value="0",
    default=None,
    metavar="[N]",
    help="Process samples with N workers (bare --mp uses all cores).",
)
json_option = click.option("--json", "as_json", is_flag=True, help="Machine-readable summary on stdout.")


@click.group()
@click.version_option(__version__, prog_name="voxkit")
def main():
    """Volumetric CT dataset toolkit."""


def _echo_summary(verb: str, results: list[dict], extra: dict | None = None, as_json: bool = False) -> None:
    results = sorted(results, key=lambda r: r["stem"].encode())
    failures = [r for r in results if r["status"] == "fail"]
    skips = [r for r in results if r["status"] == "skip"]
    if as_json:
        summary = {
            "verb": verb,
            "samples": results,
            "ok": len(results) - len(failures) - len(skips),
            "skipped": len(skips),
            "failed": len(failures),
        }
        summary.update(extra or {})
        click.echo(json_module.dumps(summary, indent=2, sort_keys=True))
    else:
        for r in results:
            line = f"[{r['status']}] {r['stem']}"
            if r.get("detail"):
                line += f": {r['detail']}"
            click.echo(line)
        click.echo(
            f"{verb}: {len(results) - len(failures) - len(skips)} ok, "
            f"{len(skips)} skipped, {len(failures)} failed"
        )
        for key, value in (extra or {}).items():
            click.echo(f"{key}: {value}")
    if failures:
        sys.exit(1)


def _post_process_dataset(dst: Path, workers: int, op: str, params: dict) -> None:
    build_meta(dst, workers)
    write_process_config(dst, op, params)
    problems = verify_meta(dst)
    if problems:
        for problem in problems:
            click.echo(f"[verify] {problem}", err=True)
        sys.exit(1)


def _out_path(pair_path: Path, src: Path, dst: Path) -> Path:
    rel = pair_path.relative_to(src)
    out = dst / rel
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- resample


@main.group()
def resample():
    """Resampling commands."""


@dataclass(frozen=True)
class _ResampleTask:
    pair: SamplePair
    src: Path
    dst: Path
    spacing: tuple[float, float, float] | None
    size: tuple[int, int, int] | None


def _run_resample_task(task: _ResampleTask) -> dict:
    try:
        if task.spacing is not None:
            image_spec = ResampleSpec("to-spacing", task.spacing, "trilinear")
            label_spec = ResampleSpec("to-spacing", task.spacing, "nearest")
        else:
            image_spec = ResampleSpec("to-size", task.size, "trilinear")
            label_spec = ResampleSpec("to-size", task.size, "nearest")
        image = read_volume(task.pair.image_path)
        write_volume(resample_volume(image, image_spec), _out_path(task.pair.image_path, task.src, task.dst))
        if task.pair.label_path is not None:
            label = read_volume(task.pair.label_path)
            write_volume(
                resample_volume(label, label_spec, label=True),
                _out_path(task.pair.label_path, task.src, task.dst),
            )
        return {"stem": task.pair.stem, "status": "ok"}
    except (VoxkitError, OSError) as exc:
        return {"stem": task.pair.stem, "status": "fail", "detail": f"{type(exc).__name__}: {exc}"}


@resample.command("dataset")
@click.argument("src", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("dst", type=click.Path(file_okay=False, path_type=Path))
@click.option("--spacing", type=FTRIPLE, default=None, help="Target spacing [Z Y X] mm.")
@click.option("--size", type=TRIPLE, default=None, help="Target size [Z Y X] voxels.")
@mp_option
@json_option
def resample_dataset(src, dst, spacing, size, mp, as_json):
    """Resample every pair (image trilinear, label nearest)."""
    if (spacing is None) == (size is None):
        raise click.UsageError("exactly one of --spacing or --size is required")
    workers = resolve_workers(mp)
    pairs = scan_pairs(src)
    dst.mkdir(parents=True, exist_ok=True)
    tasks = [_ResampleTask(p, src, dst, spacing, size) for p in pairs]
    results = pmap(_run_resample_task, tasks, workers)
    params = {"spacing": list(spacing) if spacing else None, "size": list(size) if size else None}
    _post_process_dataset(dst, workers, "resample-dataset", params)
    _echo_summary("resample dataset", results, as_json=as_json)


# ---------------------------------------------------------------- patch


@dataclass(frozen=True)
class _PatchTask:
    pair: SamplePair
    dst: Path
    patch_size: tuple[int, int, int]
    stride: tuple[int, int, int]
    suffix: str


def _run_patch_task(task: _PatchTask) -> dict:
    try:
        image = read_volume(task.pair.image_path)
        label = read_volume(task.pair.label_path) if task.pair.label_path else None
        items = split_patches(image, label, task.patch_size, task.stride, task.pair.stem)
    except PatchError as exc:
        return {"stem": task.pair.stem, "status": "skip", "detail": str(exc), "records": []}
    except (VoxkitError, OSError) as exc:
        return {"stem": task.pair.stem, "status": "fail",
                "detail": f"{type(exc).__name__}: {exc}", "records": []}
    (task.dst / "image").mkdir(parents=True, exist_ok=True)
    if label is not None:
        (task.dst / "label").mkdir(exist_ok=True)
    records = []
    for item in items:
        write_volume(item.image, task.dst / "image" / f"{item.stem}{task.suffix}")
        if item.label is not None:
            write_volume(item.label, task.dst / "label" / f"{item.stem}{task.suffix}")
        records.append(item.record.to_json())
    return {"stem": task.pair.stem, "status": "ok", "records": records}


@main.command("patch")
@click.argument("src", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("dst", type=click.Path(file_okay=False, path_type=Path))
@click.option("--patch-size", type=TRIPLE, required=True, help="Patch size [Z Y X].")
@click.option("--patch-stride", type=TRIPLE, required=True, help="Patch stride [Z Y X].")
@mp_option
@json_option
def patch(src, dst, patch_size, patch_stride, mp, as_json):
    """Split volumes into overlapping patches and record crop provenance."""
    if any(s > p for s, p in zip(patch_stride, patch_size)):
        raise click.UsageError(f"stride {patch_stride} must not exceed patch size {patch_size}")
    if min(patch_stride) <= 0 or min(patch_size) <= 0:
        raise click.UsageError("patch size and stride must be positive")
    workers = resolve_workers(mp)
    pairs = scan_pairs(src)
    dst.mkdir(parents=True, exist_ok=True)
    suffix = ".mha"
    tasks = [_PatchTask(p, dst, patch_size, patch_stride, suffix) for p in pairs]
    results = pmap(_run_patch_task, tasks, workers)

    patches = {}
    for result in results:
        for record in result.pop("records"):
            patches[record["patch_stem"]] = record
    crop_meta = {
        "source_dataset": str(src),
        "patch_size": list(patch_size),
        "patch_stride": list(patch_stride),
        "patches": patches,
    }
    write_json_atomic(dst / "crop_meta.json", crop_meta)
    params = {"patch_size": list(patch_size), "patch_stride": list(patch_stride)}
    _post_process_dataset(dst, workers, "patch", params)
    _echo_summary("patch", results, extra={"patches": len(patches)}, as_json=as_json)


# ---------------------------------------------------------------- check


@main.group()
def check():
    """Dataset constraint checks and filtered views."""


@check.command("symlink")
@click.argument("src", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("dst", type=click.Path(file_okay=False, path_type=Path))
@click.option("--min-size", type=TRIPLE, required=True, help="Minimum size [Z Y X] voxels.")
@click.option("--min-spacing", type=FTRIPLE, default=None, help="Minimum spacing [Z Y X] mm.")
@click.option("--max-spacing", type=FTRIPLE, default=None, help="Maximum spacing [Z Y X] mm.")
@mp_option
@json_option
def check_symlink(src, dst, min_size, min_spacing, max_spacing, mp, as_json):
    """Link samples meeting the constraints into a filtered dataset."""
    workers = resolve_workers(mp)
    result = filter_symlink(src, dst, min_size, min_spacing, max_spacing, workers)
    write_process_config(
        dst,
        "check-symlink",
        {
            "min_size": list(min_size),
            "min_spacing": list(min_spacing) if min_spacing else None,
            "max_spacing": list(max_spacing) if max_spacing else None,
        },
    )
    problems = verify_meta(dst)
    if problems:
        for problem in problems:
            click.echo(f"[verify] {problem}", err=True)
        sys.exit(1)
    rows = [{"stem": s, "status": "ok"} for s in result.kept] + [
        {"stem": s, "status": "skip", "detail": "constraint not met"} for s in result.dropped
    ]
    _echo_summary("check symlink", rows, extra={"kept": len(result.kept)}, as_json=as_json)


# ---------------------------------------------------------------- meta


@main.command("meta")
@click.argument("root", type=click.Path(exists=True, file_okay=False, path_type=Path))
@mp_option
@json_option
def meta(root, mp, as_json):
    """Build (or rebuild) the dataset metadata repository."""
    workers = resolve_workers(mp)
    built = build_meta(root, workers)
    rows = [{"stem": s, "status": "ok"} for s in built["samples"]] + [
        {"stem": e["stem"], "status": "fail", "detail": f"{e['error']}: {e['detail']}"}
        for e in built["errors"]
    ]
    _echo_summary("meta", rows, extra={"meta": str(Path(root) / "meta.json")}, as_json=as_json)


# ---------------------------------------------------------------- remap


def _parse_label_map(text: str) -> dict[int, int]:
    mapping = {}
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        old, sep, new = chunk.partition(":")
        if not sep:
            raise click.UsageError(f"bad --map entry {chunk!r}; expected old:new")
        try:
            mapping[int(old)] = int(new)
        except ValueError:
            raise click.UsageError(f"bad --map entry {chunk!r}; expected integers")
    if not mapping:
        raise click.UsageError("--map must contain at least one old:new pair")
    return mapping


@dataclass(frozen=True)
class _RemapTask:
    pair: SamplePair
    src: Path
    dst: Path
    mapping: tuple[tuple[int, int], ...]


def _run_remap_task(task: _RemapTask) -> dict:
    try:
        image = read_volume(task.pair.image_path)
        write_volume(image, _out_path(task.pair.image_path, task.src, task.dst))
        if task.pair.label_path is not None:
            label = read_volume(task.pair.label_path)
            out = remap_labels(label, dict(task.mapping))
            write_volume(out, _out_path(task.pair.label_path, task.src, task.dst))
        return {"stem": task.pair.stem, "status": "ok"}
    except (VoxkitError, OSError) as exc:
        return {"stem": task.pair.stem, "status": "fail", "detail": f"{type(exc).__name__}: {exc}"}


@main.command("remap")
@click.argument("src", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("dst", type=click.Path(file_okay=False, path_type=Path))
@click.option("--map", "map_text", required=True, metavar="OLD:NEW[,OLD:NEW...]",
              help="Label substitutions; unmapped labels become 0.")
@mp_option
@json_option
def remap(src, dst, map_text, mp, as_json):
    """Remap (or partially extract) label classes."""
    mapping = _parse_label_map(map_text)
    workers = resolve_workers(mp)
    pairs = scan_pairs(src)
    dst.mkdir(parents=True, exist_ok=True)
    tasks = [_RemapTask(p, src, dst, tuple(sorted(mapping.items()))) for p in pairs]
    results = pmap(_run_remap_task, tasks, workers)
    remap_meta = {
        "source_dataset": str(src),
        "label_map": {str(k): v for k, v in sorted(mapping.items())},
        "samples": sorted(p.stem for p in pairs),
    }
    write_json_atomic(dst / "remap_meta.json", remap_meta)
    _post_process_dataset(dst, workers, "remap", {"map": remap_meta["label_map"]})
    _echo_summary("remap", results, as_json=as_json)


# ---------------------------------------------------------------- convert


@main.command("convert")
@click.argument("src", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("dst", type=click.Path(file_okay=False, path_type=Path))
@click.option("--layout", type=click.Choice(LAYOUTS), required=True)
@mp_option
@json_option
def convert(src, dst, layout, mp, as_json):
    """Convert the dataset directory layout."""
    workers = resolve_workers(mp)
    stems = convert_layout(src, dst, layout, workers)
    write_process_config(dst, "convert", {"layout": layout})
    rows = [{"stem": s, "status": "ok"} for s in stems]
    _echo_summary("convert", rows, extra={"layout": layout}, as_json=as_json)


# ---------------------------------------------------------------- orient


@dataclass(frozen=True)
class _OrientTask:
    pair: SamplePair
    src: Path
    dst: Path
    code: str


def _run_orient_task(task: _OrientTask) -> dict:
    try:
        image = read_volume(task.pair.image_path)
        write_volume(reorient(image, task.code), _out_path(task.pair.image_path, task.src, task.dst))
        if task.pair.label_path is not None:
            label = read_volume(task.pair.label_path)
            write_volume(reorient(label, task.code), _out_path(task.pair.label_path, task.src, task.dst))
        return {"stem": task.pair.stem, "status": "ok"}
    except (VoxkitError, OSError) as exc:
        return {"stem": task.pair.stem, "status": "fail", "detail": f"{type(exc).__name__}: {exc}"}


@main.command("orient")
@click.argument("src", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("dst", type=click.Path(file_okay=False, path_type=Path))
@click.option("--code", required=True, metavar="CODE",
              help="Target orientation code (letters for Z, Y, X axes), e.g. LPI.")
@mp_option
@json_option
def orient(src, dst, code, mp, as_json):
    """Reorient every volume to the given anatomical code (no interpolation)."""
    try:
        code = validate_orientation_code(code)
    except VoxkitError as exc:
        raise click.UsageError(str(exc))
    workers = resolve_workers(mp)
    pairs = scan_pairs(src)
    dst.mkdir(parents=True, exist_ok=True)
    tasks = [_OrientTask(p, src, dst, code) for p in pairs]
    results = pmap(_run_orient_task, tasks, workers)
    _post_process_dataset(dst, workers, "orient", {"code": code})
    _echo_summary("orient", results, as_json=as_json)


# ---------------------------------------------------------------- augment


@dataclass(frozen=True)
class _AugmentTask:
    pair: SamplePair
    src: Path
    dst: Path
    transform: str
    seed: int
    params: str  # JSON-encoded, keeps the task picklable


def _run_augment_task(task: _AugmentTask) -> dict:
    try:
        image = read_volume(task.pair.image_path)
        label = read_volume(task.pair.label_path) if task.pair.label_path else None
        out_image, out_label = apply_augment(
            image, label, task.transform, task.seed, task.pair.stem,
            json_module.loads(task.params),
        )
        write_volume(out_image, _out_path(task.pair.image_path, task.src, task.dst))
        if out_label is not None:
            write_volume(out_label, _out_path(task.pair.label_path, task.src, task.dst))
        return {"stem": task.pair.stem, "status": "ok"}
    except (VoxkitError, OSError) as exc:
        return {"stem": task.pair.stem, "status": "fail", "detail": f"{type(exc).__name__}: {exc}"}


@main.command("augment")
@click.argument("src", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("dst", type=click.Path(file_okay=False, path_type=Path))
@click.option("--transform", type=click.Choice(TRANSFORM_NAMES), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--params", "params_text", default="{}", metavar="JSON",
              help='Transform parameters, e.g. \'{"p": 0.5}\'.')
@mp_option
@json_option
def augment(src, dst, transform, seed, params_text, mp, as_json):
    """Apply one stochastic transform to every pair, keyed on (seed, stem)."""
    try:
        params = json_module.loads(params_text)
    except json_module.JSONDecodeError as exc:
        raise click.UsageError(f"--params is not valid JSON: {exc}")
    workers = resolve_workers(mp)
    pairs = scan_pairs(src)
    dst.mkdir(parents=True, exist_ok=True)
    tasks = [_AugmentTask(p, src, dst, transform, seed, json_module.dumps(params, sort_keys=True))
             for p in pairs]
    results = pmap(_run_augment_task, tasks, workers)
    _post_process_dataset(dst, workers, "augment",
                          {"transform": transform, "seed": seed, "params": params})
    _echo_summary("augment", results, as_json=as_json)


# ---------------------------------------------------------------- eval


@main.command("eval")
@click.argument("pred", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("gt", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--classes", "num_classes", type=int, required=True, help="Class count incl. background.")
@click.option("--strict", is_flag=True, help="Exit nonzero when stems are unmatched.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Write metrics.json, metrics.txt, and metrics.csv here.")
@click.option("--plot", is_flag=True, help="Also render metric figures (requires --out).")
@mp_option
@json_option
def eval_cmd(pred, gt, num_classes, strict, out_dir, plot, mp, as_json):
    """Score predicted label volumes against ground truth."""
    if plot and out_dir is None:
        raise click.UsageError("--plot requires --out")
    workers = resolve_workers(mp)
    evaluation = evaluate_dataset(pred, gt, num_classes, workers)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json_atomic(out_dir / "metrics.json", evaluation.to_json())
        (out_dir / "metrics.txt").write_text(format_table(evaluation) + "\n", encoding="utf-8")
        (out_dir / "metrics.csv").write_text(to_csv(evaluation), encoding="utf-8")
        if plot:
            from .report import render_metric_figures

            render_metric_figures(evaluation, out_dir)
    if as_json:
        click.echo(json_module.dumps(evaluation.to_json(), indent=2, sort_keys=True))
    else:
        click.echo(format_table(evaluation))
    if strict and (evaluation.pred_only or evaluation.gt_only):
        sys.exit(1)


# ---------------------------------------------------------------- infer


@main.command("infer")
@click.argument("volume_path", metavar="VOLUME", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("out", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--model", required=True, metavar="threshold|PATH.onnx",
              help="Predictor: 'threshold' or a path to an ONNX model.")
@click.option("--patch-size", type=TRIPLE, required=True)
@click.option("--stride", type=TRIPLE, required=True)
@click.option("--lo", type=float, default=None, help="Threshold window lower bound (HU).")
@click.option("--hi", type=float, default=None, help="Threshold window upper bound (HU).")
@click.option("--io-spec", "io_spec_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              default=None, help="ONNX io spec JSON.")
@click.option("--wl", type=float, default=None, help="Window-level center preprocessing.")
@click.option("--ww", type=float, default=None, help="Window-level width preprocessing.")
@click.option("--norm", is_flag=True, help="Instance-normalize before prediction.")
@json_option
def infer(volume_path, out, model, patch_size, stride, lo, hi, io_spec_path, wl, ww, norm, as_json):
    """Sliding-window segmentation of a single volume."""
    if model == "threshold":
        if lo is None or hi is None:
            raise click.UsageError("--model threshold requires --lo and --hi")
        predictor = threshold_predictor(lo, hi)
    else:
        if io_spec_path is None:
            raise click.UsageError("--model PATH.onnx requires --io-spec")
        try:
            predictor = onnx_predictor(model, io_spec_path)
        except VoxkitError as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(1)
    preprocess = []
    if wl is not None and ww is not None:
        preprocess.append(("window_level", {"center": wl, "width": ww}))
    if norm:
        preprocess.append(("instance_normalize", {}))
    try:
        config = SlidingWindowConfig(patch_size=patch_size, stride=stride,
                                     preprocess=tuple(preprocess))
    except VoxkitError as exc:
        raise click.UsageError(str(exc))
    try:
        volume = read_volume(volume_path)
        result = sliding_window_infer(volume, predictor, config)
        out.parent.mkdir(parents=True, exist_ok=True)
        write_volume(result.labels, out)
    except VoxkitError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(1)
    summary = {
        "volume": str(volume_path),
        "output": str(out),
        "invocations": result.invocations,
        "padded": result.padding is not None,
        "classes": int(predictor.num_classes),
    }
    if as_json:
        click.echo(json_module.dumps(summary, indent=2, sort_keys=True))
    else:
        click.echo(f"wrote {out} ({result.invocations} windows)")


# ---------------------------------------------------------------- serve


@main.command("serve")
@click.option("--bind", default=None, metavar="HOST:PORT",
              help="Bind address (default VOXKIT_BIND or 127.0.0.1:8000).")
@click.option("--spool-dir", default=None, type=click.Path(file_okay=False),
              help="Spool uploaded volumes and masks to disk.")
def serve(bind, spool_dir):
    """Run the HTTP segmentation service."""
    import uvicorn

    from .service import create_app

    bind = bind or os.environ.get("VOXKIT_BIND", "127.0.0.1:8000")
    host, _, port_text = bind.rpartition(":")
    if not host or not port_text.isdigit():
        raise click.UsageError(f"--bind must look like HOST:PORT, got {bind!r}")
    app = create_app(spool_dir=spool_dir)
    uvicorn.run(app, host=host, port=int(port_text), log_level="info")


# The itk_resample / itk_patch / itk_check console scripts point straight at
# the `resample`, `patch`, and `check` command objects (see pyproject.toml),
# so invocations written against those tool names keep working verbatim.

if __name__ == "__main__":
    main()
