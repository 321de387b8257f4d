"""HTTP segmentation backend: volume upload, slice rendering, and
sliding-window segmentation jobs.

The service is a transport over the library: segmentation results are
produced by the same engine as the offline CLI, so a mask downloaded here
is byte-identical to the equivalent ``infer`` invocation. Volumes and
masks live in an in-memory store (optionally spooled to disk); inference
runs on a single FIFO worker thread so uploads and slice reads stay
responsive during a job.
"""

from __future__ import annotations

import io
import os
import queue
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image
from pydantic import BaseModel

from . import __version__
from .errors import VoxkitError
from .infer import SlidingWindowConfig, onnx_predictor, sliding_window_infer, threshold_predictor
from .io import mha_bytes, read_volume_bytes
from .ops import window_level
from .volume import Volume

__all__ = ["create_app", "PALETTE"]

PREDICTORS = ("threshold", "onnx")

# Fixed 32-entry label palette (class 0 renders transparent).
PALETTE = (
    (0, 0, 0),
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (250, 190, 212), (0, 128, 128), (220, 190, 255),
    (170, 110, 40), (255, 250, 200), (128, 0, 0), (170, 255, 195),
    (128, 128, 0), (255, 215, 180), (0, 0, 128), (128, 128, 128),
    (255, 255, 255), (163, 255, 15), (255, 80, 80), (80, 160, 255),
    (200, 120, 0), (90, 60, 150), (0, 200, 160), (255, 0, 120),
    (120, 220, 120), (150, 75, 0), (40, 90, 140),
)

_AXES = {"z": 0, "y": 1, "x": 2}


@dataclass
class _Job:
    id: str
    volume_id: str
    predictor: str
    config: dict
    state: str = "queued"  # queued -> running -> done | failed
    progress: float = 0.0
    mask_id: str | None = None
    error: str | None = None
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    _ORDER = {"queued": 0, "running": 1, "done": 2, "failed": 2}

    def advance(self, state: str, **updates) -> None:
        with self.lock:
            if self._ORDER[state] < self._ORDER[self.state]:
                raise VoxkitError(f"job state cannot move {self.state} -> {state}")
            self.state = state
            for key, value in updates.items():
                setattr(self, key, value)

    def to_json(self) -> dict:
        with self.lock:
            return {
                "id": self.id,
                "volume_id": self.volume_id,
                "predictor": self.predictor,
                "config": self.config,
                "state": self.state,
                "progress": round(self.progress, 4),
                "mask_id": self.mask_id,
                "error": self.error,
            }


@dataclass(frozen=True)
class _StoredVolume:
    id: str
    volume: Volume
    meta: dict


class _Store:
    """Thread-safe volume/mask/job registry."""

    def __init__(self, spool_dir: Path | None):
        self._lock = threading.Lock()
        self._volumes: dict[str, _StoredVolume] = {}
        self._masks: dict[str, tuple[Volume, bytes]] = {}
        self.jobs: dict[str, _Job] = {}
        self.spool_dir = spool_dir
        if spool_dir is not None:
            spool_dir.mkdir(parents=True, exist_ok=True)

    def add_volume(self, volume: Volume, blob: bytes) -> _StoredVolume:
        vid = uuid.uuid4().hex
        stored = _StoredVolume(id=vid, volume=volume, meta=volume.describe())
        with self._lock:
            self._volumes[vid] = stored
        if self.spool_dir is not None:
            (self.spool_dir / f"volume_{vid}.bin").write_bytes(blob)
        return stored

    def get_volume(self, vid: str) -> _StoredVolume | None:
        with self._lock:
            return self._volumes.get(vid)

    def add_mask(self, volume: Volume) -> str:
        mid = uuid.uuid4().hex
        blob = mha_bytes(volume, compress=True)
        with self._lock:
            self._masks[mid] = (volume, blob)
        if self.spool_dir is not None:
            (self.spool_dir / f"mask_{mid}.mha").write_bytes(blob)
        return mid

    def get_mask(self, mid: str) -> tuple[Volume, bytes] | None:
        with self._lock:
            return self._masks.get(mid)

    def add_job(self, job: _Job) -> None:
        with self._lock:
            self.jobs[job.id] = job

    def get_job(self, jid: str) -> _Job | None:
        with self._lock:
            return self.jobs.get(jid)


class SegmentRequest(BaseModel):
    predictor: str
    patch_size: tuple[int, int, int]
    stride: tuple[int, int, int]
    lo: float | None = None
    hi: float | None = None
    model_path: str | None = None
    io_spec: dict | None = None
    wl: float | None = None
    ww: float | None = None
    normalize: bool = False


def _error(status: int, exc_or_name, detail: str | None = None) -> JSONResponse:
    if isinstance(exc_or_name, BaseException):
        name = type(exc_or_name).__name__
        detail = str(exc_or_name)
    else:
        name = exc_or_name
    return JSONResponse(status_code=status, content={"error": name, "detail": detail or name})


def _build_predictor(request: SegmentRequest):
    if request.predictor == "threshold":
        if request.lo is None or request.hi is None:
            raise VoxkitError("threshold predictor requires lo and hi")
        return threshold_predictor(request.lo, request.hi)
    if request.predictor == "onnx":
        if not request.model_path or request.io_spec is None:
            raise VoxkitError("onnx predictor requires model_path and io_spec")
        return onnx_predictor(request.model_path, request.io_spec)
    raise VoxkitError(f"unknown predictor {request.predictor!r}; available: {PREDICTORS}")


def _sliding_config(request: SegmentRequest) -> SlidingWindowConfig:
    preprocess = []
    if request.wl is not None and request.ww is not None:
        preprocess.append(("window_level", {"center": request.wl, "width": request.ww}))
    if request.normalize:
        preprocess.append(("instance_normalize", {}))
    return SlidingWindowConfig(
        patch_size=request.patch_size, stride=request.stride, preprocess=tuple(preprocess)
    )


def _slice_array(volume: Volume, axis: str, index: int) -> np.ndarray:
    ax = _AXES[axis]
    if not 0 <= index < volume.size[ax]:
        raise IndexError(f"index {index} out of range for axis {axis} of size {volume.size[ax]}")
    if ax == 0:
        return volume.data[index]
    if ax == 1:
        return volume.data[:, index, :]
    return volume.data[:, :, index]


def _grayscale_png(plane: np.ndarray, wl: float | None, ww: float | None, volume: Volume) -> bytes:
    if wl is None or ww is None:
        lo = float(volume.data.min())
        hi = float(volume.data.max())
        wl = (lo + hi) / 2.0
        ww = max(hi - lo, 1.0)
    windowed = window_level(Volume(plane[None].astype(volume.data.dtype)), wl, ww).data[0]
    u8 = np.round(windowed * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(u8, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def _palette_png(plane: np.ndarray) -> bytes:
    lut = np.zeros((256, 4), dtype=np.uint8)
    for value in range(1, 256):
        rgb = PALETTE[(value - 1) % (len(PALETTE) - 1) + 1]
        lut[value] = (*rgb, 255)
    rgba = lut[np.clip(plane, 0, 255).astype(np.uint8)]
    buf = io.BytesIO()
    Image.fromarray(rgba, mode="RGBA").save(buf, format="PNG")
    return buf.getvalue()


def _run_job(store: _Store, job: _Job, request: SegmentRequest) -> None:
    try:
        stored = store.get_volume(job.volume_id)
        if stored is None:
            raise VoxkitError(f"volume {job.volume_id} disappeared")
        predictor = _build_predictor(request)
        config = _sliding_config(request)
        job.advance("running")

        def on_progress(done: int, total: int) -> None:
            with job.lock:
                job.progress = done / total

        result = sliding_window_infer(stored.volume, predictor, config, progress=on_progress)
        mask_id = store.add_mask(result.labels)
        job.advance("done", progress=1.0, mask_id=mask_id)
    except Exception as exc:  # job failures must surface via state, not crash the worker
        job.advance("failed", error=f"{type(exc).__name__}: {exc}")


def create_app(spool_dir: str | None = None, max_upload_mb: float | None = None) -> FastAPI:
    """Build the service; configuration falls back to VOXKIT_SPOOL_DIR and
    VOXKIT_MAX_UPLOAD_MB environment variables."""
    if spool_dir is None:
        spool_dir = os.environ.get("VOXKIT_SPOOL_DIR") or None
    if max_upload_mb is None:
        max_upload_mb = float(os.environ.get("VOXKIT_MAX_UPLOAD_MB", "512"))
    store = _Store(Path(spool_dir) if spool_dir else None)

    job_queue: queue.Queue[tuple[_Job, SegmentRequest] | None] = queue.Queue()

    def worker() -> None:
        while True:
            item = job_queue.get()
            if item is None:
                return
            _run_job(store, *item)

    worker_thread = threading.Thread(target=worker, name="voxkit-inference", daemon=True)
    worker_thread.start()

    app = FastAPI(title="voxkit segmentation service", version=__version__)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.store = store

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__, "predictors": list(PREDICTORS)}

    @app.post("/volumes", status_code=201)
    async def upload_volume(request: Request):
        blob = await request.body()
        if len(blob) > max_upload_mb * 1024 * 1024:
            return _error(413, "UploadTooLarge", f"body exceeds {max_upload_mb} MiB")
        try:
            volume = read_volume_bytes(blob)
        except VoxkitError as exc:
            return _error(400, exc)
        stored = store.add_volume(volume, blob)
        return {"id": stored.id, "meta": stored.meta}

    @app.get("/volumes/{vid}")
    def volume_meta(vid: str):
        stored = store.get_volume(vid)
        if stored is None:
            return _error(404, "NotFound", f"no volume {vid}")
        return {"id": stored.id, "meta": stored.meta}

    @app.get("/volumes/{vid}/slice")
    def volume_slice(vid: str, axis: str = "z", index: int = 0,
                     wl: float | None = None, ww: float | None = None):
        stored = store.get_volume(vid)
        if stored is None:
            return _error(404, "NotFound", f"no volume {vid}")
        if axis not in _AXES:
            return _error(422, "BadAxis", f"axis must be one of {sorted(_AXES)}")
        try:
            plane = _slice_array(stored.volume, axis, index)
        except IndexError as exc:
            return _error(422, "IndexOutOfRange", str(exc))
        return Response(content=_grayscale_png(plane, wl, ww, stored.volume),
                        media_type="image/png")

    @app.post("/volumes/{vid}/segment", status_code=202)
    def segment(vid: str, request: SegmentRequest):
        stored = store.get_volume(vid)
        if stored is None:
            return _error(404, "NotFound", f"no volume {vid}")
        if request.predictor not in PREDICTORS:
            return _error(400, "UnknownPredictor",
                          f"unknown predictor {request.predictor!r}; available: {PREDICTORS}")
        try:
            SlidingWindowConfig(patch_size=request.patch_size, stride=request.stride)
        except VoxkitError as exc:
            return _error(422, exc)
        job = _Job(
            id=uuid.uuid4().hex,
            volume_id=vid,
            predictor=request.predictor,
            config={"patch_size": list(request.patch_size), "stride": list(request.stride)},
        )
        store.add_job(job)
        job_queue.put((job, request))
        return {"job_id": job.id}

    @app.get("/jobs/{jid}")
    def job_state(jid: str):
        job = store.get_job(jid)
        if job is None:
            return _error(404, "NotFound", f"no job {jid}")
        return job.to_json()

    @app.get("/masks/{mid}")
    def mask_bytes_endpoint(mid: str):
        entry = store.get_mask(mid)
        if entry is None:
            return _error(404, "NotFound", f"no mask {mid}")
        _, blob = entry
        return Response(content=blob, media_type="application/octet-stream",
                        headers={"Content-Disposition": f'attachment; filename="{mid}.mha"'})

    @app.get("/masks/{mid}/slice")
    def mask_slice(mid: str, axis: str = "z", index: int = 0):
        entry = store.get_mask(mid)
        if entry is None:
            return _error(404, "NotFound", f"no mask {mid}")
        volume, _ = entry
        if axis not in _AXES:
            return _error(422, "BadAxis", f"axis must be one of {sorted(_AXES)}")
        try:
            plane = _slice_array(volume, axis, index)
        except IndexError as exc:
            return _error(422, "IndexOutOfRange", str(exc))
        return Response(content=_palette_png(plane), media_type="image/png")

    return app
