/** DOM wiring for the slice viewer. All pixel and state logic lives in the
 * pure modules (api/state/compositor); this file only moves data between
 * the controls, the service, and the canvas.
 */

import { ApiClient, ApiError, type Axis, type JobState } from "./api.js";
import {
  composite,
  filterClasses,
  classesPresent,
  type RgbaImage,
} from "./compositor.js";
import {
  axisLength,
  debounce,
  initialState,
  sliceDims,
  toggleClass,
  withAxis,
  withConnection,
  withConnectionError,
  withIndex,
  withOpacity,
  withVolume,
  withWindow,
  type ViewerState,
} from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

let state: ViewerState = initialState(localStorage.getItem("voxkit-server") ?? "http://127.0.0.1:8000");
let api = new ApiClient(state.serverUrl);
let requestToken = 0;
const sliceCache = new Map<string, RgbaImage>();

const statusBanner = el<HTMLDivElement>("status");
const serverInput = el<HTMLInputElement>("server-url");
const fileInput = el<HTMLInputElement>("volume-file");
const metaPanel = el<HTMLElement>("meta-panel");
const axisSelect = el<HTMLSelectElement>("axis");
const indexSlider = el<HTMLInputElement>("slice-index");
const indexLabel = el<HTMLSpanElement>("slice-label");
const wlInput = el<HTMLInputElement>("wl");
const wwInput = el<HTMLInputElement>("ww");
const predictorSelect = el<HTMLSelectElement>("predictor");
const loInput = el<HTMLInputElement>("lo");
const hiInput = el<HTMLInputElement>("hi");
const patchInput = el<HTMLInputElement>("patch-size");
const strideInput = el<HTMLInputElement>("stride");
const runButton = el<HTMLButtonElement>("run-segmentation");
const jobLabel = el<HTMLSpanElement>("job-status");
const opacitySlider = el<HTMLInputElement>("opacity");
const classBoxes = el<HTMLDivElement>("class-toggles");
const canvas = el<HTMLCanvasElement>("view");

function setStatus(text: string, kind: "ok" | "error" | "info" = "info"): void {
  statusBanner.textContent = text;
  statusBanner.dataset.kind = kind;
}

async function decodePng(buffer: ArrayBuffer): Promise<RgbaImage> {
  const bitmap = await createImageBitmap(new Blob([buffer], { type: "image/png" }));
  const scratch = document.createElement("canvas");
  scratch.width = bitmap.width;
  scratch.height = bitmap.height;
  const ctx = scratch.getContext("2d", { willReadFrequently: true });
  if (!ctx) throw new Error("2d canvas unavailable");
  ctx.drawImage(bitmap, 0, 0);
  const image = ctx.getImageData(0, 0, bitmap.width, bitmap.height);
  return { width: image.width, height: image.height, data: image.data };
}

async function fetchSliceRgba(url: string): Promise<RgbaImage> {
  const cached = sliceCache.get(url);
  if (cached) return cached;
  const response = await fetch(url);
  if (!response.ok) throw new ApiError(response.status, `HTTP${response.status}`, url);
  const rgba = await decodePng(await response.arrayBuffer());
  sliceCache.set(url, rgba);
  return rgba;
}

function paint(image: RgbaImage): void {
  const scratch = document.createElement("canvas");
  scratch.width = image.width;
  scratch.height = image.height;
  const sctx = scratch.getContext("2d");
  if (!sctx) return;
  sctx.putImageData(new ImageData(image.data.slice(), image.width, image.height), 0, 0);
  const scale = Math.max(1, Math.floor(Math.min(512 / image.width, 512 / image.height)));
  canvas.width = image.width * scale;
  canvas.height = image.height * scale;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.imageSmoothingEnabled = false; // keep label boundaries crisp
  ctx.drawImage(scratch, 0, 0, canvas.width, canvas.height);
}

async function redraw(): Promise<void> {
  if (!state.volumeId || !state.meta) return;
  const token = ++requestToken;
  const wl = state.wl ?? undefined;
  const ww = state.ww ?? undefined;
  try {
    const baseUrl = api.sliceUrl(state.volumeId, state.axis, state.index, wl, ww);
    const base = await fetchSliceRgba(baseUrl);
    let frame = base;
    if (state.maskId) {
      const mask = await fetchSliceRgba(api.maskSliceUrl(state.maskId, state.axis, state.index));
      frame = composite(base, filterClasses(mask, state.hiddenClasses), state.overlayOpacity);
    }
    if (token !== requestToken) return; // superseded while fetching
    paint(frame);
    const [rows, cols] = sliceDims(state.meta, state.axis);
    indexLabel.textContent = `${state.axis}=${state.index} (${cols}x${rows})`;
  } catch (error) {
    if (token === requestToken) setStatus(String(error), "error");
  }
}

const scheduleRedraw = debounce(() => void redraw(), 150);

function syncControls(): void {
  if (!state.meta) return;
  const length = axisLength(state.meta, state.axis);
  indexSlider.max = String(length - 1);
  indexSlider.value = String(state.index);
}

function renderMeta(): void {
  if (!state.meta) {
    metaPanel.textContent = "no volume loaded";
    return;
  }
  const m = state.meta;
  metaPanel.innerHTML = "";
  const rows: Array<[string, string]> = [
    ["size [Z Y X]", m.size.join(" x ")],
    ["spacing mm", m.spacing.map((s) => s.toFixed(3)).join(" x ")],
    ["orientation", m.orientation ?? "oblique"],
    ["element type", m.element_type],
  ];
  for (const [label, value] of rows) {
    const dt = document.createElement("dt");
    dt.textContent = label;
    const dd = document.createElement("dd");
    dd.textContent = value;
    metaPanel.append(dt, dd);
  }
}

async function renderClassToggles(): Promise<void> {
  classBoxes.innerHTML = "";
  if (!state.maskId) return;
  const mask = await fetchSliceRgba(api.maskSliceUrl(state.maskId, state.axis, state.index));
  for (const cls of classesPresent(mask)) {
    const label = document.createElement("label");
    const box = document.createElement("input");
    box.type = "checkbox";
    box.checked = !state.hiddenClasses.has(cls);
    box.addEventListener("change", () => {
      state = toggleClass(state, cls);
      scheduleRedraw();
    });
    label.append(box, ` class ${cls}`);
    classBoxes.append(label);
  }
}

async function connect(): Promise<void> {
  state = { ...state, serverUrl: serverInput.value.trim() };
  localStorage.setItem("voxkit-server", state.serverUrl);
  api = new ApiClient(state.serverUrl);
  sliceCache.clear();
  try {
    const health = await api.health();
    state = withConnection(state, health);
    predictorSelect.innerHTML = "";
    for (const name of health.predictors) {
      const option = document.createElement("option");
      option.value = name;
      option.textContent = name;
      predictorSelect.append(option);
    }
    setStatus(`connected: voxkit ${health.version} (${health.predictors.join(", ")})`, "ok");
  } catch (error) {
    state = withConnectionError(state, String(error));
    setStatus(`cannot reach ${state.serverUrl}: ${error}`, "error");
  }
}

async function loadVolume(file: File): Promise<void> {
  try {
    setStatus(`uploading ${file.name}...`);
    const result = await api.uploadVolume(await file.arrayBuffer());
    sliceCache.clear();
    state = withVolume(state, result.id, result.meta);
    renderMeta();
    syncControls();
    classBoxes.innerHTML = "";
    setStatus(`loaded ${file.name} (${result.meta.size.join("x")})`, "ok");
    await redraw();
  } catch (error) {
    setStatus(`upload failed: ${error}`, "error");
  }
}

function parseTriple(text: string): [number, number, number] {
  const parts = text.trim().split(/[\s,x]+/).map(Number);
  if (parts.length !== 3 || parts.some((p) => !Number.isInteger(p) || p <= 0)) {
    throw new Error(`expected three positive integers, got "${text}"`);
  }
  return [parts[0], parts[1], parts[2]];
}

async function runSegmentation(): Promise<void> {
  if (!state.volumeId) {
    setStatus("load a volume first", "error");
    return;
  }
  try {
    runButton.disabled = true;
    const params = {
      predictor: predictorSelect.value,
      patch_size: parseTriple(patchInput.value),
      stride: parseTriple(strideInput.value),
      lo: loInput.value === "" ? undefined : Number(loInput.value),
      hi: hiInput.value === "" ? undefined : Number(hiInput.value),
    };
    const jobId = await api.segment(state.volumeId, params);
    state = { ...state, jobId };
    jobLabel.textContent = "queued";
    const final = await api.waitForJob(jobId, {
      intervalMs: 1000,
      onTick: (job: JobState) => {
        jobLabel.textContent = `${job.state} ${(job.progress * 100).toFixed(0)}%`;
      },
    });
    if (final.state === "failed") {
      jobLabel.textContent = "failed";
      setStatus(`segmentation failed: ${final.error}`, "error");
      return;
    }
    state = { ...state, maskId: final.mask_id, hiddenClasses: new Set() };
    jobLabel.textContent = "done";
    await renderClassToggles();
    await redraw();
  } catch (error) {
    setStatus(`segmentation error: ${error}`, "error");
  } finally {
    runButton.disabled = false;
  }
}

export function start(): void {
  serverInput.value = state.serverUrl;
  el<HTMLButtonElement>("connect").addEventListener("click", () => void connect());
  fileInput.addEventListener("change", () => {
    const file = fileInput.files?.[0];
    if (file) void loadVolume(file);
  });
  axisSelect.addEventListener("change", () => {
    state = withAxis(state, axisSelect.value as Axis);
    syncControls();
    scheduleRedraw();
  });
  indexSlider.addEventListener("input", () => {
    state = withIndex(state, Number(indexSlider.value));
    scheduleRedraw();
  });
  const onWindowChange = () => {
    const wl = wlInput.value === "" ? null : Number(wlInput.value);
    const ww = wwInput.value === "" ? null : Number(wwInput.value);
    state = withWindow(state, wl, ww);
    sliceCache.clear(); // window changes invalidate cached grayscale slices
    scheduleRedraw();
  };
  wlInput.addEventListener("change", onWindowChange);
  wwInput.addEventListener("change", onWindowChange);
  opacitySlider.addEventListener("input", () => {
    state = withOpacity(state, Number(opacitySlider.value) / 100);
    scheduleRedraw();
  });
  runButton.addEventListener("click", () => void runSegmentation());
  void connect();
}

start();
