/** Viewer state and the pure update helpers behind the UI controls. */

import type { Axis, HealthInfo, VolumeMeta } from "./api.js";

export interface ViewerState {
  serverUrl: string;
  health: HealthInfo | null;
  connectionError: string | null;
  volumeId: string | null;
  meta: VolumeMeta | null;
  axis: Axis;
  index: number;
  wl: number | null; // null -> let the server window the full range
  ww: number | null;
  maskId: string | null;
  jobId: string | null;
  overlayOpacity: number;
  hiddenClasses: ReadonlySet<number>;
}

export function initialState(serverUrl: string): ViewerState {
  return {
    serverUrl,
    health: null,
    connectionError: null,
    volumeId: null,
    meta: null,
    axis: "z",
    index: 0,
    wl: null,
    ww: null,
    maskId: null,
    jobId: null,
    overlayOpacity: 0.5,
    hiddenClasses: new Set(),
  };
}

const AXIS_INDEX: Record<Axis, number> = { z: 0, y: 1, x: 2 };

/** Slice count along an axis ([Z, Y, X] meta order). */
export function axisLength(meta: VolumeMeta, axis: Axis): number {
  return meta.size[AXIS_INDEX[axis]];
}

/** [rows, cols] of a slice: the remaining two axes, slower first. */
export function sliceDims(meta: VolumeMeta, axis: Axis): [number, number] {
  const [z, y, x] = meta.size;
  switch (axis) {
    case "z":
      return [y, x];
    case "y":
      return [z, x];
    case "x":
      return [z, y];
  }
}

export function middleIndex(length: number): number {
  return Math.floor(length / 2);
}

export function clampIndex(index: number, length: number): number {
  if (!Number.isFinite(index)) return 0;
  return Math.min(Math.max(Math.trunc(index), 0), Math.max(length - 1, 0));
}

export function clampOpacity(value: number): number {
  if (!Number.isFinite(value)) return 0;
  return Math.min(Math.max(value, 0), 1);
}

export function withConnection(state: ViewerState, health: HealthInfo): ViewerState {
  return { ...state, health, connectionError: null };
}

export function withConnectionError(state: ViewerState, message: string): ViewerState {
  return { ...state, health: null, connectionError: message };
}

/** New volume loaded: reset to the middle z slice, drop any mask/job. */
export function withVolume(state: ViewerState, volumeId: string, meta: VolumeMeta): ViewerState {
  return {
    ...state,
    volumeId,
    meta,
    axis: "z",
    index: middleIndex(axisLength(meta, "z")),
    maskId: null,
    jobId: null,
  };
}

export function withAxis(state: ViewerState, axis: Axis): ViewerState {
  if (!state.meta) return { ...state, axis };
  const length = axisLength(state.meta, axis);
  return { ...state, axis, index: clampIndex(middleIndex(length), length) };
}

export function withIndex(state: ViewerState, index: number): ViewerState {
  if (!state.meta) return state;
  return { ...state, index: clampIndex(index, axisLength(state.meta, state.axis)) };
}

export function withWindow(state: ViewerState, wl: number | null, ww: number | null): ViewerState {
  if (wl !== null && ww !== null && ww <= 0) {
    return state; // invalid width; leave the view untouched
  }
  return { ...state, wl, ww };
}

export function withOpacity(state: ViewerState, opacity: number): ViewerState {
  return { ...state, overlayOpacity: clampOpacity(opacity) };
}

export function toggleClass(state: ViewerState, cls: number): ViewerState {
  const hidden = new Set(state.hiddenClasses);
  if (hidden.has(cls)) {
    hidden.delete(cls);
  } else {
    hidden.add(cls);
  }
  return { ...state, hiddenClasses: hidden };
}

export function debounce<Args extends unknown[]>(
  fn: (...args: Args) => void,
  waitMs: number,
): (...args: Args) => void {
  let timer: ReturnType<typeof setTimeout> | undefined;
  return (...args: Args) => {
    if (timer !== undefined) clearTimeout(timer);
    timer = setTimeout(() => fn(...args), waitMs);
  };
}
