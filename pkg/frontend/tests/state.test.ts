import { describe, expect, it, vi } from "vitest";

import type { VolumeMeta } from "../src/api.js";
import {
  axisLength,
  clampIndex,
  clampOpacity,
  debounce,
  initialState,
  middleIndex,
  sliceDims,
  toggleClass,
  withAxis,
  withIndex,
  withOpacity,
  withVolume,
  withWindow,
} from "../src/state.js";

const meta: VolumeMeta = {
  size: [16, 24, 32],
  spacing: [1, 1, 1],
  origin: [0, 0, 0],
  orientation: "SPL",
  element_type: "int16",
};

describe("axis geometry", () => {
  it("axis length follows [Z, Y, X] order", () => {
    expect(axisLength(meta, "z")).toBe(16);
    expect(axisLength(meta, "y")).toBe(24);
    expect(axisLength(meta, "x")).toBe(32);
  });

  it("slice dims are the remaining axes, slower first", () => {
    expect(sliceDims(meta, "z")).toEqual([24, 32]);
    expect(sliceDims(meta, "y")).toEqual([16, 32]);
    expect(sliceDims(meta, "x")).toEqual([16, 24]);
  });
});

describe("index handling", () => {
  it("loading a 16-slice volume gives slider range 0..15 and middle slice", () => {
    const state = withVolume(initialState("http://x"), "vol1", meta);
    expect(state.axis).toBe("z");
    expect(state.index).toBe(8);
    expect(axisLength(meta, state.axis) - 1).toBe(15);
  });

  it("axis switch re-centers and stays in range", () => {
    let state = withVolume(initialState("http://x"), "vol1", meta);
    state = withAxis(state, "x");
    expect(state.index).toBe(middleIndex(32));
  });

  it("clamps out-of-range indices", () => {
    expect(clampIndex(99, 16)).toBe(15);
    expect(clampIndex(-3, 16)).toBe(0);
    expect(clampIndex(NaN, 16)).toBe(0);
    const state = withIndex(withVolume(initialState("s"), "v", meta), 999);
    expect(state.index).toBe(15);
  });
});

describe("view parameters", () => {
  it("opacity is clamped to [0, 1]", () => {
    expect(clampOpacity(2)).toBe(1);
    expect(clampOpacity(-1)).toBe(0);
    expect(withOpacity(initialState("s"), 0.75).overlayOpacity).toBe(0.75);
  });

  it("rejects non-positive window widths", () => {
    const state = initialState("s");
    expect(withWindow(state, 40, 0)).toBe(state);
    expect(withWindow(state, 40, 400).ww).toBe(400);
    expect(withWindow(state, null, null).wl).toBeNull();
  });

  it("class toggles flip membership", () => {
    let state = initialState("s");
    state = toggleClass(state, 2);
    expect(state.hiddenClasses.has(2)).toBe(true);
    state = toggleClass(state, 2);
    expect(state.hiddenClasses.has(2)).toBe(false);
  });

  it("new volume clears mask and job", () => {
    let state = initialState("s");
    state = { ...state, maskId: "m", jobId: "j" };
    state = withVolume(state, "v2", meta);
    expect(state.maskId).toBeNull();
    expect(state.jobId).toBeNull();
  });
});

describe("debounce", () => {
  it("only the last call within the window fires", () => {
    vi.useFakeTimers();
    const hits: number[] = [];
    const fn = debounce((n: number) => hits.push(n), 100);
    fn(1);
    fn(2);
    fn(3);
    vi.advanceTimersByTime(150);
    expect(hits).toEqual([3]);
    vi.useRealTimers();
  });
});
