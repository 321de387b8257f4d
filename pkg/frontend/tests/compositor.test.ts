import { describe, expect, it } from "vitest";

import {
  OverlayMismatchError,
  classesPresent,
  composite,
  filterClasses,
  grayToRgba,
  makeRgba,
} from "../src/compositor.js";
import { PALETTE, classOfPixel, paletteColor } from "../src/palette.js";

function maskWithPixel(width: number, height: number, x: number, y: number, cls: number) {
  const mask = makeRgba(width, height);
  const [r, g, b] = paletteColor(cls);
  const i = (y * width + x) * 4;
  mask.data[i] = r;
  mask.data[i + 1] = g;
  mask.data[i + 2] = b;
  mask.data[i + 3] = 255;
  return mask;
}

describe("palette", () => {
  it("class 0 is transparent black and classes wrap past 31", () => {
    expect(paletteColor(0)).toEqual([0, 0, 0]);
    expect(paletteColor(1)).toEqual(PALETTE[1]);
    expect(paletteColor(32)).toEqual(PALETTE[1]);
  });

  it("pixel classification inverts the palette", () => {
    for (let cls = 1; cls < PALETTE.length; cls++) {
      const [r, g, b] = PALETTE[cls];
      expect(classOfPixel(r, g, b, 255)).toBe(cls);
    }
    expect(classOfPixel(0, 0, 0, 0)).toBe(0);
    expect(classOfPixel(1, 2, 3, 255)).toBeNull();
  });
});

describe("grayToRgba", () => {
  it("expands to opaque gray pixels", () => {
    const rgba = grayToRgba(2, 1, new Uint8Array([0, 200]));
    expect([...rgba.data]).toEqual([0, 0, 0, 255, 200, 200, 200, 255]);
  });

  it("rejects wrong buffer sizes", () => {
    expect(() => grayToRgba(2, 2, new Uint8Array(3))).toThrow(OverlayMismatchError);
  });
});

describe("composite", () => {
  it("opacity 1 replaces base pixels where the mask is opaque", () => {
    const base = grayToRgba(2, 2, new Uint8Array([10, 20, 30, 40]));
    const mask = maskWithPixel(2, 2, 1, 0, 1);
    const out = composite(base, mask, 1.0);
    const [r, g, b] = paletteColor(1);
    expect([...out.data.slice(4, 8)]).toEqual([r, g, b, 255]);
    expect([...out.data.slice(0, 4)]).toEqual([10, 10, 10, 255]);
  });

  it("opacity 0 leaves the image untouched", () => {
    const base = grayToRgba(2, 2, new Uint8Array([10, 20, 30, 40]));
    const mask = maskWithPixel(2, 2, 0, 0, 3);
    const out = composite(base, mask, 0);
    expect([...out.data]).toEqual([...base.data]);
  });

  it("opacity 0.5 blends linearly", () => {
    const base = grayToRgba(1, 1, new Uint8Array([100]));
    const mask = maskWithPixel(1, 1, 0, 0, 21); // white palette entry
    const out = composite(base, mask, 0.5);
    expect(out.data[0]).toBe(Math.round(100 * 0.5 + 255 * 0.5));
  });

  it("dimension mismatch aborts the overlay", () => {
    const base = grayToRgba(2, 2, new Uint8Array(4));
    const mask = makeRgba(3, 2);
    expect(() => composite(base, mask, 1)).toThrow(OverlayMismatchError);
    expect(() => composite(base, mask, 1)).toThrow(/dimension mismatch/);
  });
});

describe("class filtering", () => {
  it("hides hidden classes and reports present ones", () => {
    const mask = makeRgba(2, 1);
    const [r1, g1, b1] = paletteColor(1);
    const [r2, g2, b2] = paletteColor(2);
    mask.data.set([r1, g1, b1, 255, r2, g2, b2, 255]);
    expect(classesPresent(mask)).toEqual([1, 2]);
    const filtered = filterClasses(mask, new Set([1]));
    expect(filtered.data[3]).toBe(0);
    expect(filtered.data[7]).toBe(255);
    expect(classesPresent(filtered)).toEqual([2]);
    // original untouched
    expect(mask.data[3]).toBe(255);
  });

  it("no hidden classes returns the same buffer", () => {
    const mask = maskWithPixel(1, 1, 0, 0, 4);
    expect(filterClasses(mask, new Set())).toBe(mask);
  });
});
