/** Pure pixel math for overlaying mask slices on image slices.
 *
 * The viewer never computes segmentations itself; it only composites the
 * PNG pixels the service returned. Buffers use the ImageData layout
 * (RGBA, row-major) so the canvas path is a straight putImageData.
 */

import { classOfPixel } from "./palette.js";

export interface RgbaImage {
  width: number;
  height: number;
  data: Uint8ClampedArray; // 4 bytes per pixel
}

export class OverlayMismatchError extends Error {}

export function makeRgba(width: number, height: number): RgbaImage {
  return { width, height, data: new Uint8ClampedArray(width * height * 4) };
}

/** Expand an 8-bit grayscale buffer to opaque RGBA. */
export function grayToRgba(width: number, height: number, gray: Uint8Array | Uint8ClampedArray): RgbaImage {
  if (gray.length !== width * height) {
    throw new OverlayMismatchError(
      `grayscale buffer has ${gray.length} pixels, expected ${width * height}`,
    );
  }
  const out = makeRgba(width, height);
  for (let i = 0; i < gray.length; i++) {
    const v = gray[i];
    out.data[i * 4] = v;
    out.data[i * 4 + 1] = v;
    out.data[i * 4 + 2] = v;
    out.data[i * 4 + 3] = 255;
  }
  return out;
}

/** Zero the alpha of mask pixels whose palette class is hidden. */
export function filterClasses(mask: RgbaImage, hidden: ReadonlySet<number>): RgbaImage {
  if (hidden.size === 0) return mask;
  const out: RgbaImage = { width: mask.width, height: mask.height, data: mask.data.slice() };
  for (let i = 0; i < out.data.length; i += 4) {
    if (out.data[i + 3] === 0) continue;
    const cls = classOfPixel(out.data[i], out.data[i + 1], out.data[i + 2], out.data[i + 3]);
    if (cls !== null && hidden.has(cls)) {
      out.data[i + 3] = 0;
    }
  }
  return out;
}

/** Distinct palette classes present in a mask slice (transparent excluded). */
export function classesPresent(mask: RgbaImage): number[] {
  const seen = new Set<number>();
  for (let i = 0; i < mask.data.length; i += 4) {
    if (mask.data[i + 3] === 0) continue;
    const cls = classOfPixel(mask.data[i], mask.data[i + 1], mask.data[i + 2], mask.data[i + 3]);
    if (cls !== null) seen.add(cls);
  }
  return [...seen].sort((a, b) => a - b);
}

/**
 * Alpha-composite the overlay onto the base at the given opacity.
 *
 * Dimensions must match exactly (the image and mask slices were requested
 * with the same axis/index, so anything else is a bug upstream).
 * At opacity 1 an opaque mask pixel replaces the base pixel outright.
 */
export function composite(base: RgbaImage, overlay: RgbaImage, opacity: number): RgbaImage {
  if (base.width !== overlay.width || base.height !== overlay.height) {
    throw new OverlayMismatchError(
      `slice dimension mismatch: image ${base.width}x${base.height} vs ` +
        `mask ${overlay.width}x${overlay.height}`,
    );
  }
  const a = Math.min(Math.max(opacity, 0), 1);
  const out = makeRgba(base.width, base.height);
  for (let i = 0; i < out.data.length; i += 4) {
    const maskAlpha = (overlay.data[i + 3] / 255) * a;
    const keep = 1 - maskAlpha;
    out.data[i] = Math.round(base.data[i] * keep + overlay.data[i] * maskAlpha);
    out.data[i + 1] = Math.round(base.data[i + 1] * keep + overlay.data[i + 1] * maskAlpha);
    out.data[i + 2] = Math.round(base.data[i + 2] * keep + overlay.data[i + 2] * maskAlpha);
    out.data[i + 3] = 255;
  }
  return out;
}
