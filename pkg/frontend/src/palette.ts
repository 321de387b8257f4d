/** Label palette mirroring the service's mask-slice coloring.
 *
 * Class 0 is transparent; classes >= 1 use entries 1..31, wrapping.
 */

export const PALETTE: ReadonlyArray<readonly [number, number, number]> = [
  [0, 0, 0],
  [230, 25, 75], [60, 180, 75], [255, 225, 25], [0, 130, 200],
  [245, 130, 48], [145, 30, 180], [70, 240, 240], [240, 50, 230],
  [210, 245, 60], [250, 190, 212], [0, 128, 128], [220, 190, 255],
  [170, 110, 40], [255, 250, 200], [128, 0, 0], [170, 255, 195],
  [128, 128, 0], [255, 215, 180], [0, 0, 128], [128, 128, 128],
  [255, 255, 255], [163, 255, 15], [255, 80, 80], [80, 160, 255],
  [200, 120, 0], [90, 60, 150], [0, 200, 160], [255, 0, 120],
  [120, 220, 120], [150, 75, 0], [40, 90, 140],
];

export function paletteColor(cls: number): readonly [number, number, number] {
  if (cls <= 0) return PALETTE[0];
  return PALETTE[((cls - 1) % (PALETTE.length - 1)) + 1];
}

const lookup = new Map<number, number>();
for (let cls = 1; cls < PALETTE.length; cls++) {
  const [r, g, b] = PALETTE[cls];
  lookup.set((r << 16) | (g << 8) | b, cls);
}

/** Palette slot of an opaque mask pixel, or null for transparent/unknown. */
export function classOfPixel(r: number, g: number, b: number, a: number): number | null {
  if (a === 0) return 0;
  return lookup.get((r << 16) | (g << 8) | b) ?? null;
}
