/** Minimal PNG reader for tests (Node-only; uses node:zlib).
 *
 * Supports what the service emits: 8-bit depth, grayscale (color type 0)
 * or RGBA (color type 6), non-interlaced, all five scanline filters.
 */

import { inflateSync } from "node:zlib";

export interface DecodedPng {
  width: number;
  height: number;
  channels: number; // 1 (gray) or 4 (RGBA)
  data: Uint8Array; // row-major, channels interleaved
}

const SIGNATURE = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

export function decodePng(buffer: ArrayBuffer | Uint8Array): DecodedPng {
  const bytes = buffer instanceof Uint8Array ? buffer : new Uint8Array(buffer);
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  for (let i = 0; i < SIGNATURE.length; i++) {
    if (bytes[i] !== SIGNATURE[i]) throw new Error("not a PNG file");
  }

  let pos = 8;
  let width = 0;
  let height = 0;
  let channels = 0;
  const idat: Uint8Array[] = [];
  while (pos < bytes.length) {
    const length = view.getUint32(pos);
    const type = String.fromCharCode(...bytes.subarray(pos + 4, pos + 8));
    const data = bytes.subarray(pos + 8, pos + 8 + length);
    pos += 12 + length;
    if (type === "IHDR") {
      const hdr = new DataView(data.buffer, data.byteOffset, data.byteLength);
      width = hdr.getUint32(0);
      height = hdr.getUint32(4);
      const bitDepth = data[8];
      const colorType = data[9];
      const interlace = data[12];
      if (bitDepth !== 8) throw new Error(`unsupported bit depth ${bitDepth}`);
      if (colorType === 0) channels = 1;
      else if (colorType === 6) channels = 4;
      else throw new Error(`unsupported color type ${colorType}`);
      if (interlace !== 0) throw new Error("interlaced PNG not supported");
    } else if (type === "IDAT") {
      idat.push(data);
    } else if (type === "IEND") {
      break;
    }
  }
  if (!width || !height || !channels) throw new Error("PNG missing IHDR");

  const raw = inflateSync(Buffer.concat(idat.map((d) => Buffer.from(d))));
  const stride = width * channels;
  const out = new Uint8Array(width * height * channels);
  for (let row = 0; row < height; row++) {
    const filter = raw[row * (stride + 1)];
    const line = raw.subarray(row * (stride + 1) + 1, (row + 1) * (stride + 1));
    const prev = out.subarray((row - 1) * stride, row * stride);
    const curr = out.subarray(row * stride, (row + 1) * stride);
    for (let i = 0; i < stride; i++) {
      const left = i >= channels ? curr[i - channels] : 0;
      const above = row > 0 ? prev[i] : 0;
      const upleft = row > 0 && i >= channels ? prev[i - channels] : 0;
      let value = line[i];
      switch (filter) {
        case 0: break;
        case 1: value += left; break;
        case 2: value += above; break;
        case 3: value += (left + above) >> 1; break;
        case 4: value += paeth(left, above, upleft); break;
        default: throw new Error(`unknown scanline filter ${filter}`);
      }
      curr[i] = value & 0xff;
    }
  }
  return { width, height, channels, data: out };
}
