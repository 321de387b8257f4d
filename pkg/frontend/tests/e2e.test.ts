/** End-to-end round trip against the real segmentation service.
 *
 * Spawns the Python backend, then drives the same modules the browser
 * runs: upload a phantom, check the slice against the reported meta,
 * launch a threshold segmentation, and verify the composited overlay's
 * mask pixels match the service's mask-slice PNG exactly.
 */

import { type ChildProcess, spawn } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { composite, grayToRgba, type RgbaImage } from "../src/compositor.js";
import { paletteColor } from "../src/palette.js";
import { decodePng } from "./png.js";

const PORT = 18437;
const BASE = `http://127.0.0.1:${PORT}`;

const SIZE = 24; // cubic phantom, [Z, Y, X]
const BOX = { z: [6, 18], y: [4, 16], x: [8, 20] } as const; // half-open bounds

function phantomMhaBytes(): Uint8Array {
  const header =
    "ObjectType = Image\n" +
    "NDims = 3\n" +
    `DimSize = ${SIZE} ${SIZE} ${SIZE}\n` +
    "ElementType = MET_SHORT\n" +
    "ElementSpacing = 1.0 1.0 1.0\n" +
    "Offset = 0.0 0.0 0.0\n" +
    "TransformMatrix = 1.0 0.0 0.0 0.0 1.0 0.0 0.0 0.0 1.0\n" +
    "CompressedData = False\n" +
    "ElementDataFile = LOCAL\n";
  const payload = new Uint8Array(SIZE * SIZE * SIZE * 2);
  const view = new DataView(payload.buffer);
  let offset = 0;
  for (let z = 0; z < SIZE; z++) {
    for (let y = 0; y < SIZE; y++) {
      for (let x = 0; x < SIZE; x++) {
        const inside =
          z >= BOX.z[0] && z < BOX.z[1] &&
          y >= BOX.y[0] && y < BOX.y[1] &&
          x >= BOX.x[0] && x < BOX.x[1];
        view.setInt16(offset, inside ? 50 : -1000, true);
        offset += 2;
      }
    }
  }
  const head = new TextEncoder().encode(header);
  const out = new Uint8Array(head.length + payload.length);
  out.set(head);
  out.set(payload, head.length);
  return out;
}

function toRgbaImage(buffer: ArrayBuffer): RgbaImage {
  const png = decodePng(buffer);
  if (png.channels === 1) {
    return grayToRgba(png.width, png.height, png.data);
  }
  return { width: png.width, height: png.height, data: new Uint8ClampedArray(png.data) };
}

let service: ChildProcess;
const client = new ApiClient(BASE);

beforeAll(async () => {
  service = spawn(
    "python3",
    [
      "-c",
      "import uvicorn; from voxkit.service import create_app; " +
        `uvicorn.run(create_app(), host='127.0.0.1', port=${PORT}, log_level='warning')`,
    ],
    { stdio: ["ignore", "inherit", "inherit"] },
  );
  const deadline = Date.now() + 30_000;
  for (;;) {
    try {
      const health = await client.health();
      if (health.status === "ok") break;
    } catch {
      /* not up yet */
    }
    if (Date.now() > deadline) throw new Error("segmentation service did not start");
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
}, 40_000);

afterAll(() => {
  service?.kill("SIGTERM");
});

describe("viewer round trip against a live service", () => {
  let volumeId: string;
  let maskId: string;
  const middle = Math.floor(SIZE / 2);

  it("connects and lists the threshold predictor", async () => {
    const health = await client.health();
    expect(health.status).toBe("ok");
    expect(health.predictors).toContain("threshold");
    expect(health.version).toMatch(/^\d+\.\d+\.\d+$/);
  });

  it("uploads the phantom and the slice dimensions match the meta", async () => {
    const upload = await client.uploadVolume(phantomMhaBytes());
    volumeId = upload.id;
    expect(upload.meta.size).toEqual([SIZE, SIZE, SIZE]);
    expect(upload.meta.orientation).toBe("SPL");

    const slice = decodePng(await client.fetchSlice(volumeId, "z", middle));
    expect(slice.width).toBe(upload.meta.size[2]); // X is the fast axis
    expect(slice.height).toBe(upload.meta.size[1]);
    expect(slice.channels).toBe(1);

    const ySlice = decodePng(await client.fetchSlice(volumeId, "y", 0));
    expect(ySlice.width).toBe(upload.meta.size[2]);
    expect(ySlice.height).toBe(upload.meta.size[0]);
  });

  it("launches a threshold segmentation and the job completes", async () => {
    const jobId = await client.segment(volumeId, {
      predictor: "threshold",
      patch_size: [16, 16, 16],
      stride: [8, 8, 8],
      lo: 0,
      hi: 100,
    });
    const phases: string[] = [];
    const final = await client.waitForJob(jobId, {
      intervalMs: 50,
      onTick: (job) => phases.push(job.state),
    });
    expect(final.state).toBe("done");
    expect(final.progress).toBe(1);
    expect(final.mask_id).toBeTruthy();
    maskId = final.mask_id as string;
    expect(phases[phases.length - 1]).toBe("done");
  });

  it("mask slice matches the phantom box and uses the class-1 palette color", async () => {
    const mask = toRgbaImage(await client.fetchMaskSlice(maskId, "z", middle));
    expect(mask.width).toBe(SIZE);
    expect(mask.height).toBe(SIZE);
    const [r, g, b] = paletteColor(1);
    for (let y = 0; y < SIZE; y++) {
      for (let x = 0; x < SIZE; x++) {
        const i = (y * SIZE + x) * 4;
        const inside =
          y >= BOX.y[0] && y < BOX.y[1] && x >= BOX.x[0] && x < BOX.x[1];
        if (inside) {
          expect([mask.data[i], mask.data[i + 1], mask.data[i + 2], mask.data[i + 3]])
            .toEqual([r, g, b, 255]);
        } else {
          expect(mask.data[i + 3]).toBe(0);
        }
      }
    }
  });

  it("composited overlay pixels equal the mask slice wherever it is opaque", async () => {
    const base = toRgbaImage(await client.fetchSlice(volumeId, "z", middle));
    const mask = toRgbaImage(await client.fetchMaskSlice(maskId, "z", middle));
    const overlaid = composite(base, mask, 1.0);
    expect(overlaid.width).toBe(base.width);
    for (let i = 0; i < mask.data.length; i += 4) {
      if (mask.data[i + 3] === 255) {
        expect(overlaid.data[i]).toBe(mask.data[i]);
        expect(overlaid.data[i + 1]).toBe(mask.data[i + 1]);
        expect(overlaid.data[i + 2]).toBe(mask.data[i + 2]);
      } else {
        expect(overlaid.data[i]).toBe(base.data[i]);
        expect(overlaid.data[i + 1]).toBe(base.data[i + 1]);
        expect(overlaid.data[i + 2]).toBe(base.data[i + 2]);
      }
    }
  });

  it("opacity 0 yields image-only pixels", async () => {
    const base = toRgbaImage(await client.fetchSlice(volumeId, "z", middle));
    const mask = toRgbaImage(await client.fetchMaskSlice(maskId, "z", middle));
    const overlaid = composite(base, mask, 0);
    expect([...overlaid.data]).toEqual([...base.data]);
  });

  it("surfaces failed jobs with the backend error message", async () => {
    const jobId = await client.segment(volumeId, {
      predictor: "onnx",
      patch_size: [16, 16, 16],
      stride: [8, 8, 8],
      model_path: "/nonexistent.onnx",
      io_spec: { input_name: "input", output_name: "probs", class_count: 2 },
    });
    const final = await client.waitForJob(jobId, { intervalMs: 50 });
    expect(final.state).toBe("failed");
    expect(final.error).toContain("not found");
  });

  it("downloadable mask is a MetaImage file", async () => {
    const response = await fetch(client.maskUrl(maskId));
    expect(response.ok).toBe(true);
    const head = new TextDecoder().decode((await response.arrayBuffer()).slice(0, 18));
    expect(head).toBe("ObjectType = Image");
  });

  it("bad uploads surface the parser error name", async () => {
    const failure = await client.uploadVolume(new Uint8Array([1, 2, 3])).catch((e) => e);
    expect(failure.status).toBe(400);
    expect(failure.errorName).toBe("UnsupportedFormatError");
  });
});
