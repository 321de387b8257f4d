import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("ApiClient", () => {
  it("normalizes trailing slashes in the server url", async () => {
    const fetchMock = vi.fn(async () => jsonResponse({ status: "ok", version: "1", predictors: [] }));
    vi.stubGlobal("fetch", fetchMock);
    const client = new ApiClient("http://server:8000///");
    await client.health();
    expect(fetchMock).toHaveBeenCalledWith("http://server:8000/health");
  });

  it("uploads volumes as octet-stream", async () => {
    const fetchMock = vi.fn(async () =>
      jsonResponse({ id: "v1", meta: { size: [2, 2, 2] } }, 201),
    );
    vi.stubGlobal("fetch", fetchMock);
    const client = new ApiClient("http://s");
    const result = await client.uploadVolume(new Uint8Array([1, 2, 3]));
    expect(result.id).toBe("v1");
    const [url, init] = fetchMock.mock.calls[0] as [string, RequestInit];
    expect(url).toBe("http://s/volumes");
    expect(init.method).toBe("POST");
    expect((init.headers as Record<string, string>)["Content-Type"]).toBe(
      "application/octet-stream",
    );
  });

  it("builds slice urls with optional windowing", () => {
    const client = new ApiClient("http://s");
    expect(client.sliceUrl("v1", "z", 4)).toBe("http://s/volumes/v1/slice?axis=z&index=4");
    expect(client.sliceUrl("v1", "y", 2, 40, 400)).toBe(
      "http://s/volumes/v1/slice?axis=y&index=2&wl=40&ww=400",
    );
    expect(client.maskSliceUrl("m1", "x", 7)).toBe("http://s/masks/m1/slice?axis=x&index=7");
  });

  it("surfaces the service's error name and detail", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () => jsonResponse({ error: "PayloadSizeError", detail: "short" }, 400)),
    );
    const client = new ApiClient("http://s");
    const failure = await client.uploadVolume(new Uint8Array(1)).catch((e) => e);
    expect(failure).toBeInstanceOf(ApiError);
    expect(failure.status).toBe(400);
    expect(failure.errorName).toBe("PayloadSizeError");
    expect(String(failure)).toContain("short");
  });

  it("posts segmentation params and returns the job id", async () => {
    const fetchMock = vi.fn(async () => jsonResponse({ job_id: "j9" }, 202));
    vi.stubGlobal("fetch", fetchMock);
    const client = new ApiClient("http://s");
    const jobId = await client.segment("v1", {
      predictor: "threshold",
      patch_size: [8, 8, 8],
      stride: [4, 4, 4],
      lo: 0,
      hi: 100,
    });
    expect(jobId).toBe("j9");
    const [, init] = fetchMock.mock.calls[0] as [string, RequestInit];
    expect(JSON.parse(init.body as string).predictor).toBe("threshold");
  });

  it("polls jobs until they settle", async () => {
    const states = [
      { id: "j", state: "queued", progress: 0 },
      { id: "j", state: "running", progress: 0.5 },
      { id: "j", state: "done", progress: 1, mask_id: "m1" },
    ];
    let call = 0;
    vi.stubGlobal("fetch", vi.fn(async () => jsonResponse(states[Math.min(call++, 2)])));
    const client = new ApiClient("http://s");
    const ticks: string[] = [];
    const final = await client.waitForJob("j", {
      intervalMs: 1,
      onTick: (job) => ticks.push(job.state),
    });
    expect(final.state).toBe("done");
    expect(final.mask_id).toBe("m1");
    expect(ticks).toEqual(["queued", "running", "done"]);
  });

  it("defaults to one-second polling", async () => {
    vi.useFakeTimers();
    try {
      const states = [
        { id: "j", state: "running", progress: 0 },
        { id: "j", state: "done", progress: 1 },
      ];
      let call = 0;
      vi.stubGlobal("fetch", vi.fn(async () => jsonResponse(states[Math.min(call++, 1)])));
      const client = new ApiClient("http://s");
      const pending = client.waitForJob("j");
      await vi.advanceTimersByTimeAsync(999);
      expect(call).toBe(1);
      await vi.advanceTimersByTimeAsync(2);
      const final = await pending;
      expect(final.state).toBe("done");
    } finally {
      vi.useRealTimers();
    }
  });
});
