/** Typed client for the voxkit segmentation service. */

export type Axis = "z" | "y" | "x";

export interface VolumeMeta {
  size: [number, number, number]; // [Z, Y, X]
  spacing: [number, number, number];
  origin: [number, number, number];
  orientation: string | null;
  element_type: string;
}

export interface HealthInfo {
  status: string;
  version: string;
  predictors: string[];
}

export interface UploadResult {
  id: string;
  meta: VolumeMeta;
}

export type JobPhase = "queued" | "running" | "done" | "failed";

export interface JobState {
  id: string;
  volume_id: string;
  state: JobPhase;
  progress: number;
  mask_id: string | null;
  error: string | null;
}

export interface SegmentParams {
  predictor: string;
  patch_size: [number, number, number];
  stride: [number, number, number];
  lo?: number;
  hi?: number;
  model_path?: string;
  io_spec?: Record<string, unknown>;
  wl?: number;
  ww?: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly errorName: string,
    detail: string,
  ) {
    super(`${errorName}: ${detail}`);
  }
}

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) return;
  let name = `HTTP${response.status}`;
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (body && typeof body === "object") {
      name = (body as Record<string, string>).error ?? name;
      detail = (body as Record<string, string>).detail ?? detail;
    }
  } catch {
    /* non-JSON error body; keep the status text */
  }
  throw new ApiError(response.status, name, detail);
}

export class ApiClient {
  readonly baseUrl: string;

  constructor(serverUrl: string) {
    this.baseUrl = serverUrl.replace(/\/+$/, "");
  }

  private url(path: string): string {
    return this.baseUrl + path;
  }

  async health(): Promise<HealthInfo> {
    const response = await fetch(this.url("/health"));
    await raiseForStatus(response);
    return (await response.json()) as HealthInfo;
  }

  async uploadVolume(bytes: ArrayBuffer | Uint8Array): Promise<UploadResult> {
    const body = bytes instanceof Uint8Array
      ? bytes.slice().buffer
      : bytes;
    const response = await fetch(this.url("/volumes"), {
      method: "POST",
      headers: { "Content-Type": "application/octet-stream" },
      body,
    });
    await raiseForStatus(response);
    return (await response.json()) as UploadResult;
  }

  sliceUrl(volumeId: string, axis: Axis, index: number, wl?: number, ww?: number): string {
    const params = new URLSearchParams({ axis, index: String(index) });
    if (wl !== undefined && ww !== undefined) {
      params.set("wl", String(wl));
      params.set("ww", String(ww));
    }
    return this.url(`/volumes/${volumeId}/slice?${params}`);
  }

  async fetchSlice(
    volumeId: string,
    axis: Axis,
    index: number,
    wl?: number,
    ww?: number,
  ): Promise<ArrayBuffer> {
    const response = await fetch(this.sliceUrl(volumeId, axis, index, wl, ww));
    await raiseForStatus(response);
    return response.arrayBuffer();
  }

  async segment(volumeId: string, params: SegmentParams): Promise<string> {
    const response = await fetch(this.url(`/volumes/${volumeId}/segment`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(params),
    });
    await raiseForStatus(response);
    const body = (await response.json()) as { job_id: string };
    return body.job_id;
  }

  async job(jobId: string): Promise<JobState> {
    const response = await fetch(this.url(`/jobs/${jobId}`));
    await raiseForStatus(response);
    return (await response.json()) as JobState;
  }

  /** Poll until the job settles; the viewer uses a 1 s interval. */
  async waitForJob(
    jobId: string,
    options: { intervalMs?: number; timeoutMs?: number; onTick?: (job: JobState) => void } = {},
  ): Promise<JobState> {
    const interval = options.intervalMs ?? 1000;
    const deadline = Date.now() + (options.timeoutMs ?? 10 * 60 * 1000);
    for (;;) {
      const state = await this.job(jobId);
      options.onTick?.(state);
      if (state.state === "done" || state.state === "failed") return state;
      if (Date.now() > deadline) throw new ApiError(408, "JobTimeout", `job ${jobId} still running`);
      await new Promise((resolve) => setTimeout(resolve, interval));
    }
  }

  maskUrl(maskId: string): string {
    return this.url(`/masks/${maskId}`);
  }

  maskSliceUrl(maskId: string, axis: Axis, index: number): string {
    const params = new URLSearchParams({ axis, index: String(index) });
    return this.url(`/masks/${maskId}/slice?${params}`);
  }

  async fetchMaskSlice(maskId: string, axis: Axis, index: number): Promise<ArrayBuffer> {
    const response = await fetch(this.maskSliceUrl(maskId, axis, index));
    await raiseForStatus(response);
    return response.arrayBuffer();
  }
}
