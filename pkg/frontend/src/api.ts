// Typed fetch client for the sgtex session service (/v1/ JSON API).
// The UI never talks to the session through anything but these endpoints.

export interface CameraPreset {
  yaw: number;
  pitch: number;
}

export interface SceneSummary {
  vertices: number;
  faces: number;
  labels: number;
  resolution: number[];
  modes: string[];
  camera_presets: CameraPreset[];
}

// grayscale images come back as rows of floats, color images as rows of [r,g,b]
export type GrayPixels = number[][];
export type RgbPixels = number[][][];

export interface ImagePayload {
  width: number;
  height: number;
  image_b64?: string;
  pixels?: GrayPixels | RgbPixels;
}

export interface RenderPayload extends ImagePayload {
  mode: string;
  coverage: number;
}

export interface PromptPreview {
  mask: ImagePayload;
  negmask: ImagePayload;
  mask_pixels: number;
  negmask_pixels: number;
}

export interface ProjectStats {
  l_mask: number;
  l_negmask: number;
  iou_vs_preview: number;
  coverage: number;
}

export interface PartitionPreview {
  new_pixels: number;
  keep_pixels: number;
  refine_pixels: number;
  preview: ImagePayload;
}

export interface PaintResult {
  painted_pixels: number;
  render: ImagePayload;
  edited: ImagePayload;
}

export interface SessionState {
  mask_texels: number;
  negmask_texels: number;
  painted_texels: number;
  history: number;
  pending_prompts: boolean;
}

export class ApiError extends Error {
  status: number;

  constructor(status: number, message: string) {
    super(message);
    this.name = "ApiError";
    this.status = status;
  }
}

// user-facing message for a failed request: 409 is the single-writer lock,
// 400 carries the server's validation text, anything non-HTTP is the network
export function errorMessage(err: unknown): string {
  if (err instanceof ApiError) {
    if (err.status === 409) return "session busy";
    return err.message;
  }
  return "service unreachable";
}

async function parse<T>(res: Response): Promise<T> {
  let body: unknown = null;
  try {
    body = await res.json();
  } catch {
    // non-JSON body; fall through to the status check
  }
  if (!res.ok) {
    const msg =
      body && typeof body === "object" && "error" in body
        ? String((body as { error: unknown }).error)
        : `HTTP ${res.status}`;
    throw new ApiError(res.status, msg);
  }
  return body as T;
}

export const DEFAULT_BASE = "http://127.0.0.1:8008";

export class SessionApi {
  base: string;

  constructor(base: string = DEFAULT_BASE) {
    this.base = base.replace(/\/$/, "");
  }

  url(path: string, query?: Record<string, number | string>): string {
    const u = new URL(`${this.base}/v1${path}`);
    for (const [k, v] of Object.entries(query ?? {})) u.searchParams.set(k, String(v));
    return u.toString();
  }

  private async post<T>(path: string, query?: Record<string, number | string>, body?: unknown): Promise<T> {
    const init: RequestInit = { method: "POST" };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    return parse<T>(await fetch(this.url(path, query), init));
  }

  async scene(): Promise<SceneSummary> {
    return parse(await fetch(this.url("/scene")));
  }

  async render(yaw: number, pitch: number, mode: string, raw = true): Promise<RenderPayload> {
    return parse(await fetch(this.url("/render", { yaw, pitch, mode, raw: raw ? 1 : 0 })));
  }

  async prompts(
    yaw: number,
    pitch: number,
    points: [number, number][],
    labels: number[],
    raw = true,
  ): Promise<PromptPreview> {
    return this.post("/session/prompts", { yaw, pitch }, { points, labels, raw: raw ? 1 : 0 });
  }

  async project(): Promise<ProjectStats> {
    return this.post("/session/project");
  }

  async partition(yaw: number, pitch: number, raw = true): Promise<PartitionPreview> {
    return this.post("/session/partition", { yaw, pitch, raw: raw ? 1 : 0 });
  }

  async paint(tag: string, raw = true): Promise<PaintResult> {
    return this.post("/session/paint", undefined, { tag, raw: raw ? 1 : 0 });
  }

  async state(): Promise<SessionState> {
    return parse(await fetch(this.url("/session/state")));
  }
}
