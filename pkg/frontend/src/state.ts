// View and click-buffer state. Pure functions only, so the invariants
// (yaw wrap, pitch clamp, buffer lifecycle, pixel round trip) are testable
// without a DOM.

export const OVERLAYS = ["none", "mask", "negmask", "partition"] as const;
export type Overlay = (typeof OVERLAYS)[number];

export interface ViewState {
  yaw: number; // degrees, [0, 360)
  pitch: number; // degrees, [-89, 89]
  mode: string;
  overlay: Overlay;
}

export function wrapYaw(yaw: number): number {
  const w = yaw % 360;
  return w < 0 ? w + 360 : w;
}

export function clampPitch(pitch: number): number {
  return Math.min(89, Math.max(-89, pitch));
}

export function initialView(mode = "shaded"): ViewState {
  return { yaw: 0, pitch: 15, mode, overlay: "none" };
}

export function orbit(view: ViewState, dyaw: number, dpitch: number): ViewState {
  return { ...view, yaw: wrapYaw(view.yaw + dyaw), pitch: clampPitch(view.pitch + dpitch) };
}

// 1 = positive (left button), 0 = negative (right button)
export type PromptLabel = 0 | 1;

export function labelForButton(button: number): PromptLabel {
  return button === 2 ? 0 : 1;
}

export interface ClickBuffer {
  points: [number, number][];
  labels: PromptLabel[];
  committed: boolean;
}

export function emptyBuffer(): ClickBuffer {
  return { points: [], labels: [], committed: false };
}

export function addClick(buf: ClickBuffer, x: number, y: number, label: PromptLabel): ClickBuffer {
  return { points: [...buf.points, [x, y]], labels: [...buf.labels, label], committed: false };
}

export function undoClick(buf: ClickBuffer): ClickBuffer {
  if (buf.points.length === 0) return buf;
  return { ...buf, points: buf.points.slice(0, -1), labels: buf.labels.slice(0, -1) };
}

// the buffer empties only after a successful /session/prompts round trip
export function markCommitted(_buf: ClickBuffer): ClickBuffer {
  return { points: [], labels: [], committed: true };
}

// --- click coordinate mapping -------------------------------------------
// The canvas is CSS-scaled; prompts must be sent in render-image pixel
// space. A marker drawn at a pixel center maps back to the same pixel.

export interface CanvasRect {
  left: number;
  top: number;
  width: number;
  height: number;
}

export function clientToImage(
  rect: CanvasRect,
  imageW: number,
  imageH: number,
  clientX: number,
  clientY: number,
): [number, number] | null {
  const x = Math.floor(((clientX - rect.left) / rect.width) * imageW);
  const y = Math.floor(((clientY - rect.top) / rect.height) * imageH);
  if (x < 0 || y < 0 || x >= imageW || y >= imageH) return null;
  return [x, y];
}

export function imageToClient(
  rect: CanvasRect,
  imageW: number,
  imageH: number,
  x: number,
  y: number,
): [number, number] {
  return [
    rect.left + ((x + 0.5) / imageW) * rect.width,
    rect.top + ((y + 0.5) / imageH) * rect.height,
  ];
}
