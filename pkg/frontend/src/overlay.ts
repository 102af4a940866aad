// Client-side overlay compositing over raw render pixels. The server renders;
// the client only alpha-blends masks on top, so "overlay none" is exactly the
// fetched image.

import type { GrayPixels, ImagePayload, RgbPixels } from "./api.js";
import type { Overlay } from "./state.js";

export const OVERLAY_ALPHA = 0.45;
export const MASK_COLOR: [number, number, number] = [0.1, 0.9, 0.2];
export const NEGMASK_COLOR: [number, number, number] = [0.9, 0.15, 0.1];

// partition previews encode new=1, refine=0.5, keep=0.25 on a zero background
export const PARTITION_COLORS: Record<PartitionClass, [number, number, number]> = {
  new: [0.1, 0.9, 0.2],
  refine: [0.95, 0.6, 0.1],
  keep: [0.2, 0.4, 0.95],
};

export type PartitionClass = "new" | "refine" | "keep";

export function classifyPreview(value: number): PartitionClass | null {
  if (value > 0.75) return "new";
  if (value > 0.375) return "refine";
  if (value > 0.12) return "keep";
  return null;
}

export function isGray(pixels: GrayPixels | RgbPixels): pixels is GrayPixels {
  return typeof pixels[0]?.[0] === "number";
}

export function grayOf(payload: ImagePayload): GrayPixels {
  const px = payload.pixels;
  if (!px) throw new Error("payload has no raw pixels");
  if (isGray(px)) return px;
  return px.map((row) => row.map((p) => p[0]));
}

export function toRgb(payload: ImagePayload): RgbPixels {
  const px = payload.pixels;
  if (!px) throw new Error("payload has no raw pixels");
  if (!isGray(px)) return px;
  return px.map((row) => row.map((v) => [v, v, v]));
}

function blend(base: number[], color: [number, number, number], alpha: number): number[] {
  return [0, 1, 2].map((c) => (1 - alpha) * base[c] + alpha * color[c]);
}

export function compositeMask(
  base: RgbPixels,
  mask: GrayPixels,
  color: [number, number, number],
  alpha = OVERLAY_ALPHA,
): RgbPixels {
  return base.map((row, y) =>
    row.map((px, x) => (mask[y][x] > 0.5 ? blend(px, color, alpha) : [...px])),
  );
}

export function compositePartition(base: RgbPixels, preview: GrayPixels, alpha = OVERLAY_ALPHA): RgbPixels {
  return base.map((row, y) =>
    row.map((px, x) => {
      const cls = classifyPreview(preview[y][x]);
      return cls === null ? [...px] : blend(px, PARTITION_COLORS[cls], alpha);
    }),
  );
}

export function partitionCounts(preview: GrayPixels): {
  newPixels: number;
  refinePixels: number;
  keepPixels: number;
} {
  const counts = { newPixels: 0, refinePixels: 0, keepPixels: 0 };
  for (const row of preview) {
    for (const v of row) {
      const cls = classifyPreview(v);
      if (cls === "new") counts.newPixels += 1;
      else if (cls === "refine") counts.refinePixels += 1;
      else if (cls === "keep") counts.keepPixels += 1;
    }
  }
  return counts;
}

export interface OverlaySources {
  mask?: GrayPixels;
  negmask?: GrayPixels;
  partition?: GrayPixels;
}

export function compositeOverlay(overlay: Overlay, base: RgbPixels, sources: OverlaySources): RgbPixels {
  if (overlay === "mask" && sources.mask) return compositeMask(base, sources.mask, MASK_COLOR);
  if (overlay === "negmask" && sources.negmask) return compositeMask(base, sources.negmask, NEGMASK_COLOR);
  if (overlay === "partition" && sources.partition) return compositePartition(base, sources.partition);
  return base;
}

// RGBA bytes for putImageData
export function toImageBytes(img: RgbPixels): Uint8ClampedArray<ArrayBuffer> {
  const h = img.length;
  const w = img[0]?.length ?? 0;
  const out = new Uint8ClampedArray(new ArrayBuffer(4 * w * h));
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      const o = 4 * (y * w + x);
      for (let c = 0; c < 3; c++) out[o + c] = Math.round(255 * Math.min(1, Math.max(0, img[y][x][c])));
      out[o + 3] = 255;
    }
  }
  return out;
}
