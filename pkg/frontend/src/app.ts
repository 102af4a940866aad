// DOM wiring. All session logic lives in SessionController; this file only
// translates events and draws pixels.

import { DEFAULT_BASE, SessionApi } from "./api.js";
import { SessionController } from "./controller.js";
import { toImageBytes } from "./overlay.js";
import { clientToImage, imageToClient, OVERLAYS, type Overlay } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const params = new URLSearchParams(window.location.search);
const api = new SessionApi(params.get("api") ?? DEFAULT_BASE);

const canvas = el<HTMLCanvasElement>("view");
const ctx = canvas.getContext("2d")!;
const statusLine = el<HTMLSpanElement>("status");
const statsLine = el<HTMLSpanElement>("stats");
const modeSelect = el<HTMLSelectElement>("mode");
const overlaySelect = el<HTMLSelectElement>("overlay");
const tagInput = el<HTMLInputElement>("tag");
const buttons = {
  commit: el<HTMLButtonElement>("commit"),
  undo: el<HTMLButtonElement>("undo"),
  project: el<HTMLButtonElement>("project"),
  partition: el<HTMLButtonElement>("partition"),
  paint: el<HTMLButtonElement>("paint"),
};

const ctrl = new SessionController(api, {
  onStatus: (text) => {
    statusLine.textContent = text;
  },
  onBusy: () => updateControls(),
});

let imageW = 64;
let imageH = 64;

function updateControls(): void {
  buttons.commit.disabled = !ctrl.canCommit;
  buttons.undo.disabled = ctrl.buffer.points.length === 0 || ctrl.busy;
  for (const name of ["project", "partition", "paint"] as const) {
    buttons[name].disabled = ctrl.busy;
  }
}

function drawMarkers(): void {
  const rect = { left: 0, top: 0, width: canvas.width, height: canvas.height };
  ctrl.buffer.points.forEach((pt, i) => {
    const [cx, cy] = imageToClient(rect, imageW, imageH, pt[0], pt[1]);
    ctx.strokeStyle = ctrl.buffer.labels[i] === 1 ? "#2f2" : "#f33";
    ctx.lineWidth = 1;
    ctx.beginPath();
    ctx.arc(cx, cy, 2.5, 0, 2 * Math.PI);
    ctx.stroke();
  });
}

async function redraw(): Promise<void> {
  try {
    const img = await ctrl.refresh();
    imageH = img.length;
    imageW = img[0]?.length ?? imageW;
    canvas.width = imageW;
    canvas.height = imageH;
    ctx.putImageData(new ImageData(toImageBytes(img), imageW, imageH), 0, 0);
    drawMarkers();
    statusLine.textContent = `yaw ${ctrl.view.yaw.toFixed(0)} pitch ${ctrl.view.pitch.toFixed(0)} (${ctrl.view.mode})`;
  } catch (err) {
    statusLine.textContent = "service unreachable";
  }
}

function showStats(text: string): void {
  statsLine.textContent = text;
}

canvas.addEventListener("contextmenu", (e) => e.preventDefault());

canvas.addEventListener("pointerdown", (e) => {
  e.preventDefault();
  const r = canvas.getBoundingClientRect();
  const pt = clientToImage(
    { left: r.left, top: r.top, width: r.width, height: r.height },
    imageW,
    imageH,
    e.clientX,
    e.clientY,
  );
  if (!pt) return;
  ctrl.clickAt(pt[0], pt[1], e.button);
  drawMarkers();
  updateControls();
});

buttons.undo.addEventListener("click", () => {
  ctrl.undo();
  void redraw();
  updateControls();
});

buttons.commit.addEventListener("click", async () => {
  const out = await ctrl.commit();
  if (out) showStats(`mask ${out.mask_pixels} px, negative ${out.negmask_pixels} px`);
  await redraw();
  updateControls();
});

buttons.project.addEventListener("click", async () => {
  const out = await ctrl.project();
  if (out) showStats(`projected: coverage ${out.coverage} texels, IoU ${out.iou_vs_preview.toFixed(3)}`);
  await redraw();
});

buttons.partition.addEventListener("click", async () => {
  const out = await ctrl.partition();
  if (out) {
    overlaySelect.value = "partition";
    showStats(`partition: new ${out.new_pixels}, keep ${out.keep_pixels}, refine ${out.refine_pixels}`);
  }
  await redraw();
});

buttons.paint.addEventListener("click", async () => {
  const out = await ctrl.paint(tagInput.value || "red");
  if (out) showStats(`painted ${out.painted_pixels} px`);
  await redraw();
});

for (const [id, dyaw, dpitch] of [
  ["yaw-left", -15, 0],
  ["yaw-right", 15, 0],
  ["pitch-up", 0, 10],
  ["pitch-down", 0, -10],
] as const) {
  el<HTMLButtonElement>(id).addEventListener("click", () => {
    ctrl.orbitBy(dyaw, dpitch);
    void redraw();
  });
}

modeSelect.addEventListener("change", () => {
  ctrl.setMode(modeSelect.value);
  void redraw();
});

overlaySelect.addEventListener("change", () => {
  ctrl.setOverlay(overlaySelect.value as Overlay);
  void redraw();
});

async function boot(): Promise<void> {
  try {
    const scene = await ctrl.init();
    modeSelect.replaceChildren(
      ...scene.modes.map((m) => new Option(m, m, m === ctrl.view.mode, m === ctrl.view.mode)),
    );
    overlaySelect.replaceChildren(...OVERLAYS.map((o) => new Option(o, o, o === "none", o === "none")));
    showStats(`${scene.faces} faces, ${scene.labels} labels`);
    await redraw();
    updateControls();
  } catch {
    statusLine.textContent = "service unreachable";
  }
}

void boot();
