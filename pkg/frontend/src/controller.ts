// Session controller: owns the view state, the click buffer, and the
// one-in-flight-mutation rule. app.ts wires it to the DOM; the scripted
// integration flow drives it directly against a live service.

import type {
  GrayPixels,
  PaintResult,
  PartitionPreview,
  ProjectStats,
  PromptPreview,
  RenderPayload,
  RgbPixels,
  SceneSummary,
  SessionState,
} from "./api.js";
import { errorMessage } from "./api.js";
import {
  addClick,
  emptyBuffer,
  initialView,
  labelForButton,
  markCommitted,
  orbit,
  undoClick,
  type ClickBuffer,
  type Overlay,
  type ViewState,
} from "./state.js";
import { compositeOverlay, grayOf, toRgb, type OverlaySources } from "./overlay.js";

export interface ApiLike {
  scene(): Promise<SceneSummary>;
  render(yaw: number, pitch: number, mode: string, raw?: boolean): Promise<RenderPayload>;
  prompts(
    yaw: number,
    pitch: number,
    points: [number, number][],
    labels: number[],
    raw?: boolean,
  ): Promise<PromptPreview>;
  project(): Promise<ProjectStats>;
  partition(yaw: number, pitch: number, raw?: boolean): Promise<PartitionPreview>;
  paint(tag: string, raw?: boolean): Promise<PaintResult>;
  state(): Promise<SessionState>;
}

export interface ControllerEvents {
  onStatus?: (text: string) => void;
  onBusy?: (busy: boolean) => void;
}

interface ViewKeyed<T> {
  yaw: number;
  pitch: number;
  data: T;
}

export class SessionController {
  api: ApiLike;
  events: ControllerEvents;
  view: ViewState = initialView();
  buffer: ClickBuffer = emptyBuffer();
  busy = false;
  scene: SceneSummary | null = null;
  base: RgbPixels | null = null;
  lastError = "";

  // segmentation previews from the last commit, valid at their own view only
  private previewMask: ViewKeyed<GrayPixels> | null = null;
  private previewNegmask: ViewKeyed<GrayPixels> | null = null;
  private partitionPreview: ViewKeyed<GrayPixels> | null = null;
  // projected masks fetched as renders for the current view
  private maskRender: GrayPixels | null = null;
  private negmaskRender: GrayPixels | null = null;

  constructor(api: ApiLike, events: ControllerEvents = {}) {
    this.api = api;
    this.events = events;
  }

  async init(): Promise<SceneSummary> {
    this.scene = await this.api.scene();
    if (!this.scene.modes.includes(this.view.mode)) this.view.mode = this.scene.modes[0];
    return this.scene;
  }

  // --- view -----------------------------------------------------------

  orbitBy(dyaw: number, dpitch: number): void {
    this.view = orbit(this.view, dyaw, dpitch);
  }

  setMode(mode: string): void {
    this.view = { ...this.view, mode };
  }

  setOverlay(overlay: Overlay): void {
    this.view = { ...this.view, overlay };
  }

  async refresh(): Promise<RgbPixels> {
    const { yaw, pitch, mode, overlay } = this.view;
    const r = await this.api.render(yaw, pitch, mode, true);
    this.base = toRgb(r);
    this.maskRender = null;
    this.negmaskRender = null;
    if (overlay === "mask" && !this.viewKeyedValid(this.previewMask)) {
      this.maskRender = grayOf(await this.api.render(yaw, pitch, "mask", true));
    }
    if (overlay === "negmask" && !this.viewKeyedValid(this.previewNegmask)) {
      this.negmaskRender = grayOf(await this.api.render(yaw, pitch, "negmask", true));
    }
    return this.composited();
  }

  private viewKeyedValid<T>(keyed: ViewKeyed<T> | null): keyed is ViewKeyed<T> {
    return keyed !== null && keyed.yaw === this.view.yaw && keyed.pitch === this.view.pitch;
  }

  overlaySources(): OverlaySources {
    const sources: OverlaySources = {};
    if (this.viewKeyedValid(this.previewMask)) sources.mask = this.previewMask.data;
    else if (this.maskRender) sources.mask = this.maskRender;
    if (this.viewKeyedValid(this.previewNegmask)) sources.negmask = this.previewNegmask.data;
    else if (this.negmaskRender) sources.negmask = this.negmaskRender;
    if (this.viewKeyedValid(this.partitionPreview)) sources.partition = this.partitionPreview.data;
    return sources;
  }

  composited(): RgbPixels {
    if (!this.base) throw new Error("no render fetched yet");
    return compositeOverlay(this.view.overlay, this.base, this.overlaySources());
  }

  // --- clicks -----------------------------------------------------------

  clickAt(x: number, y: number, button: number): void {
    this.buffer = addClick(this.buffer, x, y, labelForButton(button));
  }

  undo(): void {
    this.buffer = undoClick(this.buffer);
  }

  get canCommit(): boolean {
    return this.buffer.points.length > 0 && !this.busy;
  }

  // --- mutations --------------------------------------------------------
  // single in-flight mutation: a second request is rejected locally with the
  // same message the server's 409 maps to

  private async mutate<T>(fn: () => Promise<T>): Promise<T | null> {
    if (this.busy) {
      this.lastError = "session busy";
      this.events.onStatus?.(this.lastError);
      return null;
    }
    this.busy = true;
    this.events.onBusy?.(true);
    try {
      const out = await fn();
      this.lastError = "";
      return out;
    } catch (err) {
      this.lastError = errorMessage(err);
      this.events.onStatus?.(this.lastError);
      return null;
    } finally {
      this.busy = false;
      this.events.onBusy?.(false);
    }
  }

  async commit(): Promise<PromptPreview | null> {
    if (this.buffer.points.length === 0) return null;
    const { points, labels } = this.buffer;
    const { yaw, pitch } = this.view;
    const out = await this.mutate(() => this.api.prompts(yaw, pitch, points, labels, true));
    if (out) {
      this.buffer = markCommitted(this.buffer);
      this.previewMask = { yaw, pitch, data: grayOf(out.mask) };
      this.previewNegmask = { yaw, pitch, data: grayOf(out.negmask) };
      if (this.view.overlay === "none") this.setOverlay("mask");
    }
    return out;
  }

  async project(): Promise<ProjectStats | null> {
    const out = await this.mutate(() => this.api.project());
    if (out) {
      // projected masks supersede the segmentation previews
      this.previewMask = null;
      this.previewNegmask = null;
    }
    return out;
  }

  async partition(): Promise<PartitionPreview | null> {
    const { yaw, pitch } = this.view;
    const out = await this.mutate(() => this.api.partition(yaw, pitch, true));
    if (out) {
      this.partitionPreview = { yaw, pitch, data: grayOf(out.preview) };
      this.setOverlay("partition");
    }
    return out;
  }

  async paint(tag: string): Promise<PaintResult | null> {
    const out = await this.mutate(() => this.api.paint(tag, true));
    if (out) this.base = toRgb(out.render);
    return out;
  }
}
