"""JSON-over-HTTP session service under /v1/, driving one EditSession.

All mutating /session/* endpoints serialize through a non-blocking lock;
a request that arrives while a transaction runs gets 409.
"""

from __future__ import annotations

import base64
import io
import threading

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image

from .editing import (
    EditSession,
    PointPromptSet,
    apply_local_edit,
    new_session,
    paint_view,
    partition_view,
    project_segmentation,
    render_prompt_cache,
    segment,
)
from .errors import ContractViolation, SgtexError
from .fixtures import orbit_camera
from .mesh import Scene
from .render import RENDER_MODES, render

DEFAULT_RESOLUTION = (64, 64)


def _png_b64(image: np.ndarray) -> str:
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if arr.ndim == 2:
        arr = np.repeat(arr[..., None], 3, axis=2)
    buf = io.BytesIO()
    Image.fromarray((arr * 255.0).round().astype(np.uint8)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _image_payload(image: np.ndarray, raw: bool) -> dict:
    image = np.asarray(image, dtype=np.float64)
    payload = {"width": image.shape[1], "height": image.shape[0]}
    if raw:
        payload["pixels"] = image.tolist()
    else:
        payload["image_b64"] = _png_b64(image)
    return payload


def create_app(scene: Scene, resolution=DEFAULT_RESOLUTION) -> FastAPI:
    app = FastAPI(title="sgtex session service")
    # note: the edit UI is served from its own origin; this is a local tool
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["GET", "POST"], allow_headers=["*"]
    )
    session = new_session(scene)
    lock = threading.Lock()
    state = {"pending": None, "last_partition": None, "busy": False}

    def camera(yaw: float, pitch: float):
        return orbit_camera(yaw, pitch, resolution=resolution)

    def displayable(mode: str, pixels: np.ndarray) -> np.ndarray:
        if pixels.dtype == bool:
            return pixels.astype(np.float64)
        if np.issubdtype(pixels.dtype, np.integer):
            return pixels.astype(np.float64) / max(1, int(pixels.max()))
        if mode == "depth":
            top = pixels.max()
            return pixels / top if top > 0 else pixels
        if mode == "normal":
            return 0.5 * (pixels + 1.0)
        return pixels

    @app.exception_handler(SgtexError)
    async def _domain_error(_req: Request, exc: SgtexError):
        code = 400 if isinstance(exc, ContractViolation) else 422
        return JSONResponse(status_code=code, content={"error": str(exc)})

    @app.get("/v1/scene")
    def scene_summary():
        mat = scene.material
        return {
            "vertices": int(scene.vertices.shape[0]),
            "faces": int(scene.num_faces),
            "labels": int(mat.table.label_count) if mat is not None else 0,
            "resolution": list(resolution),
            "modes": list(RENDER_MODES),
            "camera_presets": [{"yaw": float(y), "pitch": 15.0} for y in range(0, 360, 45)],
        }

    @app.get("/v1/render")
    def render_view(
        yaw: float = Query(0.0),
        pitch: float = Query(15.0),
        mode: str = Query("shaded"),
        raw: int = Query(0),
    ):
        if mode not in RENDER_MODES:
            return JSONResponse(status_code=400, content={"error": f"unknown mode {mode!r}"})
        cam = camera(yaw, pitch)
        out = render(scene, cam, mode, mask_pair=session.masks)
        payload = _image_payload(displayable(mode, out.pixels), bool(raw))
        payload["mode"] = mode
        payload["coverage"] = int(out.coverage.sum())
        return payload

    def _mutation(fn):
        if not lock.acquire(blocking=False):
            return JSONResponse(status_code=409, content={"error": "session transaction in flight"})
        try:
            return fn()
        finally:
            lock.release()

    @app.post("/v1/session/prompts")
    async def post_prompts(request: Request, yaw: float = Query(0.0), pitch: float = Query(15.0)):
        body = await request.json()

        def run():
            points = body.get("points") or []
            labels = body.get("labels") or []
            if not points or len(points) != len(labels):
                return JSONResponse(
                    status_code=400, content={"error": "need matching non-empty points and labels"}
                )
            try:
                prompts = PointPromptSet.from_lists(points, labels)
                cam = camera(yaw, pitch)
                view = render(scene, cam, "albedo").pixels
                i_sam, i_negsam = segment(session.segmenter_id, view, prompts)
            except ContractViolation as e:
                return JSONResponse(status_code=400, content={"error": str(e)})
            state["pending"] = {"yaw": yaw, "pitch": pitch, "i_sam": i_sam, "i_negsam": i_negsam}
            raw = bool(body.get("raw", 0))
            return {
                "mask": _image_payload(i_sam.astype(np.float64), raw),
                "negmask": _image_payload(i_negsam.astype(np.float64), raw),
                "mask_pixels": int(i_sam.sum()),
                "negmask_pixels": int(i_negsam.sum()),
            }

        return _mutation(run)

    @app.post("/v1/session/project")
    def post_project():
        def run():
            pending = state["pending"]
            if pending is None:
                return JSONResponse(status_code=400, content={"error": "no pending segmentation"})
            cam = camera(pending["yaw"], pending["pitch"])
            l_mask, l_neg = project_segmentation(session, cam, pending["i_sam"], pending["i_negsam"])
            q_mask, _, m_t = render_prompt_cache(session, cam)
            inter = int((q_mask & pending["i_sam"]).sum())
            union = int((q_mask | pending["i_sam"]).sum())
            state["pending"] = None
            return {
                "l_mask": l_mask,
                "l_negmask": l_neg,
                "iou_vs_preview": (inter / union) if union else 1.0,
                "coverage": int(m_t.sum()),
            }

        return _mutation(run)

    @app.post("/v1/session/partition")
    def post_partition(yaw: float = Query(0.0), pitch: float = Query(15.0), raw: int = Query(0)):
        def run():
            cam = camera(yaw, pitch)
            q_mask, _, m_t = render_prompt_cache(session, cam)
            part = partition_view(session, cam, q_mask & m_t)
            state["last_partition"] = {"yaw": yaw, "pitch": pitch, "partition": part}
            preview = (
                part.m_new.astype(np.float64)
                + 0.5 * part.m_refine.astype(np.float64)
                + 0.25 * part.m_keep.astype(np.float64)
            )
            return {
                "new_pixels": int(part.m_new.sum()),
                "keep_pixels": int(part.m_keep.sum()),
                "refine_pixels": int(part.m_refine.sum()),
                "preview": _image_payload(preview, bool(raw)),
            }

        return _mutation(run)

    @app.post("/v1/session/paint")
    async def post_paint(request: Request):
        body = await request.json()

        def run():
            last = state["last_partition"]
            if last is None:
                return JSONResponse(status_code=400, content={"error": "no partition yet"})
            tag = str(body.get("tag", "red"))
            cam = camera(last["yaw"], last["pitch"])
            painted = paint_view(session, cam, last["partition"], tag)
            apply_local_edit(session, painted, cam)
            refreshed = render(scene, cam, "shaded").pixels
            raw = bool(body.get("raw", 0))
            return {
                "painted_pixels": int(last["partition"].m_paint.sum()),
                "render": _image_payload(refreshed, raw),
                "edited": _image_payload(painted, raw),
            }

        return _mutation(run)

    @app.get("/v1/session/state")
    def session_state():
        return {
            "mask_texels": int((session.masks.t_mask > 0.5).sum()),
            "negmask_texels": int((session.masks.t_negmask > 0.5).sum()),
            "painted_texels": int((session.painted > 0.5).sum()),
            "history": len(session.view_history),
            "pending_prompts": state["pending"] is not None,
        }

    app.state.session = session
    app.state.txn_lock = lock
    return app
