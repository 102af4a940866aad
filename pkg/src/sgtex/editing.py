"""Interactive texture editing: UV mask state, prompt sampling, segmentation,
mask projection, view partitioning, and mask-blended painting.

All 2D point coordinates are (x, y) pixel positions, x along image columns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.ndimage as ndi

from .errors import (
    ContractViolation,
    ResolutionMismatchError,
    SegmenterUnavailableError,
    ZeroCoverageError,
)
from .mesh import Camera, Scene
from .render import raycast, render
from .texture import sample_uv, splat_uv

DEFAULT_R_OPEN = 2
DEFAULT_R_RING = 4
DEFAULT_THETA = 5
DEFAULT_GROW_TOL = 0.12


# ---------------------------------------------------------------------------
# domain types


@dataclass
class MaskTexturePair:
    """Positive and negative selection state in UV space, float [0, 1]."""

    t_mask: np.ndarray
    t_negmask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.t_mask, dtype=np.float64)
        n = np.asarray(self.t_negmask, dtype=np.float64)
        if m.shape != n.shape or m.ndim != 2:
            raise ContractViolation("mask textures must be 2d and share a resolution")
        for t in (m, n):
            if (t < 0).any() or (t > 1).any():
                raise ContractViolation("mask texture values must lie in [0, 1]")
        self.t_mask, self.t_negmask = m, n


@dataclass(frozen=True)
class PointPromptSet:
    """Click prompts: (x, y) pixel points with positive/negative labels."""

    points: np.ndarray
    labels: np.ndarray  # bool, True = positive

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)
        lab = np.asarray(self.labels, dtype=bool).reshape(-1)
        if pts.shape[0] != lab.shape[0]:
            raise ContractViolation("points and labels must pair up")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def from_lists(cls, points, labels) -> "PointPromptSet":
        """Accepts labels as 'positive'/'negative' strings or 1/0 ints."""
        conv = []
        for l in labels:
            if l in ("positive", 1, True):
                conv.append(True)
            elif l in ("negative", 0, False):
                conv.append(False)
            else:
                raise ContractViolation(f"unknown prompt label: {l!r}")
        return cls(np.asarray(points).reshape(-1, 2), np.asarray(conv, dtype=bool))


@dataclass(frozen=True)
class ViewPartition:
    """Disjoint view triple: fresh area, untouched area, seam band."""

    m_new: np.ndarray
    m_keep: np.ndarray
    m_refine: np.ndarray
    coverage: np.ndarray

    def __post_init__(self):
        masks = []
        for name in ("m_new", "m_keep", "m_refine", "coverage"):
            m = np.asarray(getattr(self, name), dtype=bool)
            masks.append(m)
            object.__setattr__(self, name, m)
        new, keep, refine, cov = masks
        if not (new.shape == keep.shape == refine.shape == cov.shape):
            raise ContractViolation("partition masks must share a resolution")
        if (new & keep).any() or (new & refine).any() or (keep & refine).any():
            raise ContractViolation("partition masks must be pairwise disjoint")
        if ((new | keep | refine) != cov).any():
            raise ContractViolation("partition must cover exactly the view coverage")

    @property
    def m_paint(self) -> np.ndarray:
        return self.m_new | self.m_refine


@dataclass
class EditSession:
    """Single-writer editing state over one scene."""

    scene: Scene
    masks: MaskTexturePair
    painted: np.ndarray                  # float UV texture, 1 = previously painted
    view_history: list = field(default_factory=list)
    segmenter_id: str = "region_grow"
    painter_id: str = "procedural"

    def __post_init__(self):
        self.painted = np.asarray(self.painted, dtype=np.float64)
        if self.painted.shape != self.masks.t_mask.shape:
            raise ContractViolation("painted-coverage texture must match the mask resolution")

    def record_view(self, camera: Camera, op: str) -> None:
        self.view_history.append(
            {
                "op": op,
                "position": np.asarray(camera.position, dtype=float).tolist(),
                "look_at": np.asarray(camera.look_at, dtype=float).tolist(),
                "up": np.asarray(camera.up, dtype=float).tolist(),
                "fov_deg": float(camera.fov_deg),
                "resolution": list(camera.resolution),
            }
        )


def new_session(scene: Scene, mask_resolution: int | None = None) -> EditSession:
    if mask_resolution is None:
        mat = scene.material
        mask_resolution = mat.albedo.shape[0] if mat is not None else 64
    shape = (mask_resolution, mask_resolution)
    return EditSession(
        scene,
        MaskTexturePair(np.zeros(shape), np.zeros(shape)),
        np.zeros(shape),
    )


def save_session(session: EditSession, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    np.save(d / "t_mask.npy", session.masks.t_mask)
    np.save(d / "t_negmask.npy", session.masks.t_negmask)
    np.save(d / "painted.npy", session.painted)
    (d / "session.json").write_text(
        json.dumps(
            {
                "view_history": session.view_history,
                "segmenter_id": session.segmenter_id,
                "painter_id": session.painter_id,
            },
            indent=2,
        )
    )


def load_session(directory, scene: Scene) -> EditSession:
    d = Path(directory)
    meta = json.loads((d / "session.json").read_text())
    s = EditSession(
        scene,
        MaskTexturePair(np.load(d / "t_mask.npy"), np.load(d / "t_negmask.npy")),
        np.load(d / "painted.npy"),
        view_history=list(meta["view_history"]),
        segmenter_id=meta["segmenter_id"],
        painter_id=meta["painter_id"],
    )
    return s


# ---------------------------------------------------------------------------
# prompt cache rendering and patch sampling


def render_prompt_cache(session: EditSession, v_t: Camera):
    """Render session masks into the view: (Q_mask, Q_negmask, m_t)."""
    q_mask = render(session.scene, v_t, "mask", mask_pair=session.masks)
    q_neg = render(session.scene, v_t, "negmask", mask_pair=session.masks)
    return q_mask.pixels, q_neg.pixels, q_mask.coverage


def _patch_slices(length: int, parts: int):
    bounds = np.linspace(0, length, parts + 1).round().astype(int)
    return [(bounds[k], bounds[k + 1]) for k in range(parts)]


def _sample_patch_points(mask: np.ndarray, grid, theta: int):
    """One point per sufficiently-active patch: the active pixel nearest the
    patch's active-pixel centroid (x, y)."""
    h, w = mask.shape
    out = []
    for r0, r1 in _patch_slices(h, grid[0]):
        for c0, c1 in _patch_slices(w, grid[1]):
            sub = mask[r0:r1, c0:c1]
            ys, xs = np.nonzero(sub)
            if ys.shape[0] < theta:
                continue
            cy, cx = ys.mean(), xs.mean()
            k = int(np.argmin((ys - cy) ** 2 + (xs - cx) ** 2))
            out.append((c0 + xs[k], r0 + ys[k]))
    return out


def patch_sample_prompts(
    q_mask: np.ndarray,
    q_negmask: np.ndarray,
    pos_grid=(25, 25),
    neg_grid=(5, 5),
    theta: int = DEFAULT_THETA,
) -> PointPromptSet:
    """Grid-patch point sampling over the cached mask renders."""
    if min(pos_grid) < 1 or min(neg_grid) < 1:
        raise ContractViolation("patch grids must be at least 1x1")
    if theta < 1:
        raise ContractViolation("theta must be >= 1")
    q_mask = np.asarray(q_mask, dtype=bool)
    q_negmask = np.asarray(q_negmask, dtype=bool)
    pos = _sample_patch_points(q_mask, pos_grid, theta)
    neg = _sample_patch_points(q_negmask, neg_grid, theta)
    pts = np.asarray(pos + neg, dtype=np.int64).reshape(-1, 2)
    labels = np.asarray([True] * len(pos) + [False] * len(neg), dtype=bool)
    return PointPromptSet(pts, labels)


# ---------------------------------------------------------------------------
# segmenters


_SEGMENTERS = {}


def register_segmenter(name: str, fn) -> None:
    _SEGMENTERS[name] = fn


def segment(segmenter_id: str, image: np.ndarray, prompts: PointPromptSet):
    """Run a registered segmenter; enforce the disjointness contract."""
    if len(prompts) == 0:
        raise ContractViolation("segmentation needs at least one prompt")
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    xs, ys = prompts.points[:, 0], prompts.points[:, 1]
    if (xs < 0).any() or (xs >= w).any() or (ys < 0).any() or (ys >= h).any():
        raise ContractViolation("prompt points must lie inside the image")
    fn = _SEGMENTERS.get(segmenter_id)
    if fn is None:
        raise SegmenterUnavailableError(f"no segmenter registered as {segmenter_id!r}")
    i_sam, i_negsam = fn(image, prompts)
    i_sam = np.asarray(i_sam, dtype=bool)
    i_negsam = np.asarray(i_negsam, dtype=bool)
    if i_sam.shape != (h, w) or i_negsam.shape != (h, w):
        raise ContractViolation("segmenter returned wrong-shaped masks")
    if (i_sam & i_negsam).any():
        raise ContractViolation("segmenter masks overlap")
    return i_sam, i_negsam


def _grow_regions(image: np.ndarray, seeds, tol: float, blocked: np.ndarray) -> np.ndarray:
    out = np.zeros(image.shape[:2], dtype=bool)
    for x, y in seeds:
        ref = image[y, x]
        close = np.linalg.norm(image - ref, axis=-1) <= tol
        close &= ~blocked
        if not close[y, x]:
            continue
        comps, _ = ndi.label(close)
        out |= comps == comps[y, x]
    return out


def region_grow_segmenter(image: np.ndarray, prompts: PointPromptSet, tol: float = DEFAULT_GROW_TOL):
    """Connected color-similar regions around positive seeds; negative seeds
    grow their own regions first and block positive growth."""
    neg_seeds = prompts.points[~prompts.labels]
    pos_seeds = prompts.points[prompts.labels]
    i_negsam = _grow_regions(image, neg_seeds, tol, np.zeros(image.shape[:2], dtype=bool))
    i_sam = _grow_regions(image, pos_seeds, tol, i_negsam)
    return i_sam, i_negsam


register_segmenter("region_grow", region_grow_segmenter)


def wire_segmenter(exchange):
    """Adapt a request/response callable speaking the JSON wire protocol.

    ``exchange`` maps {"image": nested lists, "points": [[x, y], ...],
    "labels": [1/0, ...]} to {"mask": ..., "negmask": ...}.
    """

    def fn(image, prompts):
        reply = exchange(
            {
                "image": np.asarray(image).tolist(),
                "points": prompts.points.tolist(),
                "labels": [1 if l else 0 for l in prompts.labels],
            }
        )
        return np.asarray(reply["mask"], dtype=bool), np.asarray(reply["negmask"], dtype=bool)

    return fn


# ---------------------------------------------------------------------------
# projection into UV space


def _project_texture(
    texture: np.ndarray,
    uv: np.ndarray,
    target: np.ndarray,
    steps: int,
    lr: float,
    clamp: bool = True,
):
    """Diagonally preconditioned least-squares descent of a UV texture against
    per-pixel targets at fixed uv sample sites.  Returns (texture, loss)."""
    tex = texture.astype(np.float64).copy()
    single = tex.ndim == 2
    if single:
        tex = tex[..., None]
        target = target[..., None]
    # bilinear mass per texel, the diagonal of J^T J
    weight = np.zeros(tex.shape[:2] + (1,))
    splat_uv(weight, uv, np.ones((uv.shape[0], 1)))
    precond = 1.0 / np.maximum(weight[..., 0], 1e-12)
    loss = 0.0
    for _ in range(steps):
        rendered = sample_uv(tex, uv)
        resid = rendered - target
        loss = float((resid * resid).sum())
        grad = np.zeros_like(tex)
        splat_uv(grad, uv, 2.0 * resid)
        tex -= lr * 0.5 * precond[..., None] * grad
        if clamp:
            np.clip(tex, 0.0, 1.0, out=tex)
    rendered = sample_uv(tex, uv)
    resid = rendered - target
    loss = float((resid * resid).sum())
    return (tex[..., 0] if single else tex), loss


def project_mask(
    session: EditSession,
    v_t: Camera,
    i_target: np.ndarray,
    which: str = "mask",
    steps: int = 60,
    lr: float = 1.0,
) -> float:
    """Descend the selected mask texture toward a view-space binary target.

    Only texels visible in ``v_t`` receive gradient; values are clamped to
    [0, 1] after every step.  Returns the final masked L2 loss.
    """
    if which not in ("mask", "negmask"):
        raise ContractViolation("which must be 'mask' or 'negmask'")
    gb = raycast(session.scene, v_t)
    if not gb.hit.any():
        raise ZeroCoverageError("view sees no mesh")
    i_target = np.asarray(i_target, dtype=np.float64)
    if i_target.shape != gb.hit.shape:
        raise ResolutionMismatchError("target resolution does not match the view")
    uv = gb.uv[gb.hit]
    target = i_target[gb.hit]
    tex = session.masks.t_mask if which == "mask" else session.masks.t_negmask
    new_tex, loss = _project_texture(tex, uv, target, steps, lr)
    if which == "mask":
        session.masks.t_mask = new_tex
    else:
        session.masks.t_negmask = new_tex
    session.record_view(v_t, f"project_{which}")
    return loss


def project_segmentation(
    session: EditSession,
    v_t: Camera,
    i_sam: np.ndarray,
    i_negsam: np.ndarray,
    steps: int = 60,
    lr: float = 1.0,
):
    """Project both segmentation masks; an empty negative mask on a fresh
    session defaults to coverage-minus-selection."""
    gb = raycast(session.scene, v_t)
    i_negsam = np.asarray(i_negsam, dtype=bool)
    if not i_negsam.any() and not (session.masks.t_negmask > 0.5).any():
        i_negsam = gb.hit & ~np.asarray(i_sam, dtype=bool)
    l_mask = project_mask(session, v_t, i_sam, "mask", steps, lr)
    l_neg = project_mask(session, v_t, i_negsam, "negmask", steps, lr)
    return l_mask, l_neg


# ---------------------------------------------------------------------------
# morphology and partitioning


def _disc(radius: int) -> np.ndarray:
    if radius < 1:
        raise ContractViolation("structuring radius must be >= 1")
    ax = np.arange(-radius, radius + 1)
    return (ax[:, None] ** 2 + ax[None, :] ** 2) <= radius * radius


def morphology(image: np.ndarray, op: str, radius: int, border: int = 0) -> np.ndarray:
    """Binary morphology with a disc element; out-of-frame pixels read as
    ``border`` (background by default)."""
    img = np.asarray(image, dtype=bool)
    disc = _disc(radius)
    if op == "erode":
        return ndi.binary_erosion(img, structure=disc, border_value=border)
    if op == "dilate":
        return ndi.binary_dilation(img, structure=disc, border_value=border)
    if op == "open":
        eroded = ndi.binary_erosion(img, structure=disc, border_value=border)
        return ndi.binary_dilation(eroded, structure=disc, border_value=border)
    raise ContractViolation(f"unknown morphology op: {op!r}")


def partition_masks(
    candidate: np.ndarray,
    painted_view: np.ndarray,
    m_t: np.ndarray,
    r_open: int = DEFAULT_R_OPEN,
    r_ring: int = DEFAULT_R_RING,
) -> ViewPartition:
    """The pure morphology composition behind partition_view.

    Fresh area = opened (candidate minus prior paint); the seam band is the
    dilate-minus-erode ring of it restricted to prior paint; everything else
    in coverage is kept.
    """
    candidate = np.asarray(candidate, dtype=bool)
    painted_view = np.asarray(painted_view, dtype=bool)
    m_t = np.asarray(m_t, dtype=bool)
    m_new = morphology(candidate & ~painted_view, "open", r_open)
    ring = morphology(m_new, "dilate", r_ring) & ~morphology(m_new, "erode", r_ring)
    m_refine = ring & painted_view
    m_keep = m_t & ~m_new & ~m_refine
    return ViewPartition(m_new, m_keep, m_refine, m_t)


def partition_view(
    session: EditSession,
    v_t: Camera,
    candidate_region: np.ndarray,
    r_open: int = DEFAULT_R_OPEN,
    r_ring: int = DEFAULT_R_RING,
) -> ViewPartition:
    """Split the view into fresh / seam / untouched areas for painting."""
    gb = raycast(session.scene, v_t)
    m_t = gb.hit
    candidate = np.asarray(candidate_region, dtype=bool)
    if candidate.shape != m_t.shape:
        raise ResolutionMismatchError("candidate resolution does not match the view")
    if (candidate & ~m_t).any():
        raise ContractViolation("candidate region leaves the mesh coverage")
    painted_pair = MaskTexturePair(session.painted, session.painted)
    painted_view = render(session.scene, v_t, "mask", mask_pair=painted_pair).pixels
    part = partition_masks(candidate, painted_view, m_t, r_open, r_ring)
    session.record_view(v_t, "partition")
    return part


# ---------------------------------------------------------------------------
# painting


def blend_paint(z_hat: np.ndarray, z: np.ndarray, partition: ViewPartition) -> np.ndarray:
    """Per-pixel select: painter output on M_new and M_refine, original elsewhere."""
    z_hat = np.asarray(z_hat, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if z_hat.shape != z.shape or z_hat.shape[:2] != partition.m_new.shape:
        raise ResolutionMismatchError("blend inputs must share the partition resolution")
    m = partition.m_paint
    if z.ndim == 3:
        m = m[..., None]
    return np.where(m, z_hat, z)


_PAINTERS = {}


def register_painter(name: str, fn) -> None:
    _PAINTERS[name] = fn


_TAG_COLORS = {
    "red": (0.85, 0.10, 0.10),
    "green": (0.10, 0.75, 0.15),
    "blue": (0.10, 0.20, 0.85),
    "yellow": (0.90, 0.85, 0.10),
    "white": (0.95, 0.95, 0.95),
    "black": (0.05, 0.05, 0.05),
}


def _tag_color(tag: str):
    tag = tag.strip().lower()
    if tag.startswith("#") and len(tag) == 7:
        return tuple(int(tag[k : k + 2], 16) / 255.0 for k in (1, 3, 5))
    if tag in _TAG_COLORS:
        return _TAG_COLORS[tag]
    # deterministic fallback hue from the tag bytes
    h = sum(tag.encode()) % 256 / 256.0
    return (0.3 + 0.6 * h, 0.9 - 0.6 * h, 0.4)


def procedural_painter(view: np.ndarray, normal: np.ndarray, partition: ViewPartition, tag: str) -> np.ndarray:
    """Deterministic stand-in painter: flat tag color shaded by view-space
    normal, so output stays geometry-aware without any learned model."""
    color = np.asarray(_tag_color(tag))
    shade = 0.55 + 0.45 * np.clip(normal[..., 2] if normal is not None else 1.0, 0.0, 1.0)
    out = np.asarray(view, dtype=np.float64).copy()
    m = partition.m_paint
    out[m] = color[None, :] * shade[m][:, None]
    return np.clip(out, 0.0, 1.0)


register_painter("procedural", procedural_painter)


def paint_view(
    session: EditSession,
    v_t: Camera,
    partition: ViewPartition,
    tag: str,
    steps: int = 4,
) -> np.ndarray:
    """Run the active painter iteratively, blending after every step."""
    fn = _PAINTERS.get(session.painter_id)
    if fn is None:
        raise SegmenterUnavailableError(f"no painter registered as {session.painter_id!r}")
    gb = raycast(session.scene, v_t)
    z = render(session.scene, v_t, "shaded").pixels
    normal = np.where(gb.hit[..., None], gb.normal, 0.0)
    current = z
    for _ in range(max(1, steps)):
        z_hat = fn(current, normal, partition, tag)
        current = blend_paint(z_hat, z, partition)
    session.record_view(v_t, "paint")
    return current


def apply_local_edit(
    session: EditSession,
    edited_view: np.ndarray,
    v_t: Camera,
    steps: int = 60,
    lr: float = 1.0,
) -> np.ndarray:
    """Bake an edited view back into the albedo texture inside the mask.

    The edited view is projected into a full-texture candidate, then composed
    as T_edit * T_mask + T_orig * (1 - T_mask); previously invisible texels
    keep their original values by construction.
    """
    mat = session.scene.material
    if mat is None:
        raise ContractViolation("scene has no material to edit")
    gb = raycast(session.scene, v_t)
    if not gb.hit.any():
        raise ZeroCoverageError("view sees no mesh")
    edited_view = np.asarray(edited_view, dtype=np.float64)
    if edited_view.shape[:2] != gb.hit.shape:
        raise ResolutionMismatchError("edited view resolution does not match the camera")
    uv = gb.uv[gb.hit]
    target = edited_view[gb.hit]
    t_edit, _ = _project_texture(mat.albedo, uv, target, steps, lr)

    t_mask = session.masks.t_mask
    if t_mask.shape != mat.albedo.shape[:2]:
        raise ResolutionMismatchError("mask texture does not match the albedo resolution")
    blend = t_mask[..., None]
    new_albedo = t_edit * blend + mat.albedo * (1.0 - blend)

    from dataclasses import replace as dc_replace

    session.scene.material = dc_replace(mat, albedo=np.clip(new_albedo, 0.0, 1.0))
    # coverage update: texels actually reachable from this view and selected
    seen_w = np.zeros(t_mask.shape + (1,))
    splat_uv(seen_w, uv, np.ones((uv.shape[0], 1)))
    seen = seen_w[..., 0] > 1e-9
    session.painted = np.maximum(session.painted, (seen & (t_mask > 0.5)).astype(np.float64))
    session.record_view(v_t, "apply_local_edit")
    return session.scene.material.albedo
