"""Ray-cast rendering: G-buffers, the pass zoo, and the shading oracles.

One primary-ray cast per pixel against the scene BVH gives a G-buffer; every
pass mode is a readout of that buffer (shaded mode runs the closed-form SG
shading on top). shade_point_sg is the scalar reference built from sg-algebra
calls; mc_shade_point is the Monte-Carlo ground truth both are tested against.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from . import shading
from .errors import BackFaceError, ContractViolation, DegenerateLobeError, EmptySceneError
from .material import (
    MaterialModel,
    SurfaceSample,
    cosine_sg,
    fresnel_shadow,
    specular_sg,
)
from .mesh import Camera, Scene
from .sg import SGMixture, sg_inner_product, sg_integral, sg_product
from .texture import sample_nearest, sample_uv, splat_uv  # noqa: F401  (re-export)

Array = np.ndarray

RENDER_MODES = ("shaded", "albedo", "normal", "semantic", "mask", "negmask", "depth")


@dataclass
class GBuffer:
    """Per-pixel primary-hit attributes for one (scene, camera) pair."""

    hit: Array          # (H, W) bool
    depth: Array        # (H, W) ray parameter t, 0 where miss
    position: Array     # (H, W, 3)
    normal: Array       # (H, W, 3) interpolated, unit where hit
    uv: Array           # (H, W, 2)
    label: Array        # (H, W) int64, -1 where miss or no material
    view: Array         # (H, W, 3) unit, surface point toward camera


@dataclass
class RenderStats:
    hits: int
    clamped: int
    backfaces: int
    seconds: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "hits": self.hits,
                "clamped": self.clamped,
                "backfaces": self.backfaces,
                "seconds": round(self.seconds, 6),
            }
        )


@dataclass
class RenderPass:
    mode: str
    pixels: Array
    coverage: Array
    stats: RenderStats | None = None


def raycast(scene: Scene, camera: Camera) -> GBuffer:
    """Cast primary rays, interpolate hit attributes; cache-friendly one-shot."""
    if scene.num_faces == 0:
        raise EmptySceneError("cannot render an empty mesh")
    origins, dirs = camera.rays()
    h, w = dirs.shape[:2]
    o = origins.reshape(-1, 3)
    d = dirs.reshape(-1, 3)
    t, tri, bu, bv = scene.bvh().intersect(o, d)
    hit = tri >= 0

    pos = np.zeros((h * w, 3))
    nrm = np.zeros((h * w, 3))
    uv = np.zeros((h * w, 2))
    lab = np.full(h * w, -1, dtype=np.int64)
    dep = np.zeros(h * w)

    if np.any(hit):
        hi = np.where(hit)[0]
        f = scene.faces[tri[hi]]
        w0 = (1.0 - bu[hi] - bv[hi])[:, None]
        w1 = bu[hi][:, None]
        w2 = bv[hi][:, None]
        pos[hi] = o[hi] + t[hi][:, None] * d[hi]
        n = w0 * scene.normals[f[:, 0]] + w1 * scene.normals[f[:, 1]] \
            + w2 * scene.normals[f[:, 2]]
        n /= np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-12)
        nrm[hi] = n
        uv[hi] = np.clip(
            w0 * scene.uvs[f[:, 0]] + w1 * scene.uvs[f[:, 1]]
            + w2 * scene.uvs[f[:, 2]],
            0.0, 1.0,
        )
        dep[hi] = t[hi]
        if isinstance(scene.material, MaterialModel):
            lab[hi] = sample_nearest(scene.material.label_atlas, uv[hi])

    sh = (h, w)
    return GBuffer(
        hit=hit.reshape(sh),
        depth=dep.reshape(sh),
        position=pos.reshape(sh + (3,)),
        normal=nrm.reshape(sh + (3,)),
        uv=uv.reshape(sh + (2,)),
        label=lab.reshape(sh),
        view=(-d).reshape(sh + (3,)),
    )


def pixel_materials(model: MaterialModel, uv: Array, label: Array):
    """Vectorized material_at over flat pixel arrays: (albedo, lam_x, mu_x)."""
    albedo = sample_uv(model.albedo, uv)
    lam = np.exp(model.table.roughness_log[label] + sample_uv(model.roughness_offset, uv))
    mu = np.clip(model.table.specular[label] + sample_uv(model.specular_offset, uv),
                 0.0, 1.0)
    return albedo, lam, mu


def render(scene: Scene, camera: Camera, mode: str, *,
           mask_pair=None, with_stats: bool = False) -> RenderPass:
    """Render one pass. mask/negmask modes need ``mask_pair`` with t_mask /
    t_negmask float textures; they threshold the sampled value at 0.5."""
    if mode not in RENDER_MODES:
        raise ContractViolation(f"unknown render mode {mode!r}")
    t0 = time.perf_counter()
    gb = raycast(scene, camera)
    h, w = gb.hit.shape
    hits = int(gb.hit.sum())
    clamped = 0
    backfaces = 0
    flat_hit = gb.hit.reshape(-1)
    hi = np.where(flat_hit)[0]

    if mode == "depth":
        pixels = gb.depth.copy()
    elif mode == "normal":
        pixels = gb.normal.copy()
    elif mode == "semantic":
        pixels = np.zeros((h, w), dtype=np.int64)
        pixels.reshape(-1)[hi] = np.maximum(gb.label.reshape(-1)[hi], 0)
    elif mode in ("mask", "negmask"):
        if mask_pair is None:
            raise ContractViolation(f"{mode} pass needs mask_pair")
        tex = mask_pair.t_mask if mode == "mask" else mask_pair.t_negmask
        pixels = np.zeros((h, w), dtype=bool)
        if hi.size:
            vals = sample_uv(np.asarray(tex, np.float64), gb.uv.reshape(-1, 2)[hi])
            pixels.reshape(-1)[hi] = vals > 0.5
    elif mode == "albedo":
        if not isinstance(scene.material, MaterialModel):
            raise ContractViolation("albedo pass needs scene.material")
        pixels = np.zeros((h, w, 3))
        if hi.size:
            pixels.reshape(-1, 3)[hi] = sample_uv(
                scene.material.albedo, gb.uv.reshape(-1, 2)[hi]
            )
    else:  # shaded
        if not isinstance(scene.material, MaterialModel):
            raise ContractViolation("shaded pass needs scene.material")
        if not isinstance(scene.environment, SGMixture):
            raise ContractViolation("shaded pass needs scene.environment")
        pixels = np.zeros((h, w, 3))
        if hi.size:
            nrm = gb.normal.reshape(-1, 3)[hi]
            view = gb.view.reshape(-1, 3)[hi]
            ndv = np.einsum("ij,ij->i", nrm, view)
            front = ndv > 0.0
            backfaces = int(hi.size - front.sum())
            fi = hi[front]
            if fi.size:
                uvf = gb.uv.reshape(-1, 2)[fi]
                labf = np.maximum(gb.label.reshape(-1)[fi], 0)
                alb, lam, mu = pixel_materials(scene.material, uvf, labf)
                rgb, clamped = shading.shade_pixels(
                    nrm[front], view[front], alb, lam, mu, scene.environment
                )
                pixels.reshape(-1, 3)[fi] = rgb

    stats = RenderStats(hits, clamped, backfaces, time.perf_counter() - t0)
    return RenderPass(mode=mode, pixels=pixels, coverage=gb.hit.copy(),
                      stats=stats if with_stats else None)


# ---------------------------------------------------------------------------
# shading reference routes
# ---------------------------------------------------------------------------

def shade_point_sg(sample: SurfaceSample, omega_o, albedo, lam_x: float,
                   mu_x, env: SGMixture) -> Array:
    """Scalar closed-form shading composed from the SG algebra ops.

    Per light lobe k: diffuse (atop/pi)[<G_k, cos_n> + c int(G_k)], specular
    [<G_k W, cos_n> + c int(G_k W)] with W the warped specular lobe; final
    radiance clamped below at 0.
    """
    n = sample.normal
    omega_o = np.asarray(omega_o, dtype=np.float64)
    if float(n @ omega_o) <= 0.0:
        raise BackFaceError("view below surface")
    albedo = np.asarray(albedo, dtype=np.float64)
    cos_lobe, c = cosine_sg(n)
    spec_lobe = specular_sg(omega_o, sample, lam_x, mu_x)
    out = np.zeros(3)
    for g in env.lobes:
        inner_d = sg_inner_product(g, cos_lobe)
        int_g = sg_integral(g)
        out = out + (albedo / np.pi) * (inner_d + c * int_g)
        try:
            gw = sg_product(g, spec_lobe)
            term = sg_inner_product(gw, cos_lobe) + c * sg_integral(gw)
        except DegenerateLobeError as deg:
            # constant-function product: integrate the constant instead
            term = deg.constant * sg_integral(cos_lobe) \
                + c * deg.constant * 4.0 * np.pi
        out = out + term
    return np.clip(out, 0.0, None)


def _brdf_batch(omega_o, dirs, albedo, lam_x, mu_x, n) -> Array:
    """Vectorized half-vector BRDF over sampled light directions (N, 3).

    Matches material.brdf_eval: NDF sharpness lam_x in the h domain, no warp
    Jacobian here.
    """
    m = fresnel_shadow(omega_o, n, mu_x) * mu_x
    half = dirs + omega_o[None, :]
    hn = np.linalg.norm(half, axis=1, keepdims=True)
    half = half / np.maximum(hn, 1e-12)
    spec = m[None, :] * np.exp(lam_x * (half @ n - 1.0))[:, None]
    return albedo[None, :] / np.pi + spec


def mc_shade_point(sample: SurfaceSample, omega_o, albedo, lam_x: float,
                   mu_x, env: SGMixture, n_samples: int,
                   seed: int = 0) -> tuple[Array, Array]:
    """Monte-Carlo estimate of the shading integral, with standard error.

    Cosine-weighted hemisphere sampling around the normal; the integrand uses
    brdf_eval's exact half-vector form, so this is the unbiased reference the
    closed-form path is measured against.
    """
    if n_samples < 1:
        raise ContractViolation("n_samples must be >= 1")
    n = sample.normal
    omega_o = np.asarray(omega_o, dtype=np.float64)
    albedo = np.asarray(albedo, dtype=np.float64)
    mu_x = np.atleast_1d(np.asarray(mu_x, dtype=np.float64))

    rng = np.random.default_rng(seed)
    r1 = rng.random(n_samples)
    r2 = rng.random(n_samples)
    sin_t = np.sqrt(r1)
    cos_t = np.sqrt(1.0 - r1)
    phi = 2.0 * np.pi * r2
    # tangent frame around n
    a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t1 = np.cross(n, a)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    dirs = (
        (sin_t * np.cos(phi))[:, None] * t1
        + (sin_t * np.sin(phi))[:, None] * t2
        + cos_t[:, None] * n
    )

    radiance = np.zeros((n_samples, 3))
    for lobe in env.lobes:
        amp = lobe.amplitude if lobe.channels == 3 else np.repeat(lobe.amplitude, 3)
        radiance += amp[None, :] * np.exp(
            lobe.sharpness * (dirs @ lobe.axis - 1.0)
        )[:, None]

    f = _brdf_batch(omega_o, dirs, albedo, lam_x, mu_x, n)
    # pdf = cos/pi, integrand L f cos  =>  sample weight pi L f
    contrib = np.pi * radiance * f
    est = contrib.mean(axis=0)
    if n_samples > 1:
        stderr = contrib.std(axis=0, ddof=1) / np.sqrt(n_samples)
    else:
        stderr = np.zeros(3)
    return est, stderr
