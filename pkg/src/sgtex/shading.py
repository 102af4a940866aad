"""Vectorized closed-form SG shading and differentiable texture sampling.

torch float64 throughout. The same graph serves two callers: the renderer
evaluates it under no_grad, the optimizer differentiates through it. The
scalar reference path composed from sg module calls lives in render.py;
tests hold the two routes equal.
"""

from __future__ import annotations

import numpy as np
import torch

from .material import COS_AMPLITUDE, COS_OFFSET, COS_SHARPNESS
from .sg import SGMixture

TWO_PI = 2.0 * np.pi

# resultant-sharpness floor; the integral formula is continuous through 0
# when evaluated with expm1, this only guards the division
_LAM_FLOOR = 1e-12


def env_tensors(env: SGMixture) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Mixture as (axes (K,3), sharpness (K,), rgb amplitude (K,3)) tensors."""
    axes = np.stack([l.axis for l in env.lobes])
    sharp = np.array([l.sharpness for l in env.lobes])
    amps = np.stack([
        l.amplitude if l.channels == 3 else np.repeat(l.amplitude, 3)
        for l in env.lobes
    ])
    return (
        torch.from_numpy(axes.astype(np.float64)),
        torch.from_numpy(sharp.astype(np.float64)),
        torch.from_numpy(amps.astype(np.float64)),
    )


def _sphere_integral(lam: torch.Tensor) -> torch.Tensor:
    # 2*pi*(1 - exp(-2 lam))/lam, stable near lam = 0 via expm1
    return TWO_PI * (-torch.expm1(-2.0 * lam)) / lam.clamp_min(_LAM_FLOOR)


def shade_closed_form(
    normals: torch.Tensor,
    views: torch.Tensor,
    albedo: torch.Tensor,
    lam_x: torch.Tensor,
    mu_x: torch.Tensor,
    env_axes: torch.Tensor,
    env_sharp: torch.Tensor,
    env_amp: torch.Tensor,
) -> torch.Tensor:
    """Closed-form outgoing radiance per pixel, unclamped.

    normals/views (P, 3) unit with n.v > 0; albedo (P, 3); lam_x (P,);
    mu_x (P, 3); environment (K, 3)/(K,)/(K, 3). Returns (P, 3). Callers
    clamp at zero and may count negative pixels.
    """
    ndv = (normals * views).sum(-1).clamp_min(1e-9)

    # diffuse: (a/pi) * sum_k [ <G_k, cos_n> + offset * int(G_k) ]
    d = env_sharp[None, :, None] * env_axes[None, :, :] \
        + COS_SHARPNESS * normals[:, None, :]
    lam3 = torch.linalg.norm(d, dim=-1)
    mu3 = env_amp[None] * (
        COS_AMPLITUDE * torch.exp(lam3 - env_sharp[None] - COS_SHARPNESS)
    )[..., None]
    inner_cos = mu3 * _sphere_integral(lam3)[..., None]
    int_gk = env_amp * _sphere_integral(env_sharp)[:, None]
    diffuse = (albedo / np.pi) * (
        inner_cos.sum(dim=1) + COS_OFFSET * int_gk.sum(dim=0)[None]
    )

    # specular: warped view-dependent lobe W, then sum_k [ <G_k W, cos_n>
    # + offset * int(G_k W) ]
    r = 2.0 * ndv[:, None] * normals - views
    lam_w = lam_x / (4.0 * ndv)
    fresnel = mu_x + (1.0 - mu_x) * (1.0 - ndv[:, None]) ** 5
    amp_w = fresnel * (ndv * ndv)[:, None] * mu_x

    d2 = env_sharp[None, :, None] * env_axes[None, :, :] \
        + lam_w[:, None, None] * r[:, None, :]
    lam_pk = torch.linalg.norm(d2, dim=-1)
    amp_pk = env_amp[None] * amp_w[:, None, :] * torch.exp(
        lam_pk - env_sharp[None] - lam_w[:, None]
    )[..., None]
    d3 = d2 + COS_SHARPNESS * normals[:, None, :]
    lam4 = torch.linalg.norm(d3, dim=-1)
    mu4 = amp_pk * (
        COS_AMPLITUDE * torch.exp(lam4 - lam_pk - COS_SHARPNESS)
    )[..., None]
    spec = (
        mu4 * _sphere_integral(lam4)[..., None]
        + COS_OFFSET * amp_pk * _sphere_integral(lam_pk)[..., None]
    ).sum(dim=1)

    return diffuse + spec


def shade_pixels(normals, views, albedo, lam_x, mu_x,
                 env: SGMixture) -> tuple[np.ndarray, int]:
    """Numpy front end: clamped radiance (P, 3) plus count of clamped pixels."""
    axes, sharp, amps = env_tensors(env)
    with torch.no_grad():
        out = shade_closed_form(
            torch.from_numpy(np.ascontiguousarray(normals, np.float64)),
            torch.from_numpy(np.ascontiguousarray(views, np.float64)),
            torch.from_numpy(np.ascontiguousarray(albedo, np.float64)),
            torch.from_numpy(np.ascontiguousarray(lam_x, np.float64)),
            torch.from_numpy(np.ascontiguousarray(mu_x, np.float64)),
            axes, sharp, amps,
        )
        clamped = int((out < -1e-15).any(dim=-1).sum())
        out = out.clamp_min(0.0)
    return out.numpy(), clamped


def sample_uv_torch(tex: torch.Tensor, uv: torch.Tensor) -> torch.Tensor:
    """Bilinear texture read, differentiable w.r.t. ``tex``.

    Matches texture.sample_uv exactly: texel centers at (j+0.5)/W, clamp
    wrap. tex (H, W) or (H, W, C); uv (P, 2). Returns (P,) or (P, C).
    """
    h, w = tex.shape[0], tex.shape[1]
    u = (uv[:, 0] * w - 0.5).clamp(0.0, w - 1.0)
    v = (uv[:, 1] * h - 0.5).clamp(0.0, h - 1.0)
    j0 = u.floor().long()
    i0 = v.floor().long()
    j1 = (j0 + 1).clamp_max(w - 1)
    i1 = (i0 + 1).clamp_max(h - 1)
    fu = u - j0.to(u.dtype)
    fv = v - i0.to(v.dtype)
    flat = tex.reshape(h * w, -1)
    g00 = flat[i0 * w + j0]
    g01 = flat[i0 * w + j1]
    g10 = flat[i1 * w + j0]
    g11 = flat[i1 * w + j1]
    out = (
        ((1.0 - fu) * (1.0 - fv))[:, None] * g00
        + (fu * (1.0 - fv))[:, None] * g01
        + ((1.0 - fu) * fv)[:, None] * g10
        + (fu * fv)[:, None] * g11
    )
    return out[:, 0] if tex.dim() == 2 else out
