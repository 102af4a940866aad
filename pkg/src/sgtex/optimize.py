"""Inverse rendering: fit environment lobes and material textures to posed images.

The differentiable path runs in torch float64; geometry buffers are
precomputed per view with the numpy raycaster and stay fixed during a fit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.ndimage as ndi
import torch

from .errors import (
    ContractViolation,
    DivergenceError,
    EmptyInputError,
    EmptyRegionError,
)
from .material import MaterialModel, SemanticMaterialTable
from .mesh import Camera, Scene
from .render import raycast
from .semantics import UNLABELED, SemanticLabelMap, assign_pseudo_labels, pixel_features, region_average
from .sg import SGMixture, SphericalGaussian
from .shading import sample_uv_torch, shade_closed_form


# ---------------------------------------------------------------------------
# config and small domain types


@dataclass(frozen=True)
class AlbedoLibrary:
    """Per-label albedo anchors, EMA-updated during fitting."""

    a_s: np.ndarray          # (N_s, 3) in [0, 1]
    update_period: int = 10
    ema_decay: float = 0.9

    def __post_init__(self):
        a = np.asarray(self.a_s, dtype=np.float64)
        if a.ndim != 2 or a.shape[1] != 3:
            raise ContractViolation("albedo library must be (N_s, 3)")
        if (a < 0).any() or (a > 1).any():
            raise ContractViolation("albedo library entries must lie in [0, 1]")
        if self.update_period < 1:
            raise ContractViolation("update_period must be >= 1")
        if not (0.0 <= self.ema_decay < 1.0):
            raise ContractViolation("ema_decay must lie in [0, 1)")
        object.__setattr__(self, "a_s", a)

    @property
    def label_count(self) -> int:
        return self.a_s.shape[0]


@dataclass(frozen=True)
class Observation:
    """One posed image; ``kind`` is 'reference' or 'novel'."""

    camera: Camera
    image: np.ndarray
    kind: str = "novel"
    reference_albedo: np.ndarray | None = None
    label_map: SemanticLabelMap | None = None

    def __post_init__(self):
        img = np.asarray(self.image, dtype=np.float64)
        w, h = self.camera.resolution
        if img.shape != (h, w, 3):
            raise ContractViolation("observation image does not match camera resolution")
        if self.kind not in ("reference", "novel"):
            raise ContractViolation("kind must be 'reference' or 'novel'")
        if self.reference_albedo is not None:
            ra = np.asarray(self.reference_albedo, dtype=np.float64)
            if ra.shape != (h, w, 3):
                raise ContractViolation("reference albedo does not match camera resolution")
            object.__setattr__(self, "reference_albedo", ra)
        object.__setattr__(self, "image", img)


@dataclass(frozen=True)
class FitConfig:
    """Optimizer budget, per-group learning rates, and loss weights.

    The data term is the mean squared pixel error over covered pixels, summed
    over views; offsets are regularized by their summed squares.
    """

    iterations: int = 2000
    lr_env: float = 1e-2
    lr_albedo: float = 5e-2
    lr_tables: float = 1e-2
    lr_offsets: float = 1e-2
    w_a: float = 0.1
    w_ref: float = 1.0
    w_off: float = 1e-3
    sigma_gauss: float = 3.0
    mixture_size: int = 16
    update_period: int = 10
    ema_decay: float = 0.9
    momentum: float = 0.9
    tau_assign: float = 0.85

    def __post_init__(self):
        if min(self.w_a, self.w_ref, self.w_off) < 0:
            raise ContractViolation("loss weights must be non-negative")
        if self.sigma_gauss <= 0:
            raise ContractViolation("sigma_gauss must be positive")
        if self.iterations < 1 or self.mixture_size < 1:
            raise ContractViolation("iterations and mixture_size must be >= 1")

    @classmethod
    def from_file(cls, path) -> "FitConfig":
        path = Path(path)
        if path.suffix == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            data = tomllib.loads(path.read_text())
        else:
            data = json.loads(path.read_text())
        return cls(**data)


def write_loss_trace(path, trace) -> None:
    """Loss trace rows as CSV with the canonical header."""
    lines = ["iter,data,L_a,ref,offset,total"]
    for row in trace:
        lines.append("%d,%.10g,%.10g,%.10g,%.10g,%.10g" % tuple(row))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# gaussian machinery for the albedo regularizer


def _gauss_taps(sigma: float) -> np.ndarray:
    # explicit truncated taps, radius 4 sigma, normalized to sum 1
    r = int(4.0 * sigma + 0.5)
    x = np.arange(-r, r + 1, dtype=np.float64)
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return w / w.sum()


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, zero padding outside the frame."""
    taps = _gauss_taps(sigma)
    out = np.asarray(image, dtype=np.float64)
    out = ndi.convolve1d(out, taps, axis=0, mode="constant", cval=0.0)
    out = ndi.convolve1d(out, taps, axis=1, mode="constant", cval=0.0)
    return out


def _region_coefficients(mask: np.ndarray, sigma: float) -> np.ndarray:
    """Linear weights c with c . A == mean over the mask of the
    mask-renormalized Gaussian blur of A.  Zero off the mask."""
    m = mask.astype(np.float64)
    area = m.sum()
    if area == 0:
        raise EmptyRegionError("coefficient map for an empty mask")
    den = gaussian_blur(m, sigma)
    ratio = np.where(mask, m / np.maximum(den, 1e-300), 0.0)
    # note: the blur kernel is symmetric, so the transpose is the same blur
    return m * gaussian_blur(ratio, sigma) / area


def blurred_region_means(a_pred: np.ndarray, labels: SemanticLabelMap, sigma: float):
    """Per-present-label mean of the mask-renormalized blurred image.

    Returns (label ids, means) for labels with at least one pixel.
    """
    a_pred = np.asarray(a_pred, dtype=np.float64)
    if a_pred.shape[:2] != labels.labels.shape:
        raise ContractViolation("image and label map resolutions differ")
    present = [i for i in range(labels.n_labels) if (labels.labels == i).any()]
    if not present:
        raise EmptyRegionError("label map references no labels")
    means = []
    for i in present:
        mask = labels.labels == i
        num = gaussian_blur(a_pred * mask[..., None], sigma)
        den = gaussian_blur(mask.astype(np.float64), sigma)
        blurred = num[mask] / den[mask][:, None]
        means.append(blurred.mean(axis=0))
    return present, np.stack(means)


def albedo_regularization(
    a_pred: np.ndarray,
    labels: SemanticLabelMap,
    lib: AlbedoLibrary,
    sigma_gauss: float,
) -> float:
    """Sum over present labels of squared distance between the blurred
    region mean and the library entry.  Labels absent from the map are
    skipped (a view rarely shows every label)."""
    if lib.label_count != labels.n_labels:
        raise ContractViolation("library row count does not match label map")
    present, means = blurred_region_means(a_pred, labels, sigma_gauss)
    diff = means - lib.a_s[present]
    return float((diff * diff).sum())


def update_albedo_library(
    lib: AlbedoLibrary, reference_albedo: np.ndarray, labels: SemanticLabelMap
) -> AlbedoLibrary:
    """EMA step toward the current semantic-region-averaged albedo."""
    avg = region_average(reference_albedo, labels)
    if avg.shape != lib.a_s.shape:
        raise ContractViolation("region average shape does not match library")
    new = lib.ema_decay * lib.a_s + (1.0 - lib.ema_decay) * avg
    return replace(lib, a_s=np.clip(new, 0.0, 1.0))


# ---------------------------------------------------------------------------
# gradient checking


def gradient_check(loss_fn, param: torch.Tensor, eps: float = 1e-4) -> float:
    """Max relative disagreement between autograd and central differences."""
    p = param.detach().clone().requires_grad_(True)
    loss = loss_fn(p)
    (analytic,) = torch.autograd.grad(loss, p)
    analytic = analytic.detach().reshape(-1).numpy()
    flat = p.detach().reshape(-1)
    fd = np.zeros(flat.shape[0])
    with torch.no_grad():
        for i in range(flat.shape[0]):
            orig = flat[i].item()
            flat[i] = orig + eps
            hi = float(loss_fn(p.detach()))
            flat[i] = orig - eps
            lo = float(loss_fn(p.detach()))
            flat[i] = orig
            fd[i] = (hi - lo) / (2.0 * eps)
    denom = np.maximum(np.maximum(np.abs(fd), np.abs(analytic)), 1e-8)
    return float((np.abs(fd - analytic) / denom).max())


# ---------------------------------------------------------------------------
# environment fitting


def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - 2.0 * (i + 0.5) / n
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _softplus_inv(y: float) -> float:
    y = max(float(y), 1e-9)
    return float(np.log(np.expm1(y))) if y < 30 else y


def _mixture_from_raw(axes_raw, log_lam, amp_raw) -> SGMixture:
    axes = axes_raw / np.linalg.norm(axes_raw, axis=1, keepdims=True)
    lam = np.exp(log_lam)
    amp = np.log1p(np.exp(amp_raw))  # softplus
    lobes = tuple(SphericalGaussian(axes[k], lam[k], amp[k]) for k in range(axes.shape[0]))
    return SGMixture(lobes)


def fit_env_map(latlong: np.ndarray, m: int, iterations: int = 2000, lr: float = 5e-2):
    """Fit an SG mixture to a lat-long radiance image.

    Solid-angle-weighted least squares from a Fibonacci-sphere init.  Plain
    gradient descent mode-collapses for small M (two lobes lock onto one
    bright spot and the rest of the image never gets fit), so every
    ``seed_period`` steps the amplitudes are re-solved exactly (they are
    linear given axes and sharpness) and duplicate or dead lobes jump to the
    direction of largest remaining residual.  Returns (mixture, weighted RMS
    residual).
    """
    from .sg import latlong_directions, latlong_solid_angles

    img = np.asarray(latlong, dtype=np.float64)
    if img.ndim != 3 or img.shape[-1] != 3:
        raise ContractViolation("lat-long image must be (H, W, 3)")
    if m < 1:
        raise ContractViolation("need at least one lobe")
    h, w = img.shape[:2]
    dirs = torch.from_numpy(latlong_directions(h, w).reshape(-1, 3))
    weights = torch.from_numpy(latlong_solid_angles(h, w).reshape(-1))
    weights = weights / weights.sum()
    target = torch.from_numpy(img.reshape(-1, 3))
    sqw = torch.sqrt(weights)[:, None]
    seed_period = 200

    mean_rad = float((weights[:, None] * target).sum(dim=0).mean())
    axes = torch.from_numpy(fibonacci_sphere(m)).clone().requires_grad_(True)
    log_lam = torch.full((m,), math.log(5.0), dtype=torch.float64, requires_grad=True)
    amp0 = _softplus_inv(max(mean_rad, 1e-8))
    amp_raw = torch.full((m, 3), amp0, dtype=torch.float64, requires_grad=True)

    def forward():
        ax = axes / torch.linalg.norm(axes, dim=1, keepdim=True)
        lam = torch.exp(log_lam)
        amp = torch.nn.functional.softplus(amp_raw)
        resp = torch.exp(lam[None, :] * (dirs @ ax.T - 1.0))
        return ax, lam, amp, resp

    def solve_amplitudes():
        with torch.no_grad():
            _, _, _, resp = forward()
            sol = torch.linalg.lstsq(resp * sqw, target * sqw).solution
            sol = sol.clamp_min(1e-8)
            amp_raw.copy_(torch.where(sol < 30.0, torch.log(torch.expm1(sol)), sol))

    def reseed_stuck_lobes():
        with torch.no_grad():
            ax, _, amp, resp = forward()
            resid = ((target - resp @ amp).clamp_min(0.0) * weights[:, None]).sum(dim=1)
            sims = ax @ ax.T
            for i in range(m):
                duplicate = bool((sims[i, :i] > 0.995).any())
                dead = float(amp[i].max()) < 1e-4
                if duplicate or dead:
                    k = int(torch.argmax(resid))
                    axes[i] = dirs[k] * torch.linalg.norm(axes[i])
                    log_lam[i] = math.log(20.0)
                    gap = float((target[k] - (resp @ amp)[k]).clamp_min(1e-6).mean())
                    amp_raw[i] = _softplus_inv(gap)
                    resid[k] = 0.0

    opt = torch.optim.Adam([axes, log_lam, amp_raw], lr=lr)
    for it in range(iterations):
        opt.zero_grad()
        _, _, amp, resp = forward()
        loss = (weights[:, None] * (resp @ amp - target) ** 2).sum()
        loss.backward()
        opt.step()
        if (it + 1) % seed_period == 0 and it < iterations - seed_period:
            solve_amplitudes()
            reseed_stuck_lobes()
    solve_amplitudes()
    with torch.no_grad():
        ax, lam, amp, resp = forward()
        pred = resp @ amp
        resid = float(torch.sqrt((weights[:, None] * (pred - target) ** 2).sum() / 3.0))
    mix = _mixture_from_raw(ax.numpy(), torch.log(lam).detach().numpy(),
                            amp_raw.detach().numpy())
    return mix, resid


# ---------------------------------------------------------------------------
# the main fit


class _ViewBundle:
    """Precomputed immutable per-view tensors."""

    def __init__(self, obs: Observation, scene: Scene, labels: SemanticLabelMap, sigma: float):
        gb = raycast(scene, obs.camera)
        ndv = (gb.normal * gb.view).sum(axis=-1)
        hit = gb.hit & (ndv > 1e-9)
        if not hit.any():
            raise EmptyInputError("a view has no usable coverage")
        self.obs = obs
        self.hit = hit
        self.uv = torch.from_numpy(gb.uv[hit])
        self.normal = torch.from_numpy(gb.normal[hit])
        self.view = torch.from_numpy(gb.view[hit])
        self.label = torch.from_numpy(gb.label[hit])
        self.target = torch.from_numpy(obs.image[hit])
        ref = obs.reference_albedo
        self.ref_albedo = torch.from_numpy(ref[hit]) if ref is not None else None

        # labels for the regularizer: off-coverage pixels never count
        lab_img = labels.labels.copy()
        lab_img[~hit] = UNLABELED
        self.reg_labels = SemanticLabelMap(lab_img, labels.n_labels, labels.library)
        self.present = [i for i in range(labels.n_labels) if (lab_img == i).any()]
        coeffs = []
        for i in self.present:
            c = _region_coefficients(lab_img == i, sigma)
            coeffs.append(torch.from_numpy(c[hit]))
        # (n_present, P) coefficient rows aligned with the hit-pixel vectors
        self.coeffs = torch.stack(coeffs) if coeffs else None


def _feature_library(image: np.ndarray, labels: SemanticLabelMap) -> np.ndarray:
    feats = pixel_features(image)
    out = np.zeros((labels.n_labels, feats.shape[-1]))
    for i in range(labels.n_labels):
        mask = labels.labels == i
        if not mask.any():
            raise EmptyRegionError(f"reference label {i} has no pixels")
        out[i] = feats[mask].mean(axis=0)
    return out


def fit(scene: Scene, observations, config: FitConfig = FitConfig()):
    """Fit environment + material to the observations.

    Returns (MaterialModel, SGMixture, loss trace); the trace rows are
    (iter, data, L_a, ref, offset, total).  Initial parameter values come
    from ``scene.material`` and ``scene.environment`` (a Fibonacci-sphere
    mixture of ``config.mixture_size`` lobes when the scene has none).
    """
    observations = list(observations)
    if not observations:
        raise EmptyInputError("fit needs at least one observation")
    refs = [o for o in observations if o.kind == "reference"]
    if not refs:
        raise ContractViolation("fit needs a reference observation")
    model = scene.material
    if not isinstance(model, MaterialModel):
        raise ContractViolation("scene.material must be a MaterialModel with a label atlas")
    n_labels = model.table.label_count
    ref_obs = refs[0]

    # reference labels: provided map, else exact labels from the atlas render
    if ref_obs.label_map is not None:
        ref_labels = ref_obs.label_map
        if ref_labels.n_labels != n_labels:
            raise ContractViolation("reference label map disagrees with the material table")
    else:
        gb = raycast(scene, ref_obs.camera)
        lab_img = np.where(gb.hit, gb.label, UNLABELED).astype(np.int64)
        bare = SemanticLabelMap(lab_img, n_labels, np.zeros((n_labels, 6)))
        ref_labels = SemanticLabelMap(lab_img, n_labels, _feature_library(ref_obs.image, bare))
    feat_lib = ref_labels.library

    # novel views: provided map, else pseudo-labels from the reference library
    view_labels = []
    for obs in observations:
        if obs is ref_obs:
            view_labels.append(ref_labels)
        elif obs.label_map is not None:
            view_labels.append(obs.label_map)
        else:
            view_labels.append(assign_pseudo_labels(obs.image, feat_lib, config.tau_assign))

    bundles = [_ViewBundle(o, scene, l, config.sigma_gauss)
               for o, l in zip(observations, view_labels)]
    ref_bundle = bundles[observations.index(ref_obs)]

    # parameters
    albedo = torch.from_numpy(model.albedo.copy()).requires_grad_(True)
    r_s = torch.from_numpy(model.table.roughness_log.copy()).requires_grad_(True)
    s_s = torch.from_numpy(model.table.specular.copy()).requires_grad_(True)
    off_r = torch.from_numpy(model.roughness_offset.copy()).requires_grad_(True)
    off_s = torch.from_numpy(model.specular_offset.copy()).requires_grad_(True)
    env = scene.environment
    if isinstance(env, SGMixture):
        from .shading import env_tensors

        ax0, lam0, amp0 = env_tensors(env)
        axes_raw = ax0.clone().requires_grad_(True)
        log_lam = torch.log(lam0).clone().requires_grad_(True)
        amp_raw = torch.from_numpy(
            np.array([[_softplus_inv(v) for v in row] for row in amp0.numpy()])
        ).requires_grad_(True)
    else:
        axes_raw = torch.from_numpy(fibonacci_sphere(config.mixture_size)).clone().requires_grad_(True)
        log_lam = torch.full((config.mixture_size,), math.log(5.0), dtype=torch.float64, requires_grad=True)
        amp_raw = torch.full((config.mixture_size, 3), _softplus_inv(0.5), dtype=torch.float64, requires_grad=True)

    groups = [
        ([axes_raw, log_lam, amp_raw], config.lr_env),
        ([albedo], config.lr_albedo),
        ([r_s, s_s], config.lr_tables),
        ([off_r, off_s], config.lr_offsets),
    ]
    velocity = {id(p): torch.zeros_like(p) for ps, _ in groups for p in ps}

    lib = AlbedoLibrary(
        np.clip(_initial_library(ref_bundle, albedo, n_labels), 0.0, 1.0),
        update_period=config.update_period,
        ema_decay=config.ema_decay,
    )

    def render_view(b: _ViewBundle):
        alb = sample_uv_torch(albedo, b.uv)
        lam_x = torch.exp(r_s[b.label] + sample_uv_torch(off_r[..., None], b.uv)[..., 0])
        mu_x = torch.clamp(s_s[b.label] + sample_uv_torch(off_s, b.uv), 0.0, 1.0)
        ax = axes_raw / torch.linalg.norm(axes_raw, dim=1, keepdim=True)
        out = shade_closed_form(
            b.normal, b.view, alb, lam_x, mu_x, ax, torch.exp(log_lam),
            torch.nn.functional.softplus(amp_raw),
        )
        return torch.clamp_min(out, 0.0), alb

    trace = []
    for it in range(config.iterations):
        data_t = torch.zeros((), dtype=torch.float64)
        la_t = torch.zeros((), dtype=torch.float64)
        ref_t = torch.zeros((), dtype=torch.float64)
        for b in bundles:
            shaded, alb = render_view(b)
            data_t = data_t + ((shaded - b.target) ** 2).mean()
            if config.w_a > 0 and b.coeffs is not None:
                means = b.coeffs @ alb  # (n_present, 3)
                anchors = torch.from_numpy(lib.a_s[b.present])
                la_t = la_t + ((means - anchors) ** 2).sum()
            if b is ref_bundle and b.ref_albedo is not None and config.w_ref > 0:
                ref_t = ref_t + ((alb - b.ref_albedo) ** 2).mean()
        off_t = (off_r ** 2).sum() + (off_s ** 2).sum()
        total = data_t + config.w_a * la_t + config.w_ref * ref_t + config.w_off * off_t
        if not torch.isfinite(total):
            raise DivergenceError(it)
        trace.append(
            (it, data_t.item(), la_t.item(), ref_t.item(), off_t.item(), total.item())
        )

        for ps, _ in groups:
            for p in ps:
                if p.grad is not None:
                    p.grad.zero_()
        total.backward()
        with torch.no_grad():
            for ps, lr in groups:
                for p in ps:
                    if p.grad is None:
                        continue
                    v = velocity[id(p)]
                    v.mul_(config.momentum).add_(p.grad)
                    p.add_(v, alpha=-lr)
            albedo.clamp_(0.0, 1.0)
            s_s.clamp_(0.0, 1.0)

        if (it + 1) % lib.update_period == 0:
            with torch.no_grad():
                alb_img = sample_uv_torch(albedo, ref_bundle.uv).numpy()
            lib = update_albedo_library(lib, _scatter(ref_bundle, alb_img), ref_bundle.reg_labels)

    with torch.no_grad():
        table = SemanticMaterialTable(r_s.numpy().copy(), np.clip(s_s.numpy(), 0.0, 1.0))
        fitted = MaterialModel(
            np.clip(albedo.numpy(), 0.0, 1.0),
            table,
            off_r.detach().numpy().copy(),
            off_s.detach().numpy().copy(),
            model.label_atlas.copy(),
        )
        mix = _mixture_from_raw(axes_raw.numpy(), log_lam.numpy(), amp_raw.numpy())
    return fitted, mix, trace


def _scatter(bundle: _ViewBundle, values: np.ndarray) -> np.ndarray:
    img = np.zeros(bundle.hit.shape + (values.shape[-1],))
    img[bundle.hit] = values
    return img


def _initial_library(bundle: _ViewBundle, albedo: torch.Tensor, n_labels: int) -> np.ndarray:
    """Region averages of the starting albedo; labels invisible from the
    reference view start at mid grey."""
    with torch.no_grad():
        alb = sample_uv_torch(albedo, bundle.uv).numpy()
    img = _scatter(bundle, alb)
    out = np.full((n_labels, 3), 0.5)
    lab = bundle.reg_labels.labels
    for i in bundle.present:
        out[i] = img[lab == i].mean(axis=0)
    return out
