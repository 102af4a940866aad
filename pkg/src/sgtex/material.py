"""SVBRDF model: diffuse albedo texture plus semantic specular tables.

Reflectance at a surface point is f_r = a/pi + f_s where f_s is a single
spherical Gaussian over half vectors. Roughness (as log SG sharpness) and
specular amplitude live in small per-semantic-label tables, refined by
per-texel offset textures; the diffuse albedo is a full UV texture.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BackFaceError,
    ContractViolation,
    EmptyRegionError,
    UnknownLabelError,
)
from .sg import SphericalGaussian, _as_unit
from .texture import sample_uv

Array = np.ndarray

# Single-lobe approximation of the clamped cosine about n:
#   clamp(omega.n, 0) ~= COS_AMPLITUDE * exp(COS_SHARPNESS*(omega.n - 1)) + COS_OFFSET
# valid on the upper hemisphere (sup-norm error < 0.02 there).
COS_SHARPNESS = 0.0315
COS_AMPLITUDE = 32.7080
COS_OFFSET = -31.7003

_NORMAL_TOL = 1e-6


def cosine_sg(n) -> tuple[SphericalGaussian, float]:
    """Clamped-cosine lobe about unit normal ``n`` plus its constant offset."""
    return (
        SphericalGaussian(n, COS_SHARPNESS, np.array([COS_AMPLITUDE])),
        COS_OFFSET,
    )


@dataclass(frozen=True)
class SemanticMaterialTable:
    """Per-label reflectance rows.

    roughness_log: (N_s,) log of SG specular sharpness (one scalar per label,
    shared across color channels). specular: (N_s, 3) amplitude in [0, 1].
    """

    roughness_log: Array
    specular: Array

    def __post_init__(self):
        r = np.asarray(self.roughness_log, dtype=np.float64)
        s = np.asarray(self.specular, dtype=np.float64)
        if r.ndim != 1:
            raise ContractViolation(f"roughness_log must be (N_s,), got {r.shape}")
        if not np.all(np.isfinite(r)):
            raise ContractViolation("roughness_log entries must be finite")
        if s.shape != (r.shape[0], 3):
            raise ContractViolation(
                f"specular must be (N_s, 3) matching roughness, got {s.shape}"
            )
        if np.any(s < 0.0) or np.any(s > 1.0):
            raise ContractViolation("specular entries must lie in [0, 1]")
        object.__setattr__(self, "roughness_log", r)
        object.__setattr__(self, "specular", s)

    @property
    def label_count(self) -> int:
        return self.roughness_log.shape[0]


@dataclass(frozen=True)
class MaterialModel:
    """Full SVBRDF state over one UV atlas.

    albedo: (H, W, 3) in [0, 1]; roughness_offset: (H, W); specular_offset:
    (H, W, 3); label_atlas: (H, W) integer semantic ids (-1 for uncharted).
    All textures share one resolution.
    """

    albedo: Array
    table: SemanticMaterialTable
    roughness_offset: Array
    specular_offset: Array
    label_atlas: Array

    def __post_init__(self):
        a = np.asarray(self.albedo, dtype=np.float64)
        ro = np.asarray(self.roughness_offset, dtype=np.float64)
        so = np.asarray(self.specular_offset, dtype=np.float64)
        la = np.asarray(self.label_atlas)
        if a.ndim != 3 or a.shape[2] != 3:
            raise ContractViolation(f"albedo must be (H, W, 3), got {a.shape}")
        if np.any(a < 0.0) or np.any(a > 1.0):
            raise ContractViolation("albedo must lie in [0, 1]")
        hw = a.shape[:2]
        if ro.shape != hw:
            raise ContractViolation("roughness_offset resolution mismatch")
        if so.shape != hw + (3,):
            raise ContractViolation("specular_offset resolution mismatch")
        if la.shape != hw or not np.issubdtype(la.dtype, np.integer):
            raise ContractViolation("label_atlas must be integer, same resolution")
        if np.any(la >= self.table.label_count):
            raise ContractViolation("label_atlas references label >= N_s")
        object.__setattr__(self, "albedo", a)
        object.__setattr__(self, "roughness_offset", ro)
        object.__setattr__(self, "specular_offset", so)
        object.__setattr__(self, "label_atlas", la.astype(np.int64))

    @property
    def resolution(self) -> tuple[int, int]:
        return self.albedo.shape[0], self.albedo.shape[1]


@dataclass(frozen=True)
class SurfaceSample:
    """One shading point: position, unit normal, uv, semantic label id."""

    position: Array
    normal: Array
    uv: Array
    label: int

    def __post_init__(self):
        object.__setattr__(
            self, "position", np.asarray(self.position, dtype=np.float64)
        )
        object.__setattr__(self, "normal", _as_unit(self.normal, _NORMAL_TOL, "normal"))
        object.__setattr__(self, "uv", np.asarray(self.uv, dtype=np.float64))
        object.__setattr__(self, "label", int(self.label))


def material_at(model: MaterialModel, uv, label: int) -> tuple[Array, float, Array]:
    """Effective (albedo, sharpness lambda_x, specular mu_x) at one uv point.

    albedo is bilinear; lambda_x = exp(R_s[label] + roughness_offset(uv));
    mu_x = clamp(S_s[label] + specular_offset(uv), 0, 1).
    """
    if label < 0 or label >= model.table.label_count:
        raise UnknownLabelError(f"label {label} outside table of size "
                                f"{model.table.label_count}")
    uv = np.asarray(uv, dtype=np.float64)
    albedo = sample_uv(model.albedo, uv)
    lam = float(np.exp(model.table.roughness_log[label]
                       + sample_uv(model.roughness_offset, uv)))
    mu = np.clip(model.table.specular[label]
                 + sample_uv(model.specular_offset, uv), 0.0, 1.0)
    return albedo, lam, mu


def fresnel_shadow(omega_o, n, f0) -> Array:
    """Combined Fresnel and shadowing factor M_x, frozen at the mirror lobe.

    Schlick Fresnel F0 + (1-F0)(1 - n.omega_o)^5 times the implicit Smith
    geometry (n.omega_i)(n.omega_o) with omega_i fixed to the reflection
    r = 2(n.omega_o)n - omega_o; since n.r = n.omega_o that geometry term is
    (n.omega_o)^2. Per channel in [0, 1]; roughness-free by construction.
    """
    n = _as_unit(n, _NORMAL_TOL, "normal")
    omega_o = _as_unit(omega_o, _NORMAL_TOL, "view direction")
    ndv = float(n @ omega_o)
    if ndv <= 0.0:
        raise BackFaceError(f"view below surface (n.v = {ndv:.4g})")
    f0 = np.atleast_1d(np.asarray(f0, dtype=np.float64))
    fresnel = f0 + (1.0 - f0) * (1.0 - ndv) ** 5
    return fresnel * (ndv * ndv)


def specular_sg(omega_o, sample: SurfaceSample, lam_x: float, mu_x) -> SphericalGaussian:
    """Specular term for fixed view, warped into an SG over light directions.

    The half-vector lobe G(h; n, lam_x/(4 h.omega_o), M_x mu_x) pulls back
    through h(omega_i) to a lobe about the mirror direction r with sharpness
    lam_x/(4 n.omega_o); the h.omega_o divisor is frozen at the lobe center
    where h = n.
    """
    n = sample.normal
    omega_o = _as_unit(omega_o, _NORMAL_TOL, "view direction")
    ndv = float(n @ omega_o)
    if ndv <= 0.0:
        raise BackFaceError(f"view below surface (n.v = {ndv:.4g})")
    r = 2.0 * ndv * n - omega_o
    amp = fresnel_shadow(omega_o, n, mu_x) * np.atleast_1d(
        np.asarray(mu_x, dtype=np.float64)
    )
    return SphericalGaussian(r / np.linalg.norm(r), lam_x / (4.0 * ndv), amp)


def brdf_eval(omega_o, omega_i, albedo, lam_x: float, mu_x,
              sample: SurfaceSample) -> Array:
    """Pointwise BRDF f_r(omega_i, omega_o) in true half-vector form.

    Diffuse albedo/pi plus the specular NDF lobe evaluated at the actual half
    vector: M_x mu_x exp(lam_x (h.n - 1)). The 1/(4 h.omega_o) factor of the
    published formula is the half-angle domain-warp Jacobian, which belongs
    to the omega_i-domain lobe (specular_sg), not to this h-domain form. This
    is the reference the Monte Carlo oracle integrates; the warped specular_sg
    is the approximation tested against it.
    """
    n = sample.normal
    omega_o = _as_unit(omega_o, _NORMAL_TOL, "view direction")
    omega_i = _as_unit(omega_i, _NORMAL_TOL, "light direction")
    if float(n @ omega_o) <= 0.0:
        raise BackFaceError("view below surface")
    albedo = np.asarray(albedo, dtype=np.float64)
    mu_x = np.atleast_1d(np.asarray(mu_x, dtype=np.float64))
    h = omega_i + omega_o
    hn = float(np.linalg.norm(h))
    if hn < 1e-12:
        # omega_i exactly opposite omega_o: h undefined, lobe negligibly small
        return albedo / np.pi
    h = h / hn
    amp = fresnel_shadow(omega_o, n, mu_x) * mu_x
    spec = amp * np.exp(lam_x * (float(h @ n) - 1.0))
    return albedo / np.pi + spec


def init_specular_from_derendered(i_spec: Array, labels: Array,
                                  label_count: int) -> Array:
    """Relative specular seed per label from a de-rendered specular image.

    For each label, mean of the top 20 percent of member pixel values minus
    mean of the bottom 20 percent (at least one pixel per tail). Non-negative,
    invariant to constant shifts. Callers normalize by the per-image maximum
    to land in [0, 1].
    """
    i_spec = np.asarray(i_spec, dtype=np.float64)
    labels = np.asarray(labels)
    if i_spec.shape != labels.shape:
        raise ContractViolation("specular image and label map must match")
    out = np.zeros(label_count, dtype=np.float64)
    for lab in range(label_count):
        vals = np.sort(i_spec[labels == lab])
        if vals.size == 0:
            raise EmptyRegionError(f"label {lab} has no pixels")
        k = max(1, int(np.floor(vals.size * 0.2 + 0.5)))
        out[lab] = float(vals[-k:].mean() - vals[:k].mean())
    return out


# ---------------------------------------------------------------------------
# text serialization of the semantic table: header "MTL-SEM v1",
# one row per label: `label R_s S_r S_g S_b`
# ---------------------------------------------------------------------------

MTLSEM_HEADER = "MTL-SEM v1"


def dump_material_table(table: SemanticMaterialTable) -> str:
    lines = [MTLSEM_HEADER]
    for lab in range(table.label_count):
        s = table.specular[lab]
        lines.append(
            f"{lab} {table.roughness_log[lab]:.17g} "
            f"{s[0]:.17g} {s[1]:.17g} {s[2]:.17g}"
        )
    return "\n".join(lines) + "\n"


def parse_material_table(text: str) -> SemanticMaterialTable:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != MTLSEM_HEADER:
        raise ContractViolation(f"expected '{MTLSEM_HEADER}' header")
    rough, spec = {}, {}
    for ln in lines[1:]:
        toks = ln.split()
        if len(toks) != 5:
            raise ContractViolation(f"table row needs 5 fields, got {len(toks)}")
        lab = int(toks[0])
        rough[lab] = float(toks[1])
        spec[lab] = [float(t) for t in toks[2:5]]
    n = len(rough)
    if sorted(rough) != list(range(n)):
        raise ContractViolation("table rows must cover labels 0..N_s-1")
    return SemanticMaterialTable(
        roughness_log=np.array([rough[i] for i in range(n)]),
        specular=np.array([spec[i] for i in range(n)]),
    )


def save_material_table(table: SemanticMaterialTable, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_material_table(table))


def load_material_table(path) -> SemanticMaterialTable:
    with open(path) as fh:
        return parse_material_table(fh.read())
