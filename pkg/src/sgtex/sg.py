"""Spherical Gaussian value types and closed-form algebra.

A spherical Gaussian (SG) is the function on the unit sphere

    G(v) = amplitude * exp(sharpness * (v . axis - 1)),

closed under pointwise products and with an analytic full-sphere integral.
Environment maps are mixtures of SGs. Everything here is an immutable value;
all operations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, DegenerateLobeError

Array = np.ndarray

AXIS_UNIT_TOL = 1e-9
EVAL_UNIT_TOL = 1e-6

# Sharpness below this is treated as an exactly-cancelled product lobe.
_DEGENERATE_SHARPNESS = 1e-12


def _as_unit(v, tol: float, what: str) -> Array:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (3,):
        raise ContractViolation(f"{what} must be a 3-vector, got shape {v.shape}")
    n = float(np.linalg.norm(v))
    if abs(n - 1.0) > tol:
        raise ContractViolation(f"{what} must be unit length (|v| = {n:.12g})")
    return v / n


def _as_amplitude(mu) -> Array:
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    if mu.shape not in ((1,), (3,)):
        raise ContractViolation(
            f"amplitude must have 1 or 3 channels, got shape {mu.shape}"
        )
    if np.any(mu < 0.0):
        raise ContractViolation("amplitude must be non-negative in every channel")
    return mu


@dataclass(frozen=True)
class SphericalGaussian:
    """One SG lobe: unit axis, positive sharpness, non-negative amplitude.

    ``amplitude`` is per channel, shape (1,) for scalar lobes or (3,) for RGB.
    """

    axis: Array
    sharpness: float
    amplitude: Array

    def __post_init__(self):
        object.__setattr__(self, "axis", _as_unit(self.axis, AXIS_UNIT_TOL, "axis"))
        lam = float(self.sharpness)
        if not np.isfinite(lam) or lam <= 0.0:
            raise ContractViolation(f"sharpness must be positive, got {lam}")
        object.__setattr__(self, "sharpness", lam)
        object.__setattr__(self, "amplitude", _as_amplitude(self.amplitude))

    @property
    def channels(self) -> int:
        return self.amplitude.shape[0]


@dataclass(frozen=True)
class SGMixture:
    """Ordered list of SG lobes with a common channel count."""

    lobes: tuple[SphericalGaussian, ...] = field(default_factory=tuple)

    def __post_init__(self):
        lobes = tuple(self.lobes)
        if len(lobes) < 1:
            raise ContractViolation("mixture needs at least one lobe")
        ch = lobes[0].channels
        if any(l.channels != ch for l in lobes):
            raise ContractViolation("all mixture lobes must share a channel count")
        object.__setattr__(self, "lobes", lobes)

    @property
    def channels(self) -> int:
        return self.lobes[0].channels

    def __len__(self) -> int:
        return len(self.lobes)


def eval_sg(sg: SphericalGaussian, nu) -> Array:
    """Evaluate one lobe at unit direction ``nu``; per-channel, in (0, amplitude]."""
    nu = _as_unit(nu, EVAL_UNIT_TOL, "direction")
    return sg.amplitude * np.exp(sg.sharpness * (float(nu @ sg.axis) - 1.0))


def _broadcast_amplitudes(a: Array, b: Array) -> tuple[Array, Array]:
    if a.shape == b.shape:
        return a, b
    # 1-channel lobes replicate against 3-channel ones (scalar cosine lobe
    # times RGB light).
    if a.shape == (1,):
        return np.repeat(a, 3), b
    if b.shape == (1,):
        return a, np.repeat(b, 3)
    raise ContractViolation(f"incompatible channel counts {a.shape} vs {b.shape}")


def sg_product(a: SphericalGaussian, b: SphericalGaussian) -> SphericalGaussian:
    """Pointwise product of two lobes, itself an SG.

    eval(result, v) == eval(a, v) * eval(b, v) for every unit v. Raises
    DegenerateLobeError when the axes cancel exactly (antipodal, equal
    sharpness); the product is then the constant carried on the error.
    """
    mu_a, mu_b = _broadcast_amplitudes(a.amplitude, b.amplitude)
    d = a.sharpness * a.axis + b.sharpness * b.axis
    lam = float(np.linalg.norm(d))
    if lam < _DEGENERATE_SHARPNESS:
        raise DegenerateLobeError(mu_a * mu_b * np.exp(-a.sharpness - b.sharpness))
    # exponent lam - lam_a - lam_b <= 0, so the exp never overflows
    mu = mu_a * mu_b * np.exp(lam - a.sharpness - b.sharpness)
    return SphericalGaussian(d / lam, lam, mu)


def sg_integral(sg: SphericalGaussian) -> Array:
    """Full-sphere integral, closed form: 2*pi*mu*(1 - exp(-2*lambda))/lambda."""
    lam = sg.sharpness
    return 2.0 * np.pi * sg.amplitude * (1.0 - np.exp(-2.0 * lam)) / lam


def sg_inner_product(a: SphericalGaussian, b: SphericalGaussian) -> Array:
    """Integral of the pointwise product over the sphere.

    The degenerate antipodal case integrates the constant over 4*pi steradians.
    """
    try:
        return sg_integral(sg_product(a, b))
    except DegenerateLobeError as deg:
        return deg.constant * 4.0 * np.pi


def eval_mixture(env: SGMixture, omega) -> Array:
    """Sum of lobe evaluations at unit direction ``omega``."""
    omega = _as_unit(omega, EVAL_UNIT_TOL, "direction")
    out = np.zeros(env.channels, dtype=np.float64)
    for lobe in env.lobes:
        out += lobe.amplitude * np.exp(
            lobe.sharpness * (float(omega @ lobe.axis) - 1.0)
        )
    return out


# ---------------------------------------------------------------------------
# lat-long rasterization (the inverse fit lives in optimize.fit_env_map)
# ---------------------------------------------------------------------------

def latlong_directions(height: int, width: int) -> Array:
    """Unit directions for every texel of an equirectangular map, (H, W, 3).

    Row 0 is the +y pole (theta = 0), columns sweep azimuth left to right.
    """
    theta = (np.arange(height) + 0.5) / height * np.pi
    phi = (np.arange(width) + 0.5) / width * 2.0 * np.pi - np.pi
    t, p = np.meshgrid(theta, phi, indexing="ij")
    return np.stack(
        [np.sin(t) * np.cos(p), np.cos(t), np.sin(t) * np.sin(p)], axis=-1
    )


def latlong_solid_angles(height: int, width: int) -> Array:
    """Per-texel solid angle of the lat-long grid, (H, W); sums to 4*pi."""
    edges = np.arange(height + 1) / height * np.pi
    band = np.cos(edges[:-1]) - np.cos(edges[1:])
    w = band * (2.0 * np.pi / width)
    return np.repeat(w[:, None], width, axis=1)


def mixture_to_latlong(env: SGMixture, height: int, width: int) -> Array:
    """Rasterize a mixture to a lat-long radiance image, (H, W, 3) float."""
    dirs = latlong_directions(height, width).reshape(-1, 3)
    out = np.zeros((dirs.shape[0], 3), dtype=np.float64)
    for lobe in env.lobes:
        amp = lobe.amplitude if lobe.channels == 3 else np.repeat(lobe.amplitude, 3)
        out += amp[None, :] * np.exp(
            lobe.sharpness * (dirs @ lobe.axis - 1.0)
        )[:, None]
    return out.reshape(height, width, 3)


# ---------------------------------------------------------------------------
# text serialization: header "SGMIX v1", one lobe per line
# ---------------------------------------------------------------------------

SGMIX_HEADER = "SGMIX v1"


def dump_mixture(env: SGMixture) -> str:
    lines = [SGMIX_HEADER]
    for lobe in env.lobes:
        amp = lobe.amplitude if lobe.channels == 3 else np.repeat(lobe.amplitude, 3)
        x, y, z = lobe.axis
        lines.append(
            f"{x:.17g} {y:.17g} {z:.17g} {lobe.sharpness:.17g} "
            f"{amp[0]:.17g} {amp[1]:.17g} {amp[2]:.17g}"
        )
    return "\n".join(lines) + "\n"


def parse_mixture(text: str) -> SGMixture:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != SGMIX_HEADER:
        raise ContractViolation(f"expected '{SGMIX_HEADER}' header")
    lobes = []
    for ln in lines[1:]:
        vals = [float(tok) for tok in ln.split()]
        if len(vals) != 7:
            raise ContractViolation(f"lobe line needs 7 fields, got {len(vals)}")
        lobes.append(SphericalGaussian(vals[0:3], vals[3], vals[4:7]))
    return SGMixture(tuple(lobes))


def save_mixture(env: SGMixture, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_mixture(env))


def load_mixture(path) -> SGMixture:
    with open(path) as fh:
        return parse_mixture(fh.read())
