"""Spherical Gaussian algebra against quadrature and direct-evaluation oracles."""

from __future__ import annotations

import numpy as np
import pytest

from sgtex.errors import ContractViolation, DegenerateLobeError
from sgtex.sg import (
    SGMixture,
    SphericalGaussian,
    dump_mixture,
    eval_mixture,
    eval_sg,
    latlong_directions,
    latlong_solid_angles,
    mixture_to_latlong,
    parse_mixture,
    sg_inner_product,
    sg_integral,
    sg_product,
)


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def rand_unit(rng):
    return unit(rng.normal(size=3))


def eval_batch(g, dirs):
    # definitional formula, vectorized over rows of dirs
    dirs = np.asarray(dirs, dtype=np.float64)
    return g.amplitude[None, :] * np.exp(g.sharpness * (dirs @ g.axis - 1.0))[:, None]


def sphere_quadrature(fn, n_theta=400, n_phi=800):
    """Midpoint-rule integral of fn(directions) over the sphere."""
    theta = (np.arange(n_theta) + 0.5) / n_theta * np.pi
    phi = (np.arange(n_phi) + 0.5) / n_phi * 2.0 * np.pi
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    dirs = np.stack(
        [np.sin(tt) * np.cos(pp), np.cos(tt), np.sin(tt) * np.sin(pp)], axis=-1
    )
    dw = np.sin(tt) * (np.pi / n_theta) * (2.0 * np.pi / n_phi)
    vals = fn(dirs.reshape(-1, 3)).reshape(tt.shape + (-1,))
    return (vals * dw[..., None]).sum(axis=(0, 1))


class TestEval:
    def test_peak_value_is_amplitude(self):
        g = SphericalGaussian([0.0, 0.0, 1.0], 12.0, [2.5])
        assert np.allclose(eval_sg(g, [0.0, 0.0, 1.0]), 2.5)

    def test_closed_form_formula(self):
        rng = np.random.default_rng(3)
        g = SphericalGaussian(rand_unit(rng), 7.0, [1.1, 0.6, 0.2])
        nu = rand_unit(rng)
        expected = np.array([1.1, 0.6, 0.2]) * np.exp(7.0 * (nu @ g.axis - 1.0))
        assert np.allclose(eval_sg(g, nu), expected, rtol=1e-15)

    def test_non_unit_direction_rejected(self):
        g = SphericalGaussian([0.0, 0.0, 1.0], 1.0, [1.0])
        with pytest.raises(ContractViolation):
            eval_sg(g, [0.0, 0.0, 1.5])

    def test_lobe_validation(self):
        with pytest.raises(ContractViolation):
            SphericalGaussian([0.0, 0.0, 2.0], 1.0, [1.0])
        with pytest.raises(ContractViolation):
            SphericalGaussian([0.0, 0.0, 1.0], 0.0, [1.0])
        with pytest.raises(ContractViolation):
            SphericalGaussian([0.0, 0.0, 1.0], 1.0, [-0.1])
        with pytest.raises(ContractViolation):
            SphericalGaussian([0.0, 0.0, 1.0], 1.0, [1.0, 2.0])  # 2 channels


class TestProduct:
    def test_pointwise_exactness_random(self):
        # the product lobe must evaluate to the product of evaluations
        rng = np.random.default_rng(11)
        for _ in range(50):
            a = SphericalGaussian(rand_unit(rng), rng.uniform(0.1, 80), rng.uniform(0.1, 3, 3))
            b = SphericalGaussian(rand_unit(rng), rng.uniform(0.1, 80), rng.uniform(0.1, 3, 3))
            p = sg_product(a, b)
            for _ in range(10):
                nu = rand_unit(rng)
                want = eval_sg(a, nu) * eval_sg(b, nu)
                got = eval_sg(p, nu)
                assert np.all(np.abs(got - want) <= 1e-10 * np.maximum(np.abs(want), 1e-30))

    def test_antipodal_equal_sharpness_degenerates(self):
        a = SphericalGaussian([0.0, 0.0, 1.0], 5.0, [2.0])
        b = SphericalGaussian([0.0, 0.0, -1.0], 5.0, [3.0])
        with pytest.raises(DegenerateLobeError) as exc:
            sg_product(a, b)
        # the constant is the true pointwise product everywhere
        want = 2.0 * 3.0 * np.exp(-5.0 - 5.0)
        assert np.allclose(exc.value.constant, want)

    def test_channel_broadcast(self):
        a = SphericalGaussian([0.0, 1.0, 0.0], 2.0, [2.0])
        b = SphericalGaussian([1.0, 0.0, 0.0], 3.0, [0.5, 1.0, 1.5])
        p = sg_product(a, b)
        assert p.amplitude.shape == (3,)


class TestIntegral:
    def test_closed_form_vs_quadrature_sweep(self):
        # rotational symmetry about the axis reduces the sphere integral to
        # 2*pi * int_{-1}^{1} mu*exp(lam*(u-1)) du; adaptive 1d quadrature
        # stays sharp even for very narrow lobes
        from scipy.integrate import quad

        for lam in (0.01, 0.1, 1.0, 5.0, 50.0, 200.0, 500.0):
            g = SphericalGaussian([0.0, 1.0, 0.0], lam, [1.3])
            got = float(sg_integral(g)[0])
            ref = 2.0 * np.pi * quad(
                lambda u: 1.3 * np.exp(lam * (u - 1.0)), -1.0, 1.0,
                epsabs=1e-14, epsrel=1e-12,
            )[0]
            assert abs(got - ref) / abs(ref) < 1e-3, lam

    def test_small_sharpness_limit(self):
        # lam -> 0 approaches a constant function with integral 4 pi mu
        g = SphericalGaussian([1.0, 0.0, 0.0], 1e-6, [2.0])
        assert np.allclose(sg_integral(g), 4.0 * np.pi * 2.0, rtol=1e-5)

    def test_inner_product_vs_quadrature(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            a = SphericalGaussian(rand_unit(rng), rng.uniform(0.5, 30), rng.uniform(0.2, 2, 3))
            b = SphericalGaussian(rand_unit(rng), rng.uniform(0.5, 30), rng.uniform(0.2, 2, 3))
            got = sg_inner_product(a, b)
            ref = sphere_quadrature(lambda d: eval_batch(a, d) * eval_batch(b, d))
            assert np.allclose(got, ref, rtol=2e-3)

    def test_inner_product_degenerate_is_constant_times_area(self):
        a = SphericalGaussian([0.0, 0.0, 1.0], 4.0, [1.0])
        b = SphericalGaussian([0.0, 0.0, -1.0], 4.0, [1.0])
        got = sg_inner_product(a, b)
        const = np.exp(-8.0)
        assert np.allclose(got, const * 4.0 * np.pi, rtol=1e-12)
        ref = sphere_quadrature(lambda d: eval_batch(a, d) * eval_batch(b, d))
        assert np.allclose(got, ref, rtol=1e-3)


class TestMixture:
    def test_empty_mixture_rejected(self):
        with pytest.raises(ContractViolation):
            SGMixture(())

    def test_eval_mixture_sums_lobes(self):
        rng = np.random.default_rng(5)
        lobes = tuple(
            SphericalGaussian(rand_unit(rng), rng.uniform(1, 20), rng.uniform(0.1, 1, 3))
            for _ in range(4)
        )
        mix = SGMixture(lobes)
        nu = rand_unit(rng)
        want = sum(eval_sg(l, nu) for l in lobes)
        assert np.allclose(eval_mixture(mix, nu), want, rtol=1e-14)

    def test_serialization_round_trip(self):
        rng = np.random.default_rng(9)
        lobes = tuple(
            SphericalGaussian(rand_unit(rng), rng.uniform(0.3, 300), rng.uniform(0, 4, 3))
            for _ in range(5)
        )
        mix = SGMixture(lobes)
        back = parse_mixture(dump_mixture(mix))
        for l1, l2 in zip(mix.lobes, back.lobes):
            assert np.array_equal(l1.axis, l2.axis)
            assert l1.sharpness == l2.sharpness
            assert np.array_equal(l1.amplitude, l2.amplitude)

    def test_parse_rejects_garbage(self):
        with pytest.raises(ContractViolation):
            parse_mixture("not a header\n1 0 0 1 1 1 1")


class TestLatLong:
    def test_solid_angles_sum_to_sphere(self):
        w = latlong_solid_angles(17, 31)
        assert np.allclose(w.sum(), 4.0 * np.pi, rtol=1e-12)

    def test_directions_are_unit_and_pole_aligned(self):
        d = latlong_directions(8, 16)
        assert np.allclose(np.linalg.norm(d, axis=-1), 1.0)
        assert d[0, 0, 1] > 0.9  # first row near +y pole

    def test_rasterize_matches_eval(self):
        g = SphericalGaussian([0.0, 1.0, 0.0], 3.0, [1.0, 2.0, 0.5])
        mix = SGMixture((g,))
        img = mixture_to_latlong(mix, 6, 12)
        dirs = latlong_directions(6, 12)
        for i in range(6):
            for j in range(12):
                want = eval_mixture(mix, dirs[i, j])
                assert np.allclose(img[i, j], want, rtol=1e-14)
