"""Chamfer distances, surface sampling, ICP, and PSNR."""

from __future__ import annotations

import numpy as np
import pytest

from sgtex.errors import ContractViolation, EmptyCloudError, ResolutionMismatchError
from sgtex.fixtures import sphere_scene
from sgtex.metrics import (
    PointCloud,
    chamfer_full,
    chamfer_partial,
    icp_align,
    psnr,
    sample_mesh_surface,
)
from sgtex.mesh import triangle_areas


def brute_force_chamfer(a: np.ndarray, b: np.ndarray):
    """Plain double-loop squared-NN means, (a->b, b->a)."""
    def one_way(src, dst):
        total = 0.0
        for p in src:
            best = min(float(((p - q) ** 2).sum()) for q in dst)
            total += best
        return total / len(src)
    return one_way(a, b), one_way(b, a)


class TestChamfer:
    def test_hand_example(self):
        a = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        b = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 0.0]])
        # a->b: 0 and 1 (to (1,1,0) both are 1; to origin 1) -> mean 0.5
        # b->a: 0 and 1 -> mean 0.5
        assert chamfer_full(a, b) == pytest.approx(1.0, abs=1e-12)
        assert chamfer_partial(a, b) == pytest.approx(0.5, abs=1e-12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(81)
        a = rng.normal(size=(500, 3))
        b = rng.normal(size=(400, 3))
        ab, ba = brute_force_chamfer(a, b)
        assert chamfer_full(a, b) == pytest.approx(ab + ba, rel=1e-12)
        assert chamfer_partial(a, b) == pytest.approx(ab, rel=1e-12)
        assert chamfer_partial(b, a) == pytest.approx(ba, rel=1e-12)

    def test_symmetry_and_identity(self):
        rng = np.random.default_rng(82)
        a = rng.normal(size=(100, 3))
        b = rng.normal(size=(120, 3))
        assert chamfer_full(a, b) == pytest.approx(chamfer_full(b, a), rel=1e-12)
        assert chamfer_full(a, a) == 0.0
        assert chamfer_partial(a, a) == 0.0

    def test_partial_at_most_full(self):
        rng = np.random.default_rng(83)
        for _ in range(5):
            a = rng.normal(size=(50, 3))
            b = rng.normal(size=(60, 3))
            assert chamfer_partial(a, b) <= chamfer_full(a, b)

    def test_partial_ignores_extra_pred_points(self):
        # pred = gt plus far-away extras: gt is still perfectly covered
        gt = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        pred = np.vstack([gt, [[50.0, 0.0, 0.0]]])
        assert chamfer_partial(gt, pred) == 0.0
        assert chamfer_full(gt, pred) > 100.0

    def test_point_cloud_type_accepted(self):
        a = PointCloud(np.array([[0.0, 0.0, 0.0]]))
        b = PointCloud(np.array([[0.0, 3.0, 4.0]]))
        assert chamfer_full(a, b) == pytest.approx(50.0)

    def test_empty_rejected(self):
        with pytest.raises(EmptyCloudError):
            chamfer_full(np.zeros((0, 3)), np.zeros((1, 3)))
        with pytest.raises(EmptyCloudError):
            PointCloud(np.zeros((0, 3)))


class TestSurfaceSampling:
    def test_deterministic_per_seed(self):
        scene = sphere_scene(texture_size=8, grid=(6, 12))
        a = sample_mesh_surface(scene, 200, seed=3)
        b = sample_mesh_surface(scene, 200, seed=3)
        c = sample_mesh_surface(scene, 200, seed=4)
        assert np.array_equal(a.points, b.points)
        assert not np.array_equal(a.points, c.points)

    def test_points_on_surface(self):
        scene = sphere_scene(texture_size=8, grid=(16, 32))
        pts = sample_mesh_surface(scene, 500, seed=1).points
        r = np.linalg.norm(pts, axis=1)
        # chords of a fine unit sphere stay just inside radius 1
        assert (r <= 1.0 + 1e-9).all()
        assert (r > 0.97).all()

    def test_area_weighting_binomial(self):
        # two triangles with areas 1 and 3: expect 3/4 of samples on the big one
        verts = np.array([
            [0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 1.0, 0.0],
            [10.0, 0.0, 0.0], [16.0, 0.0, 0.0], [10.0, 1.0, 0.0],
        ])
        faces = np.array([[0, 1, 2], [3, 4, 5]])
        from sgtex.mesh import Scene
        normals = np.tile([0.0, 0.0, 1.0], (6, 1))
        scene = Scene(verts, faces, normals, np.full((6, 2), 0.5), material=None)
        areas = triangle_areas(verts, faces)
        assert areas.tolist() == [1.0, 3.0]
        n = 4000
        pts = sample_mesh_surface(scene, n, seed=9).points
        frac_big = float((pts[:, 0] >= 9.0).mean())
        sigma = np.sqrt(0.75 * 0.25 / n)
        assert abs(frac_big - 0.75) < 3 * sigma

    def test_samples_inside_triangle(self):
        verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        faces = np.array([[0, 1, 2]])
        from sgtex.mesh import Scene
        normals = np.tile([0.0, 0.0, 1.0], (3, 1))
        scene = Scene(verts, faces, normals, np.full((3, 2), 0.5), material=None)
        pts = sample_mesh_surface(scene, 300, seed=2).points
        assert np.allclose(pts[:, 2], 0.0)
        assert (pts[:, 0] >= -1e-12).all() and (pts[:, 1] >= -1e-12).all()
        assert (pts[:, 0] + pts[:, 1] <= 1.0 + 1e-12).all()

    def test_validation(self):
        scene = sphere_scene(texture_size=8, grid=(6, 12))
        with pytest.raises(ContractViolation):
            sample_mesh_surface(scene, 0)


class TestICP:
    def test_recovers_rigid_offset(self):
        rng = np.random.default_rng(84)
        gt = rng.normal(size=(300, 3))
        pred = gt + np.array([0.05, -0.03, 0.02])
        moved = icp_align(pred, gt, iterations=30)
        assert chamfer_full(moved, gt) < 1e-6

    def test_recovers_small_rotation_and_scale(self):
        rng = np.random.default_rng(85)
        gt = rng.normal(size=(400, 3))
        th = 0.08
        rot = np.array([[np.cos(th), -np.sin(th), 0.0],
                        [np.sin(th), np.cos(th), 0.0],
                        [0.0, 0.0, 1.0]])
        pred = 1.1 * gt @ rot.T + 0.02
        moved = icp_align(pred, gt, iterations=50)
        assert chamfer_full(moved, gt) < 1e-4

    def test_identity_is_fixed_point(self):
        rng = np.random.default_rng(86)
        gt = rng.normal(size=(100, 3))
        moved = icp_align(gt, gt, iterations=5)
        assert np.allclose(moved, gt, atol=1e-10)


class TestPSNR:
    def test_known_value(self):
        a = np.zeros((4, 4))
        b = np.full((4, 4), 0.1)  # mse = 0.01 -> 20 dB
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-12)

    def test_equal_images_infinite(self):
        a = np.random.default_rng(87).random((5, 5, 3))
        assert psnr(a, a) == np.inf

    def test_shape_mismatch(self):
        with pytest.raises(ResolutionMismatchError):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))

    def test_monotone_in_noise(self):
        rng = np.random.default_rng(88)
        a = rng.random((16, 16, 3))
        small = psnr(a, np.clip(a + 0.01, 0, 1))
        large = psnr(a, np.clip(a + 0.1, 0, 1))
        assert small > large
