"""Geometry and image metrics: chamfer distances, surface sampling, PSNR."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ContractViolation, EmptyCloudError, EmptySceneError, ResolutionMismatchError
from .mesh import Scene, triangle_areas


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if pts.shape[0] == 0:
            raise EmptyCloudError("point cloud is empty")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


def _as_points(cloud) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.points
    pts = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise EmptyCloudError("point cloud is empty")
    return pts


def _mean_sq_nn(src: np.ndarray, dst: np.ndarray) -> float:
    d, _ = cKDTree(dst).query(src, k=1)
    return float((d * d).mean())


def chamfer_full(a, b) -> float:
    """Symmetric mean squared nearest-neighbor distance."""
    pa, pb = _as_points(a), _as_points(b)
    return _mean_sq_nn(pa, pb) + _mean_sq_nn(pb, pa)


def chamfer_partial(gt, pred) -> float:
    """One-directional distance: how well pred covers the ground truth."""
    return _mean_sq_nn(_as_points(gt), _as_points(pred))


def sample_mesh_surface(scene: Scene, n: int, seed: int = 0) -> PointCloud:
    """Area-weighted uniform surface samples, deterministic per seed."""
    if n < 1:
        raise ContractViolation("need at least one sample")
    if scene.num_faces == 0:
        raise EmptySceneError("cannot sample an empty mesh")
    rng = np.random.default_rng(seed)
    areas = triangle_areas(scene.vertices, scene.faces)
    probs = areas / areas.sum()
    tris = rng.choice(scene.num_faces, size=n, p=probs)
    r1, r2 = rng.random(n), rng.random(n)
    su = np.sqrt(r1)
    u, v = 1.0 - su, r2 * su
    corners = scene.vertices[scene.faces[tris]]
    pts = (
        corners[:, 0] * u[:, None]
        + corners[:, 1] * v[:, None]
        + corners[:, 2] * (1.0 - u - v)[:, None]
    )
    return PointCloud(pts)


def icp_align(pred, gt, iterations: int = 20):
    """Similarity-transform ICP of pred onto gt; returns the moved points.

    A coarse pre-alignment stand-in for manual placement, not a full
    registration pipeline.
    """
    src = _as_points(pred).copy()
    dst = _as_points(gt)
    tree = cKDTree(dst)
    for _ in range(iterations):
        _, idx = tree.query(src, k=1)
        target = dst[idx]
        mu_s, mu_t = src.mean(axis=0), target.mean(axis=0)
        xs, xt = src - mu_s, target - mu_t
        cov = xt.T @ xs / src.shape[0]
        uu, sv, vt = np.linalg.svd(cov)
        sgn = np.eye(3)
        sgn[2, 2] = np.sign(np.linalg.det(uu @ vt))
        rot = uu @ sgn @ vt
        var = (xs * xs).sum() / src.shape[0]
        scale = (sv * np.diag(sgn)).sum() / max(var, 1e-300)
        src = scale * (xs @ rot.T) + mu_t
    return src


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10 log10(1 / MSE) for [0, 1] images; equal inputs give +inf."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ResolutionMismatchError("psnr inputs must share a shape")
    mse = float(((a - b) ** 2).mean())
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)
