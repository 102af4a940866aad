"""Deterministic synthetic scenes for tests, demos, and CLI fixtures."""

from __future__ import annotations

import math

import numpy as np

from .material import MaterialModel, SemanticMaterialTable
from .mesh import Camera, Scene
from .sg import SGMixture, SphericalGaussian


def uv_sphere(n_lat: int = 16, n_lon: int = 32):
    """Unit sphere with an explicit seam column (u=0 and u=1 duplicated).

    Returns (vertices, faces, normals, uvs); v runs pole-to-pole so the
    texture's rows are latitude bands.
    """
    if n_lat < 3 or n_lon < 3:
        raise ValueError("sphere grid too coarse")
    ii, jj = np.meshgrid(np.arange(n_lat + 1), np.arange(n_lon + 1), indexing="ij")
    v = ii / n_lat
    u = jj / n_lon
    theta = v * math.pi
    phi = u * 2.0 * math.pi
    x = np.sin(theta) * np.cos(phi)
    z = np.sin(theta) * np.sin(phi)
    y = np.cos(theta)
    verts = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    uvs = np.stack([u, v], axis=-1).reshape(-1, 2)

    def vid(i, j):
        return i * (n_lon + 1) + j

    faces = []
    for i in range(n_lat):
        for j in range(n_lon):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            if i > 0:               # top row quads collapse at the pole
                faces.append((a, d, c))
            if i < n_lat - 1:       # bottom row likewise
                faces.append((a, c, b))
    faces = np.asarray(faces, dtype=np.int64)

    # the collapsed pole quads leave two seam-corner vertices unreferenced;
    # drop them so every vertex participates in the mesh
    used = np.zeros(len(verts), dtype=bool)
    used[faces.reshape(-1)] = True
    remap = np.cumsum(used) - 1
    verts, uvs = verts[used], uvs[used]
    faces = remap[faces]

    normals = verts / np.linalg.norm(verts, axis=1, keepdims=True)
    return verts, faces, normals, uvs


def three_band_atlas(height: int, width: int) -> np.ndarray:
    """Three latitude-band labels over the sphere's texture domain."""
    rows = (np.arange(height) + 0.5) / height
    band = np.minimum((rows * 3).astype(np.int64), 2)
    return np.repeat(band[:, None], width, axis=1)


def texel_positions(height: int, width: int) -> np.ndarray:
    """Sphere surface position at each texel center of the uv_sphere mapping."""
    v = (np.arange(height) + 0.5) / height
    u = (np.arange(width) + 0.5) / width
    uu, vv = np.meshgrid(u, v)
    theta = vv * math.pi
    phi = uu * 2.0 * math.pi
    return np.stack(
        [np.sin(theta) * np.cos(phi), np.cos(theta), np.sin(theta) * np.sin(phi)],
        axis=-1,
    )


BAND_ALBEDO = np.array([[0.80, 0.25, 0.20], [0.20, 0.75, 0.30], [0.25, 0.30, 0.80]])
BAND_ROUGHNESS_LOG = np.log(np.array([60.0, 120.0, 220.0]))
BAND_SPECULAR = np.array([[0.40, 0.40, 0.40], [0.25, 0.25, 0.25], [0.55, 0.55, 0.55]])


def _lobe(axis, sharpness, amplitude) -> SphericalGaussian:
    axis = np.asarray(axis, dtype=np.float64)
    return SphericalGaussian(axis / np.linalg.norm(axis), sharpness, amplitude)


def default_environment() -> SGMixture:
    return SGMixture(
        (
            _lobe([0.30, 0.90, 0.20], 4.0, [1.6, 1.5, 1.3]),
            _lobe([-0.60, 0.40, 0.60], 9.0, [0.9, 1.0, 1.2]),
            _lobe([0.50, 0.10, -0.85], 25.0, [1.1, 0.8, 0.6]),
        )
    )


def banded_material(texture_size: int = 64) -> MaterialModel:
    h = w = texture_size
    atlas = three_band_atlas(h, w)
    albedo = BAND_ALBEDO[atlas]
    table = SemanticMaterialTable(BAND_ROUGHNESS_LOG.copy(), BAND_SPECULAR.copy())
    return MaterialModel(albedo, table, np.zeros((h, w)), np.zeros((h, w, 3)), atlas)


def sphere_scene(texture_size: int = 64, grid=(16, 32), with_material: bool = True) -> Scene:
    """The canonical test scene: banded unit sphere under a 3-lobe environment."""
    verts, faces, normals, uvs = uv_sphere(*grid)
    material = banded_material(texture_size) if with_material else None
    env = default_environment() if with_material else None
    return Scene(verts, faces, normals, uvs, material=material, environment=env)


def orbit_camera(yaw_deg: float, pitch_deg: float = 15.0, radius: float = 3.0,
                 resolution=(64, 64), fov_deg: float = 45.0) -> Camera:
    yaw = math.radians(yaw_deg)
    pitch = math.radians(pitch_deg)
    pos = np.array(
        [
            radius * math.cos(pitch) * math.cos(yaw),
            radius * math.sin(pitch),
            radius * math.cos(pitch) * math.sin(yaw),
        ]
    )
    return Camera(pos, np.zeros(3), np.array([0.0, 1.0, 0.0]), fov_deg, tuple(resolution))


def orbit_cameras(n: int, pitch_deg: float = 15.0, radius: float = 3.0,
                  resolution=(64, 64), fov_deg: float = 45.0):
    return [orbit_camera(360.0 * k / n, pitch_deg, radius, resolution, fov_deg)
            for k in range(n)]
