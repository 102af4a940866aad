from __future__ import annotations

import numpy as np
import pytest

from sgtex.fixtures import orbit_camera, orbit_cameras, sphere_scene


@pytest.fixture(scope="session")
def small_scene():
    """Shared read-only sphere scene; tests that mutate must build their own."""
    return sphere_scene(texture_size=32, grid=(12, 24))


@pytest.fixture(scope="session")
def small_camera():
    return orbit_camera(0.0, resolution=(48, 48))


def random_unit(rng, n=None):
    shape = (3,) if n is None else (n, 3)
    v = rng.normal(size=shape)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)
