"""Bilinear UV texture sampling and its adjoint splat.

Shared by material lookup, the renderer, and mask projection. Textures are
numpy arrays indexed [row, col] with uv = (u, v), u along columns and v along
rows; texel (i, j) has its center at uv = ((j+0.5)/W, (i+0.5)/H). Out-of-range
uv clamps to the edge texel (wrap mode: clamp).
"""

from __future__ import annotations

import numpy as np

Array = np.ndarray


def _bilinear_setup(shape, uv):
    h, w = shape[0], shape[1]
    uv = np.asarray(uv, dtype=np.float64)
    u = uv[..., 0] * w - 0.5
    v = uv[..., 1] * h - 0.5
    u = np.clip(u, 0.0, w - 1.0)
    v = np.clip(v, 0.0, h - 1.0)
    j0 = np.floor(u).astype(np.int64)
    i0 = np.floor(v).astype(np.int64)
    j1 = np.minimum(j0 + 1, w - 1)
    i1 = np.minimum(i0 + 1, h - 1)
    fu = u - j0
    fv = v - i0
    w00 = (1.0 - fu) * (1.0 - fv)
    w01 = fu * (1.0 - fv)
    w10 = (1.0 - fu) * fv
    w11 = fu * fv
    return (i0, j0, i1, j1), (w00, w01, w10, w11)


def sample_uv(texture: Array, uv) -> Array:
    """Bilinear read at uv; uv may be (..., 2) batched. Clamps outside [0,1]."""
    (i0, j0, i1, j1), (w00, w01, w10, w11) = _bilinear_setup(texture.shape, uv)
    if texture.ndim == 3:
        w00, w01 = w00[..., None], w01[..., None]
        w10, w11 = w10[..., None], w11[..., None]
    return (
        w00 * texture[i0, j0]
        + w01 * texture[i0, j1]
        + w10 * texture[i1, j0]
        + w11 * texture[i1, j1]
    )


def splat_uv(grad_texture: Array, uv, upstream) -> None:
    """Adjoint of sample_uv: scatter upstream gradient into grad_texture.

    Accumulates in place with the same four bilinear weights the read used,
    so <sample(tex, uv), g> == <tex, splat(uv, g)> holds exactly.
    """
    (i0, j0, i1, j1), (w00, w01, w10, w11) = _bilinear_setup(
        grad_texture.shape, uv
    )
    upstream = np.asarray(upstream, dtype=np.float64)
    if grad_texture.ndim == 3:
        w00, w01 = w00[..., None], w01[..., None]
        w10, w11 = w10[..., None], w11[..., None]
    # np.add.at handles repeated texel indices (points sharing a bilinear cell)
    np.add.at(grad_texture, (i0, j0), w00 * upstream)
    np.add.at(grad_texture, (i0, j1), w01 * upstream)
    np.add.at(grad_texture, (i1, j0), w10 * upstream)
    np.add.at(grad_texture, (i1, j1), w11 * upstream)


def sample_nearest(texture: Array, uv) -> Array:
    """Nearest-texel read, for id textures (labels) where blending is wrong."""
    h, w = texture.shape[0], texture.shape[1]
    uv = np.asarray(uv, dtype=np.float64)
    j = np.clip(np.floor(uv[..., 0] * w).astype(np.int64), 0, w - 1)
    i = np.clip(np.floor(uv[..., 1] * h).astype(np.int64), 0, h - 1)
    return texture[i, j]
