"""Triangle-mesh scene, pinhole camera, OBJ I/O and BVH ray queries.

The Scene is the substrate every render and projection operates on: indexed
triangles with per-vertex normals and a [0,1]^2 UV atlas, plus references to
the active material and environment. Geometry arrays are set once and treated
as immutable; material/environment slots hold the latest published snapshots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, EmptySceneError

Array = np.ndarray

_DEGENERATE_AREA = 1e-12
_RAY_TMIN = 1e-6


def triangle_areas(vertices: Array, faces: Array) -> Array:
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


@dataclass
class Scene:
    """Indexed triangle mesh with per-vertex normals and UVs.

    vertices (V, 3), faces (F, 3) int, normals (V, 3) unit, uvs (V, 2) in
    [0,1]^2. material and environment are replaceable snapshot references.
    """

    vertices: Array
    faces: Array
    normals: Array
    uvs: Array
    material: object | None = None
    environment: object | None = None
    _bvh: object | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        f = np.ascontiguousarray(self.faces, dtype=np.int64)
        n = np.ascontiguousarray(self.normals, dtype=np.float64)
        t = np.ascontiguousarray(self.uvs, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ContractViolation(f"vertices must be (V, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise ContractViolation(f"faces must be (F, 3), got {f.shape}")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ContractViolation("face index out of range")
        if n.shape != v.shape:
            raise ContractViolation("normals must match vertices in shape")
        if t.shape != (len(v), 2):
            raise ContractViolation(f"uvs must be (V, 2), got {t.shape}")
        norms = np.linalg.norm(n, axis=1)
        if n.size and np.any(np.abs(norms - 1.0) > 1e-6):
            raise ContractViolation("vertex normals must be unit length")
        if f.size and np.any(triangle_areas(v, f) < _DEGENERATE_AREA):
            raise ContractViolation("degenerate (zero-area) triangle present")
        if t.size and (t.min() < -1e-9 or t.max() > 1.0 + 1e-9):
            raise ContractViolation("uvs must lie in [0, 1]^2 (wrap before load)")
        # a seam-crossing triangle would span nearly the whole chart after wrap
        if f.size:
            tri_uv = t[f]
            ext = tri_uv.max(axis=1) - tri_uv.min(axis=1)
            if np.any(ext > 0.95):
                raise ContractViolation("triangle exceeds the UV chart after wrap")
        self.vertices, self.faces = v, f
        self.normals, self.uvs = n, np.clip(t, 0.0, 1.0)

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    def bvh(self) -> "BVH":
        if self._bvh is None:
            if self.num_faces == 0:
                raise EmptySceneError("scene has no triangles")
            self._bvh = BVH(self.vertices, self.faces)
        return self._bvh


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: position, look_at, up, vertical FOV degrees, (W, H)."""

    position: Array
    look_at: Array
    up: Array
    fov_deg: float
    resolution: tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, np.float64))
        object.__setattr__(self, "look_at", np.asarray(self.look_at, np.float64))
        object.__setattr__(self, "up", np.asarray(self.up, np.float64))
        if not (0.0 < float(self.fov_deg) < 180.0):
            raise ContractViolation(f"fov must be in (0, 180), got {self.fov_deg}")
        w, h = self.resolution
        if w < 1 or h < 1:
            raise ContractViolation("resolution must be at least 1x1")
        object.__setattr__(self, "resolution", (int(w), int(h)))

    def basis(self) -> tuple[Array, Array, Array]:
        fwd = self.look_at - self.position
        fn = np.linalg.norm(fwd)
        if fn < 1e-12:
            raise ContractViolation("camera position equals look_at")
        fwd = fwd / fn
        right = np.cross(fwd, self.up)
        rn = np.linalg.norm(right)
        if rn < 1e-12:
            raise ContractViolation("camera up parallel to view direction")
        right = right / rn
        true_up = np.cross(right, fwd)
        return right, true_up, fwd

    def rays(self) -> tuple[Array, Array]:
        """Per-pixel primary rays: origins (H, W, 3), unit dirs (H, W, 3)."""
        w, h = self.resolution
        right, up, fwd = self.basis()
        tan_v = math.tan(math.radians(self.fov_deg) * 0.5)
        tan_h = tan_v * (w / h)
        x = ((np.arange(w) + 0.5) / w * 2.0 - 1.0) * tan_h
        y = (1.0 - (np.arange(h) + 0.5) / h * 2.0) * tan_v
        xx, yy = np.meshgrid(x, y)
        dirs = fwd[None, None, :] + xx[..., None] * right + yy[..., None] * up
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        origins = np.broadcast_to(self.position, dirs.shape).copy()
        return origins, dirs


# ---------------------------------------------------------------------------
# BVH: median-split build, vectorized frontier traversal
# ---------------------------------------------------------------------------

class BVH:
    """Axis-aligned BVH over triangles, median split on centroids."""

    def __init__(self, vertices: Array, faces: Array, leaf_size: int = 8):
        self.vertices = vertices
        self.faces = faces
        ntri = faces.shape[0]
        tri = vertices[faces]
        lo = tri.min(axis=1)
        hi = tri.max(axis=1)
        cen = tri.mean(axis=1)
        order = np.arange(ntri)

        node_min, node_max = [], []
        node_left, node_right = [], []
        node_start, node_count = [], []

        def alloc():
            node_min.append(None)
            node_max.append(None)
            node_left.append(-1)
            node_right.append(-1)
            node_start.append(0)
            node_count.append(0)
            return len(node_min) - 1

        stack = [(alloc(), 0, ntri)]
        while stack:
            idx, a, b = stack.pop()
            ids = order[a:b]
            node_min[idx] = lo[ids].min(axis=0)
            node_max[idx] = hi[ids].max(axis=0)
            if b - a <= leaf_size:
                node_start[idx], node_count[idx] = a, b - a
                continue
            c = cen[ids]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            order[a:b] = ids[np.argsort(c[:, axis], kind="stable")]
            mid = (a + b) // 2
            li, ri = alloc(), alloc()
            node_left[idx], node_right[idx] = li, ri
            stack.append((li, a, mid))
            stack.append((ri, mid, b))

        self.order = order
        self.node_min = np.array(node_min)
        self.node_max = np.array(node_max)
        self.node_left = np.array(node_left)
        self.node_right = np.array(node_right)
        self.node_start = np.array(node_start)
        self.node_count = np.array(node_count)

    def intersect(self, origins: Array, dirs: Array):
        """Nearest hit per ray.

        origins/dirs flat (R, 3). Returns (t, tri_index, bary_u, bary_v);
        tri_index -1 where the ray misses.
        """
        nray = origins.shape[0]
        best_t = np.full(nray, np.inf)
        best_tri = np.full(nray, -1, dtype=np.int64)
        best_u = np.zeros(nray)
        best_v = np.zeros(nray)
        with np.errstate(divide="ignore"):
            inv = 1.0 / dirs

        pr = np.arange(nray)
        pn = np.zeros(nray, dtype=np.int64)
        while pr.size:
            # slab test against each pair's node box
            t0 = (self.node_min[pn] - origins[pr]) * inv[pr]
            t1 = (self.node_max[pn] - origins[pr]) * inv[pr]
            tmin = np.minimum(t0, t1).max(axis=1)
            tmax = np.maximum(t0, t1).min(axis=1)
            alive = (tmax >= np.maximum(tmin, 0.0)) & (tmin < best_t[pr])
            pr, pn = pr[alive], pn[alive]
            if not pr.size:
                break
            leaf = self.node_count[pn] > 0
            if np.any(leaf):
                lr, ln = pr[leaf], pn[leaf]
                counts = self.node_count[ln]
                rep_r = np.repeat(lr, counts)
                starts = np.repeat(self.node_start[ln], counts)
                offs = np.arange(counts.sum()) - np.repeat(
                    np.cumsum(counts) - counts, counts
                )
                tris = self.order[starts + offs]
                self._leaf_hits(origins, dirs, rep_r, tris,
                                best_t, best_tri, best_u, best_v)
            inner = ~leaf
            ir, inod = pr[inner], pn[inner]
            pr = np.concatenate([ir, ir])
            pn = np.concatenate([self.node_left[inod], self.node_right[inod]])
        return best_t, best_tri, best_u, best_v

    def _leaf_hits(self, origins, dirs, rays, tris,
                   best_t, best_tri, best_u, best_v):
        # Moller-Trumbore on (ray, triangle) candidate pairs
        f = self.faces[tris]
        v0 = self.vertices[f[:, 0]]
        e1 = self.vertices[f[:, 1]] - v0
        e2 = self.vertices[f[:, 2]] - v0
        d = dirs[rays]
        o = origins[rays]
        pvec = np.cross(d, e2)
        det = np.einsum("ij,ij->i", e1, pvec)
        ok = np.abs(det) > 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            invdet = np.where(ok, 1.0 / det, 0.0)
        tvec = o - v0
        u = np.einsum("ij,ij->i", tvec, pvec) * invdet
        qvec = np.cross(tvec, e1)
        v = np.einsum("ij,ij->i", d, qvec) * invdet
        t = np.einsum("ij,ij->i", e2, qvec) * invdet
        eps = 1e-9
        ok &= (u >= -eps) & (v >= -eps) & (u + v <= 1.0 + eps) & (t > _RAY_TMIN)
        if not np.any(ok):
            return
        rays, tris, t, u, v = rays[ok], tris[ok], t[ok], u[ok], v[ok]
        # per-ray min over this batch, then against the global best
        srt = np.lexsort((t, rays))
        rays, tris, t, u, v = rays[srt], tris[srt], t[srt], u[srt], v[srt]
        first = np.ones(rays.size, dtype=bool)
        first[1:] = rays[1:] != rays[:-1]
        rays, tris, t, u, v = rays[first], tris[first], t[first], u[first], v[first]
        better = t < best_t[rays]
        rays, tris, t, u, v = rays[better], tris[better], t[better], u[better], v[better]
        best_t[rays] = t
        best_tri[rays] = tris
        best_u[rays] = u
        best_v[rays] = v


def brute_force_intersect(scene: Scene, origins: Array, dirs: Array):
    """Reference O(rays x tris) intersector used to validate the BVH."""
    nray = origins.shape[0]
    best_t = np.full(nray, np.inf)
    best_tri = np.full(nray, -1, dtype=np.int64)
    best_u = np.zeros(nray)
    best_v = np.zeros(nray)
    f = scene.faces
    v0 = scene.vertices[f[:, 0]]
    e1 = scene.vertices[f[:, 1]] - v0
    e2 = scene.vertices[f[:, 2]] - v0
    for i in range(nray):
        d, o = dirs[i], origins[i]
        pvec = np.cross(d[None, :], e2)
        det = np.einsum("ij,ij->i", e1, pvec)
        ok = np.abs(det) > 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            invdet = np.where(ok, 1.0 / det, 0.0)
        tvec = o[None, :] - v0
        u = np.einsum("ij,ij->i", tvec, pvec) * invdet
        qvec = np.cross(tvec, e1)
        v = np.einsum("ij,ij->i", d[None, :] * np.ones_like(e1), qvec) * invdet
        t = np.einsum("ij,ij->i", e2, qvec) * invdet
        eps = 1e-9
        ok &= (u >= -eps) & (v >= -eps) & (u + v <= 1.0 + eps) & (t > _RAY_TMIN)
        if np.any(ok):
            cand = np.where(ok)[0]
            j = cand[np.argmin(t[cand])]
            best_t[i], best_tri[i] = t[j], j
            best_u[i], best_v[i] = u[j], v[j]
    return best_t, best_tri, best_u, best_v


# ---------------------------------------------------------------------------
# Wavefront OBJ
# ---------------------------------------------------------------------------

def _parse_index(tok: str, counts) -> tuple[int, int | None, int | None]:
    parts = tok.split("/")
    idx = [None, None, None]
    for k, p in enumerate(parts[:3]):
        if p:
            i = int(p)
            idx[k] = i - 1 if i > 0 else counts[k] + i
    if idx[0] is None:
        raise ContractViolation(f"face corner without vertex index: {tok!r}")
    return idx[0], idx[1], idx[2]


def load_obj(path, material=None, environment=None) -> Scene:
    """Load a Wavefront OBJ (v/vt/vn/f, polygons fan-triangulated).

    Corners with distinct (v, vt, vn) combinations become distinct unified
    vertices. Missing normals are computed (area-weighted smooth); missing
    uvs default to chart center 0.5. Degenerate triangles are dropped here,
    before Scene validation.
    """
    positions, uvs_raw, normals_raw, corners = [], [], [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            toks = line.split()
            if toks[0] == "v" and len(toks) >= 4:
                positions.append([float(t) for t in toks[1:4]])
            elif toks[0] == "vt" and len(toks) >= 3:
                uvs_raw.append([float(t) for t in toks[1:3]])
            elif toks[0] == "vn" and len(toks) >= 4:
                normals_raw.append([float(t) for t in toks[1:4]])
            elif toks[0] == "f" and len(toks) >= 4:
                counts = (len(positions), len(uvs_raw), len(normals_raw))
                poly = [_parse_index(t, counts) for t in toks[1:]]
                for k in range(1, len(poly) - 1):
                    corners.append((poly[0], poly[k], poly[k + 1]))
    if not positions:
        raise ContractViolation(f"no vertices in {path}")

    positions = np.array(positions, dtype=np.float64)
    uvs_raw = np.array(uvs_raw, dtype=np.float64) if uvs_raw else None
    normals_raw = np.array(normals_raw, dtype=np.float64) if normals_raw else None

    remap: dict[tuple, int] = {}
    verts, uvs, norms, faces = [], [], [], []
    for tri in corners:
        face = []
        for key in tri:
            if key not in remap:
                remap[key] = len(verts)
                vi, ti, ni = key
                verts.append(positions[vi])
                uvs.append(uvs_raw[ti] if ti is not None and uvs_raw is not None
                           else np.array([0.5, 0.5]))
                norms.append(normals_raw[ni]
                             if ni is not None and normals_raw is not None
                             else None)
            face.append(remap[key])
        faces.append(face)

    verts = np.array(verts, dtype=np.float64)
    faces = np.array(faces, dtype=np.int64) if faces else np.zeros((0, 3), np.int64)
    if faces.size:
        areas = triangle_areas(verts, faces)
        faces = faces[areas >= _DEGENERATE_AREA]

    if any(n is None for n in norms):
        normals = smooth_normals(verts, faces)
    else:
        normals = np.array(norms, dtype=np.float64)
        normals /= np.maximum(np.linalg.norm(normals, axis=1, keepdims=True), 1e-12)

    uv = np.array(uvs, dtype=np.float64)
    # wrap into [0,1], keeping exact 1.0 (pole/seam rows) unwrapped
    uv = np.where(uv == 1.0, 1.0, uv - np.floor(uv))
    return Scene(verts, faces, normals, uv,
                 material=material, environment=environment)


def smooth_normals(vertices: Array, faces: Array) -> Array:
    normals = np.zeros_like(vertices)
    if faces.size:
        a = vertices[faces[:, 0]]
        fn = np.cross(vertices[faces[:, 1]] - a, vertices[faces[:, 2]] - a)
        for k in range(3):
            np.add.at(normals, faces[:, k], fn)
    lens = np.linalg.norm(normals, axis=1, keepdims=True)
    fallback = np.array([0.0, 0.0, 1.0])
    normals = np.where(lens > 1e-12, normals / np.maximum(lens, 1e-12), fallback)
    return normals


def save_obj(scene: Scene, path) -> None:
    with open(path, "w") as fh:
        for v in scene.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for t in scene.uvs:
            fh.write(f"vt {t[0]:.9g} {t[1]:.9g}\n")
        for n in scene.normals:
            fh.write(f"vn {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}\n")
        for f in scene.faces:
            i, j, k = f + 1
            fh.write(f"f {i}/{i}/{i} {j}/{j}/{j} {k}/{k}/{k}\n")
