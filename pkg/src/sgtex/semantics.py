"""Semantic region consolidation and pseudo-labeling.

Over-segmented binary masks are merged into a small set of mutually
exclusive labels by greedy feature-similarity clustering; the per-label
feature library then lets novel views receive pseudo-labels per pixel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ContractViolation, EmptyInputError, EmptyRegionError

UNLABELED = -1
DEFAULT_TAU_SIM = 0.92
DEFAULT_TAU_ASSIGN = 0.85

# sentinel pixel value in the 16-bit export (labels themselves must stay below it)
UNLABELED_PIXEL = 65535


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Vectorized RGB -> HSV, all channels in [0, 1] (colorsys convention)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[-1] != 3:
        raise ContractViolation("rgb_to_hsv expects trailing dimension 3")
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.maximum(np.maximum(r, g), b)
    minc = np.minimum(np.minimum(r, g), b)
    v = maxc
    delta = maxc - minc
    # note: guard the flat (delta == 0) and black (maxc == 0) pixels against 0/0
    safe_delta = np.where(delta == 0.0, 1.0, delta)
    safe_max = np.where(maxc == 0.0, 1.0, maxc)
    s = np.where(maxc == 0.0, 0.0, delta / safe_max)
    rc = (maxc - r) / safe_delta
    gc = (maxc - g) / safe_delta
    bc = (maxc - b) / safe_delta
    h = np.where(r == maxc, bc - gc, np.where(g == maxc, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(delta == 0.0, 0.0, (h / 6.0) % 1.0)
    return np.stack([h, s, v], axis=-1)


def pixel_features(rgb: np.ndarray) -> np.ndarray:
    """Per-pixel feature vector: concatenated RGB and HSV (... , 6)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    return np.concatenate([rgb, rgb_to_hsv(rgb)], axis=-1)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosine similarity along the last axis; zero-norm inputs compare as 0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    num = (a * b).sum(axis=-1)
    den = np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1)
    return num / np.maximum(den, 1e-12)


@dataclass(frozen=True)
class Segment:
    """One over-segmentation fragment: binary mask, feature vector, pixel count."""

    mask: np.ndarray
    feature: np.ndarray
    area: int

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        feature = np.asarray(self.feature, dtype=np.float64)
        if mask.ndim != 2:
            raise ContractViolation("segment mask must be a 2d image")
        if feature.ndim != 1:
            raise ContractViolation("segment feature must be a flat vector")
        if int(mask.sum()) != int(self.area):
            raise ContractViolation("segment area must equal mask popcount")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "feature", feature)
        object.__setattr__(self, "area", int(self.area))


@dataclass(frozen=True)
class SegmentSet:
    """Mutually exclusive segments over one image."""

    segments: tuple

    def __post_init__(self):
        segs = tuple(self.segments)
        if len(segs) == 0:
            raise EmptyInputError("SegmentSet needs at least one segment")
        shape = segs[0].mask.shape
        flen = segs[0].feature.shape[0]
        cover = np.zeros(shape, dtype=np.int64)
        for s in segs:
            if s.mask.shape != shape:
                raise ContractViolation("segment masks must share a resolution")
            if s.feature.shape[0] != flen:
                raise ContractViolation("segment features must share a length")
            cover += s.mask
        if (cover > 1).any():
            raise ContractViolation("segment masks must be pairwise disjoint")
        object.__setattr__(self, "segments", segs)

    def __len__(self) -> int:
        return len(self.segments)


def segments_from_masks(image: np.ndarray, masks) -> SegmentSet:
    """Build a SegmentSet from an RGB image and a list of boolean masks.

    Feature per segment = mean RGB and mean HSV over the mask's pixels.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[-1] != 3:
        raise ContractViolation("expected an rgb image (h, w, 3)")
    feats = pixel_features(image)
    segs = []
    for mask in masks:
        mask = np.asarray(mask, dtype=bool)
        area = int(mask.sum())
        if area == 0:
            raise EmptyRegionError("segment mask has no pixels")
        segs.append(Segment(mask, feats[mask].mean(axis=0), area))
    return SegmentSet(tuple(segs))


@dataclass(frozen=True)
class SemanticLabelMap:
    """Integer label image (UNLABELED sentinel allowed) plus per-label features."""

    labels: np.ndarray
    n_labels: int
    library: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if not np.issubdtype(labels.dtype, np.integer):
            raise ContractViolation("label image must be integer typed")
        labels = labels.astype(np.int64)
        library = np.asarray(self.library, dtype=np.float64)
        n = int(self.n_labels)
        if n < 1:
            raise ContractViolation("need at least one label")
        if library.ndim != 2 or library.shape[0] != n:
            raise ContractViolation("library must have one row per label")
        bad = (labels != UNLABELED) & ((labels < 0) | (labels >= n))
        if bad.any():
            raise ContractViolation("label image contains ids outside 0..n_labels-1")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "n_labels", n)
        object.__setattr__(self, "library", library)


def cluster_segments(segs: SegmentSet, tau_sim: float = DEFAULT_TAU_SIM) -> SemanticLabelMap:
    """Greedy merge of segments into labels, smallest area first.

    A segment joins the existing label of highest cosine similarity when that
    similarity exceeds ``tau_sim``, otherwise it founds a new label.  Library
    features are area-weighted means over member segments.
    """
    if len(segs) == 0:
        raise EmptyInputError("cannot cluster an empty SegmentSet")
    order = sorted(range(len(segs)), key=lambda i: (segs.segments[i].area, i))
    feat_sums = []   # area-weighted feature accumulators per label
    area_sums = []
    members = []     # list of segment indices per label
    for idx in order:
        seg = segs.segments[idx]
        assigned = None
        if feat_sums:
            lib = np.stack([fs / a for fs, a in zip(feat_sums, area_sums)])
            sims = cosine_similarity(lib, seg.feature[None, :])
            best = int(np.argmax(sims))  # argmax takes the lowest id on ties
            if sims[best] > tau_sim:
                assigned = best
        if assigned is None:
            feat_sums.append(seg.area * seg.feature.copy())
            area_sums.append(float(seg.area))
            members.append([idx])
        else:
            feat_sums[assigned] += seg.area * seg.feature
            area_sums[assigned] += float(seg.area)
            members[assigned].append(idx)
    shape = segs.segments[0].mask.shape
    labels = np.full(shape, UNLABELED, dtype=np.int64)
    for label, idxs in enumerate(members):
        for idx in idxs:
            labels[segs.segments[idx].mask] = label
    library = np.stack([fs / a for fs, a in zip(feat_sums, area_sums)])
    return SemanticLabelMap(labels, len(members), library)


def region_average(image: np.ndarray, labels: SemanticLabelMap) -> np.ndarray:
    """Per-label arithmetic mean of an n-channel image; UNLABELED excluded."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[..., None]
    if image.shape[:2] != labels.labels.shape:
        raise ContractViolation("image and label map resolutions differ")
    n = labels.n_labels
    flat_labels = labels.labels.reshape(-1)
    flat_img = image.reshape(-1, image.shape[-1])
    valid = flat_labels != UNLABELED
    counts = np.bincount(flat_labels[valid], minlength=n)
    if (counts == 0).any():
        raise EmptyRegionError(f"labels without pixels: {np.nonzero(counts == 0)[0].tolist()}")
    sums = np.zeros((n, flat_img.shape[-1]))
    np.add.at(sums, flat_labels[valid], flat_img[valid])
    return sums / counts[:, None]


def assign_pseudo_labels(
    view_image: np.ndarray,
    library: np.ndarray,
    tau_assign: float = DEFAULT_TAU_ASSIGN,
) -> SemanticLabelMap:
    """Label each pixel by max feature similarity against the library.

    Pixels whose best similarity is <= ``tau_assign`` become UNLABELED.
    """
    library = np.asarray(library, dtype=np.float64)
    if library.ndim != 2 or library.shape[0] == 0:
        raise EmptyInputError("pseudo-labeling needs a non-empty library")
    feats = pixel_features(view_image)
    h, w, f = feats.shape
    if library.shape[1] != f:
        raise ContractViolation("library feature length does not match pixel features")
    fn = feats.reshape(-1, f)
    fn = fn / np.maximum(np.linalg.norm(fn, axis=1, keepdims=True), 1e-12)
    ln = library / np.maximum(np.linalg.norm(library, axis=1, keepdims=True), 1e-12)
    sims = fn @ ln.T
    best = sims.argmax(axis=1)  # first max wins: lowest label id on ties
    best_sim = sims[np.arange(sims.shape[0]), best]
    out = np.where(best_sim > tau_assign, best, UNLABELED).reshape(h, w)
    return SemanticLabelMap(out.astype(np.int64), library.shape[0], library)


# ---------------------------------------------------------------------------
# adapters: mask-directory ingestion and 16-bit label export


def load_segment_set(manifest_path) -> SegmentSet:
    """Read a SegmentSet from a manifest JSON next to its mask images.

    Manifest format: {"image": "ref.png", "masks": ["m0.png", ...]}; paths are
    relative to the manifest's directory.  Mask pixels > 127 count as active.
    """
    path = Path(manifest_path)
    spec = json.loads(path.read_text())
    base = path.parent
    image = np.asarray(Image.open(base / spec["image"]).convert("RGB"), dtype=np.float64) / 255.0
    masks = []
    for name in spec["masks"]:
        m = np.asarray(Image.open(base / name).convert("L"))
        masks.append(m > 127)
    if not masks:
        raise EmptyInputError("manifest lists no masks")
    return segments_from_masks(image, masks)


def save_label_map(label_map: SemanticLabelMap, image_path, json_path=None) -> None:
    """Write labels as a 16-bit PNG plus a JSON library sidecar."""
    if label_map.n_labels >= UNLABELED_PIXEL:
        raise ContractViolation("too many labels for the 16-bit export")
    arr = label_map.labels.copy()
    arr[arr == UNLABELED] = UNLABELED_PIXEL
    Image.fromarray(arr.astype(np.uint16)).save(image_path)
    sidecar = Path(json_path) if json_path else Path(image_path).with_suffix(".json")
    sidecar.write_text(
        json.dumps(
            {
                "n_labels": label_map.n_labels,
                "library": label_map.library.tolist(),
                "unlabeled_value": UNLABELED_PIXEL,
            },
            indent=2,
        )
    )


def load_label_map(image_path, json_path=None) -> SemanticLabelMap:
    arr = np.asarray(Image.open(image_path), dtype=np.int64)
    sidecar = Path(json_path) if json_path else Path(image_path).with_suffix(".json")
    meta = json.loads(sidecar.read_text())
    labels = np.where(arr == meta["unlabeled_value"], UNLABELED, arr)
    return SemanticLabelMap(labels, meta["n_labels"], np.asarray(meta["library"]))
