"""Color features against colorsys, greedy clustering against a reimplementation."""

from __future__ import annotations

import colorsys

import numpy as np
import pytest

from sgtex.errors import ContractViolation, EmptyInputError, EmptyRegionError
from sgtex.semantics import (
    DEFAULT_TAU_ASSIGN,
    DEFAULT_TAU_SIM,
    UNLABELED,
    Segment,
    SegmentSet,
    SemanticLabelMap,
    assign_pseudo_labels,
    cluster_segments,
    cosine_similarity,
    load_label_map,
    pixel_features,
    region_average,
    rgb_to_hsv,
    save_label_map,
    segments_from_masks,
)


def canonical_partition(labels):
    """Relabel in first-appearance order so partitions compare across id permutations."""
    out = np.full(labels.shape, -1, dtype=np.int64)
    mapping = {}
    for val in labels.reshape(-1):
        if val != UNLABELED and val not in mapping:
            mapping[val] = len(mapping)
    for old, new in mapping.items():
        out[labels == old] = new
    return out


class TestColorFeatures:
    def test_rgb_to_hsv_matches_colorsys(self):
        rng = np.random.default_rng(51)
        colors = rng.random((200, 3))
        got = rgb_to_hsv(colors)
        for k in range(200):
            want = colorsys.rgb_to_hsv(*colors[k])
            assert np.allclose(got[k], want, atol=1e-12), k

    def test_rgb_to_hsv_edge_colors(self):
        edges = np.array([
            [0, 0, 0], [1, 1, 1], [0.5, 0.5, 0.5],
            [1, 0, 0], [0, 1, 0], [0, 0, 1],
            [1, 1, 0], [0, 1, 1], [1, 0, 1],
        ], dtype=np.float64)
        got = rgb_to_hsv(edges)
        for k, c in enumerate(edges):
            want = colorsys.rgb_to_hsv(*c)
            assert np.allclose(got[k], want, atol=1e-12), c

    def test_pixel_features_concatenates(self):
        rng = np.random.default_rng(52)
        img = rng.random((4, 5, 3))
        f = pixel_features(img)
        assert f.shape == (4, 5, 6)
        assert np.array_equal(f[..., :3], img)
        assert np.array_equal(f[..., 3:], rgb_to_hsv(img))

    def test_bad_channel_count(self):
        with pytest.raises(ContractViolation):
            rgb_to_hsv(np.zeros((3, 3, 4)))


class TestCosineSimilarity:
    def test_known_values(self):
        assert cosine_similarity([1, 0], [1, 0]) == pytest.approx(1.0)
        assert cosine_similarity([1, 0], [0, 1]) == pytest.approx(0.0)
        assert cosine_similarity([1, 0], [-1, 0]) == pytest.approx(-1.0)
        assert cosine_similarity([2, 0], [5, 0]) == pytest.approx(1.0)

    def test_zero_vector_compares_as_zero(self):
        assert cosine_similarity([0, 0, 0], [1, 2, 3]) == 0.0

    def test_batched(self):
        a = np.array([[1, 0], [0, 2]])
        b = np.array([[1, 0], [0, -1]])
        assert np.allclose(cosine_similarity(a, b), [1.0, -1.0])


def make_segments(shape, areas, features):
    """Disjoint row-strip segments with prescribed areas and features."""
    h, w = shape
    masks = []
    cursor = 0
    for area in areas:
        m = np.zeros(shape, dtype=bool)
        flat = m.reshape(-1)
        flat[cursor:cursor + area] = True
        cursor += area
        masks.append(m)
    assert cursor <= h * w
    return SegmentSet(tuple(
        Segment(m, np.asarray(f, dtype=np.float64), int(m.sum()))
        for m, f in zip(masks, features)
    ))


def greedy_reference(segs, tau_sim):
    """Plain-python transcription of the merge rule, used as an oracle."""
    order = sorted(range(len(segs)), key=lambda i: (segs.segments[i].area, i))
    groups = []  # (feat_sum, area_sum, member indices)
    for idx in order:
        seg = segs.segments[idx]
        best_label, best_sim = None, -2.0
        for label, (fs, asum, _) in enumerate(groups):
            mean = fs / asum
            num = float(np.dot(mean, seg.feature))
            den = max(np.linalg.norm(mean) * np.linalg.norm(seg.feature), 1e-12)
            sim = num / den
            if sim > best_sim:  # strict: ties keep the lowest label
                best_label, best_sim = label, sim
        if best_label is not None and best_sim > tau_sim:
            fs, asum, mem = groups[best_label]
            groups[best_label] = (fs + seg.area * seg.feature, asum + seg.area,
                                  mem + [idx])
        else:
            groups.append((seg.area * np.asarray(seg.feature, np.float64),
                           float(seg.area), [idx]))
    labels = np.full(segs.segments[0].mask.shape, UNLABELED, dtype=np.int64)
    for lab, (_, _, mem) in enumerate(groups):
        for idx in mem:
            labels[segs.segments[idx].mask] = lab
    library = np.stack([fs / asum for fs, asum, _ in groups])
    return labels, library


class TestClustering:
    def test_identical_features_merge(self):
        f = [0.5, 0.5, 0.5, 0.0, 0.0, 0.5]
        segs = make_segments((4, 6), [3, 5, 7], [f, f, f])
        lm = cluster_segments(segs)
        assert lm.n_labels == 1
        assert np.allclose(lm.library[0], f)

    def test_dissimilar_features_stay_separate(self):
        segs = make_segments((4, 6), [3, 5], [[1, 0, 0, 0, 0, 1], [0, 1, 0, 0.5, 1, 0]])
        lm = cluster_segments(segs)
        assert lm.n_labels == 2

    def test_library_is_area_weighted_mean(self):
        f1 = np.array([1.0, 0.0, 0.0, 0.2, 0.1, 1.0])
        f2 = f1 * 1.02  # nearly parallel: merges at default tau
        segs = make_segments((4, 6), [2, 6], [f1, f2])
        lm = cluster_segments(segs)
        assert lm.n_labels == 1
        want = (2 * f1 + 6 * f2) / 8
        assert np.allclose(lm.library[0], want, atol=1e-12)

    def test_matches_reference_random_sets(self):
        rng = np.random.default_rng(53)
        for trial in range(40):
            n = int(rng.integers(2, 9))
            areas = rng.integers(1, 9, n).tolist()
            base = rng.random(6) + 0.2
            feats = [base * rng.uniform(0.8, 1.2)
                     + rng.normal(0, rng.choice([0.01, 0.2]), 6)
                     for _ in range(n)]
            feats = [np.abs(f) for f in feats]
            segs = make_segments((10, 10), areas, feats)
            tau = float(rng.uniform(0.85, 0.99))
            lm = cluster_segments(segs, tau)
            ref_labels, ref_library = greedy_reference(segs, tau)
            assert np.array_equal(lm.labels, ref_labels), trial
            assert np.allclose(lm.library, ref_library, atol=1e-12), trial

    def test_input_order_invariance_of_partition(self):
        # shuffling the segment tuple must not change the pixel partition:
        # the merge order is pinned by (area, original index) only through
        # areas, so use distinct areas
        rng = np.random.default_rng(54)
        areas = [2, 3, 5, 7, 11]
        feats = [np.abs(rng.random(6) + 0.1) for _ in range(5)]
        segs = make_segments((6, 8), areas, feats)
        base = canonical_partition(cluster_segments(segs, 0.95).labels)
        for _ in range(5):
            perm = rng.permutation(5)
            shuffled = SegmentSet(tuple(segs.segments[i] for i in perm))
            got = canonical_partition(cluster_segments(shuffled, 0.95).labels)
            assert np.array_equal(base, got)

    def test_threshold_monotonicity(self):
        rng = np.random.default_rng(55)
        feats = [np.abs(rng.random(6) + 0.1) for _ in range(6)]
        segs = make_segments((6, 8), [1, 2, 3, 4, 5, 6], feats)
        counts = [cluster_segments(segs, t).n_labels
                  for t in (0.5, 0.8, 0.95, 0.999)]
        assert counts == sorted(counts)

    def test_empty_set_rejected(self):
        with pytest.raises(EmptyInputError):
            SegmentSet(())


class TestSegmentValidation:
    def test_area_popcount_mismatch(self):
        m = np.zeros((3, 3), dtype=bool)
        m[0, 0] = True
        with pytest.raises(ContractViolation):
            Segment(m, np.zeros(6), 2)

    def test_overlapping_segments_rejected(self):
        m1 = np.zeros((3, 3), dtype=bool)
        m1[0, :] = True
        m2 = np.zeros((3, 3), dtype=bool)
        m2[0, 0] = True  # overlaps m1
        s1 = Segment(m1, np.zeros(6), 3)
        s2 = Segment(m2, np.zeros(6), 1)
        with pytest.raises(ContractViolation):
            SegmentSet((s1, s2))

    def test_segments_from_masks_features(self):
        rng = np.random.default_rng(56)
        img = rng.random((5, 5, 3))
        m1 = np.zeros((5, 5), dtype=bool)
        m1[:2] = True
        m2 = np.zeros((5, 5), dtype=bool)
        m2[3:] = True
        segs = segments_from_masks(img, [m1, m2])
        want = pixel_features(img)[m1].mean(axis=0)
        assert np.allclose(segs.segments[0].feature, want)
        assert segs.segments[0].area == 10

    def test_segments_from_masks_empty_mask(self):
        img = np.zeros((4, 4, 3))
        with pytest.raises(EmptyRegionError):
            segments_from_masks(img, [np.zeros((4, 4), dtype=bool)])


class TestRegionAverage:
    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(57)
        labels = rng.integers(0, 4, (8, 8))
        labels[0, :3] = UNLABELED
        img = rng.random((8, 8, 3))
        lm = SemanticLabelMap(labels, 4, np.zeros((4, 6)))
        got = region_average(img, lm)
        for lab in range(4):
            sel = labels == lab
            assert np.allclose(got[lab], img[sel].mean(axis=0)), lab

    def test_unlabeled_pixels_excluded(self):
        labels = np.zeros((4, 4), dtype=np.int64)
        labels[0, 0] = UNLABELED
        img = np.ones((4, 4, 1))
        img[0, 0] = 100.0  # would poison the mean if included
        lm = SemanticLabelMap(labels, 1, np.zeros((1, 6)))
        assert np.allclose(region_average(img, lm), 1.0)

    def test_missing_label_raises(self):
        labels = np.zeros((3, 3), dtype=np.int64)
        lm = SemanticLabelMap(labels, 2, np.zeros((2, 6)))
        with pytest.raises(EmptyRegionError):
            region_average(np.ones((3, 3, 3)), lm)

    def test_resolution_mismatch(self):
        lm = SemanticLabelMap(np.zeros((3, 3), dtype=np.int64), 1, np.zeros((1, 6)))
        with pytest.raises(ContractViolation):
            region_average(np.ones((4, 4, 3)), lm)


class TestPseudoLabels:
    def library_for(self, colors):
        img = np.asarray(colors, dtype=np.float64)[None, :, :]
        return pixel_features(img)[0]

    def test_assigns_nearest_library_row(self):
        red = [0.9, 0.1, 0.1]
        blue = [0.1, 0.1, 0.9]
        lib = self.library_for([red, blue])
        img = np.array([[red, blue], [blue, red]], dtype=np.float64)
        lm = assign_pseudo_labels(img, lib)
        assert np.array_equal(lm.labels, [[0, 1], [1, 0]])

    def test_dissimilar_pixel_unlabeled(self):
        red = [0.9, 0.1, 0.1]
        lib = self.library_for([red])
        img = np.array([[[0.1, 0.9, 0.1]]], dtype=np.float64)  # green pixel
        lm = assign_pseudo_labels(img, lib, tau_assign=0.99)
        assert lm.labels[0, 0] == UNLABELED

    def test_tie_takes_lowest_id(self):
        color = [0.5, 0.4, 0.3]
        lib = self.library_for([color, color])  # identical rows
        img = np.array([[color]], dtype=np.float64)
        lm = assign_pseudo_labels(img, lib)
        assert lm.labels[0, 0] == 0

    def test_similarity_is_cosine_against_features(self):
        rng = np.random.default_rng(58)
        lib = np.abs(rng.random((3, 6))) + 0.05
        img = np.abs(rng.random((5, 7, 3))) * 0.9 + 0.05
        lm = assign_pseudo_labels(img, lib, tau_assign=-1.0)  # always assign
        feats = pixel_features(img)
        for i in range(5):
            for j in range(7):
                sims = [float(cosine_similarity(feats[i, j], lib[k]))
                        for k in range(3)]
                assert lm.labels[i, j] == int(np.argmax(sims))

    def test_empty_library(self):
        with pytest.raises(EmptyInputError):
            assign_pseudo_labels(np.zeros((2, 2, 3)), np.zeros((0, 6)))


class TestLabelMapIO:
    def test_round_trip_with_sentinel(self, tmp_path):
        rng = np.random.default_rng(59)
        labels = rng.integers(0, 3, (6, 6))
        labels[0, 0] = UNLABELED
        lib = rng.random((3, 6))
        lm = SemanticLabelMap(labels, 3, lib)
        p = tmp_path / "labels.png"
        save_label_map(lm, p)
        back = load_label_map(p)
        assert np.array_equal(back.labels, lm.labels)
        assert back.n_labels == 3
        assert np.allclose(back.library, lib)

    def test_label_map_validation(self):
        with pytest.raises(ContractViolation):
            SemanticLabelMap(np.zeros((2, 2), dtype=np.int64), 1, np.zeros((2, 6)))
        with pytest.raises(ContractViolation):
            SemanticLabelMap(np.full((2, 2), 5, dtype=np.int64), 2, np.zeros((2, 6)))
        with pytest.raises(ContractViolation):
            SemanticLabelMap(np.zeros((2, 2), dtype=np.float64), 1, np.zeros((1, 6)))
