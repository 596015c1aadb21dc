import numpy as np
import pytest

from multikernel.detect import (
    Detection,
    ScanConfig,
    classify_window,
    group_detections,
    pyramid_levels,
    scan_image,
)
from multikernel.family import DetectorFamily
from multikernel.hog import HogConfig, compute_hog


def family_from_weights(weights, bias=-0.05, subclasses=None):
    weights = np.asarray(weights, dtype=float)
    n = weights.shape[0]
    if subclasses is None:
        subclasses = 1 + (np.arange(n) % 5)
    return DetectorFamily(
        weight_matrix=weights,
        bias=bias,
        fg_indices=np.arange(n, dtype=np.intp),
        subclasses=np.asarray(subclasses, dtype=np.intp),
        sv_weight_matrix=np.zeros((n, 1)),
        model_fingerprint="test",
        shared_sv_count=1,
    )


class TestClassifyWindow:
    def test_single_detector(self):
        rng = np.random.default_rng(0)
        w = rng.normal(size=(1, 900))
        fam = family_from_weights(w, bias=0.25)
        x = rng.normal(size=900)
        score, winner = classify_window(x, fam)
        assert winner == 0
        assert score == pytest.approx(float(w[0] @ x + 0.25), rel=1e-12)

    def test_argmax_picks_positive_detector(self):
        x = np.ones(4)
        weights = np.array([[-0.25, 0, 0, 0], [0.125, 0, 0, 0]])
        fam = family_from_weights(weights, bias=0.0)
        score, winner = classify_window(x, fam)
        assert (score, winner) == (pytest.approx(0.125), 1)

    def test_argmax_invariant_under_positive_scaling(self):
        rng = np.random.default_rng(1)
        weights = rng.normal(size=(6, 30))
        fam = family_from_weights(weights, bias=-0.4)
        scaled = family_from_weights(weights * 3.0, bias=-1.2)
        for _ in range(100):
            x = rng.normal(size=30)
            _, w1 = classify_window(x, fam)
            _, w2 = classify_window(x, scaled)
            assert w1 == w2

    def test_ties_break_to_lowest_fg_index(self):
        weights = np.tile(np.array([[0.5, 0.0]]), (3, 1))  # identical detectors
        fam = family_from_weights(weights, bias=0.0)
        _, winner = classify_window(np.array([1.0, 0.0]), fam)
        assert winner == 0

    def test_dimension_mismatch(self):
        fam = family_from_weights(np.ones((2, 10)))
        with pytest.raises(ValueError):
            classify_window(np.ones(9), fam)


class TestPyramid:
    def test_levels_shrink_by_scale_factor(self):
        cfg = ScanConfig(scale_factor=1.2)
        levels = pyramid_levels(160, 160, cfg)
        assert levels[0] == (0, 160, 160)
        for lvl, h, w in levels:
            assert h >= 24 and w >= 24
            assert h == int(round(160 / 1.2**lvl))
        hs = [h for _, h, _ in levels]
        assert hs == sorted(hs, reverse=True)

    def test_window_count_closed_form_with_huge_stride(self):
        # stride = image width: only the leftmost column positions remain.
        rng = np.random.default_rng(2)
        img = rng.random((36, 36))
        fam = family_from_weights(np.full((1, 900), 10.0), bias=10.0)
        cfg = ScanConfig(stride=36, scale_factor=10.0)
        dets = scan_image(img, fam, cfg)
        # One level (36 px), window origin only at (0, 0).
        assert len(dets) == 1


class TestScanImage:
    def test_uniform_image_with_nonpositive_bias_yields_nothing(self):
        fam = family_from_weights(np.ones((3, 900)), bias=-0.01)
        dets = scan_image(np.full((60, 60), 0.5), fam)
        assert dets == []

    def test_detections_ordered_and_positive_with_valid_boxes(self):
        rng = np.random.default_rng(3)
        img = rng.random((70, 50))
        fam = family_from_weights(rng.normal(size=(4, 900)) * 0.2, bias=0.1)
        dets = scan_image(img, fam)
        assert len(dets) > 0
        for d in dets:
            assert d.score > 0
            x, y, w, h = d.bbox
            assert 0 <= x and 0 <= y and w > 0 and h > 0
            assert x + w <= 50 and y + h <= 70
            assert d.subclass == fam.subclasses[
                np.flatnonzero(fam.fg_indices == d.detector_fg_index)[0]
            ]

    def test_threaded_scan_identical_to_serial(self):
        rng = np.random.default_rng(4)
        img = rng.random((80, 80))
        fam = family_from_weights(rng.normal(size=(5, 900)) * 0.2, bias=0.05)
        serial = scan_image(img, fam, ScanConfig(threads=1))
        threaded = scan_image(img, fam, ScanConfig(threads=4))
        assert serial == threaded

    def test_image_smaller_than_window_rejected(self):
        fam = family_from_weights(np.ones((1, 900)))
        with pytest.raises(ValueError):
            scan_image(np.zeros((20, 30)), fam)

    def test_min_max_size_filter_levels(self):
        rng = np.random.default_rng(5)
        img = rng.random((96, 96))
        fam = family_from_weights(rng.normal(size=(2, 900)) * 0.2, bias=0.2)
        all_levels = scan_image(img, fam)
        only_small = scan_image(img, fam, ScanConfig(max_size=30))
        only_large = scan_image(img, fam, ScanConfig(min_size=40))
        # Levels 96 and 80 survive max_size=30 (object sizes 24 and 28.8).
        assert {d.bbox[2] for d in only_small} <= {24, 29}
        assert all(d.bbox[2] >= 40 for d in only_large)
        assert len(only_small) + len(only_large) <= len(all_levels)

    def test_scan_window_must_match_descriptor_window(self):
        fam = family_from_weights(np.ones((1, 36)))
        with pytest.raises(ValueError):
            scan_image(np.zeros((40, 40)), fam, ScanConfig(), HogConfig(window=8, cell=4))


class TestGrouping:
    def make(self, bbox, score, subclass):
        return Detection(bbox=bbox, score=score, subclass=subclass, detector_fg_index=0)

    def test_identity_when_disabled(self):
        dets = [self.make((0, 0, 24, 24), 1.0, 1), self.make((100, 100, 24, 24), 2.0, 2)]
        assert group_detections(dets, 0) == dets

    def test_small_groups_dropped(self):
        dets = [
            self.make((0, 0, 24, 24), 1.0, 1),
            self.make((1, 0, 24, 24), 1.1, 1),
            self.make((0, 1, 24, 24), 0.9, 1),
        ]
        assert group_detections(dets, 4) == []

    def test_majority_vote_hand_trace(self):
        # Five overlapping boxes, subclasses {1,1,1,5,5} -> one detection of
        # subclass 1 carried by the highest-score member.
        dets = [
            self.make((0, 0, 24, 24), 1.0, 1),
            self.make((1, 0, 24, 24), 1.2, 1),
            self.make((0, 1, 24, 24), 0.8, 1),
            self.make((1, 1, 24, 24), 2.0, 5),
            self.make((2, 0, 24, 24), 0.7, 5),
        ]
        out = group_detections(dets, 2)
        assert len(out) == 1
        assert out[0].subclass == 1
        assert out[0].score == 2.0

    def test_disjoint_groups_kept_separately(self):
        dets = [
            self.make((0, 0, 24, 24), 1.0, 1),
            self.make((2, 2, 24, 24), 1.5, 1),
            self.make((200, 200, 24, 24), 0.5, 3),
            self.make((202, 200, 24, 24), 0.6, 3),
        ]
        out = group_detections(dets, 2)
        assert len(out) == 2
        assert {d.subclass for d in out} == {1, 3}
