import json

import pytest

from multikernel.dataio import Annotation
from multikernel.detect import Detection
from multikernel.evaluation import (
    CORRECT,
    MISCLASSIFIED,
    MISSED,
    compute_metrics,
    format_report,
    match_dataset,
    match_detections,
)


def det(bbox, score=1.0, subclass=1):
    return Detection(bbox=bbox, score=score, subclass=subclass, detector_fg_index=0)


def ann(bbox, subclass=1, image_id="img"):
    return Annotation(image_id=image_id, bbox=bbox, subclass=subclass)


class TestMatching:
    def test_no_detections(self):
        truth = [ann((0, 0, 24, 24)), ann((50, 50, 24, 24), 3)]
        res = match_detections([], truth)
        assert res.statuses == [MISSED, MISSED]
        assert res.false_positives == []

    def test_exact_match_correct_subclass(self):
        res = match_detections([det((5, 5, 24, 24), subclass=2)], [ann((5, 5, 24, 24), 2)])
        assert res.statuses == [CORRECT]
        assert res.false_positives == []

    def test_exact_match_wrong_subclass(self):
        res = match_detections([det((5, 5, 24, 24), subclass=4)], [ann((5, 5, 24, 24), 2)])
        assert res.statuses == [MISCLASSIFIED]
        assert res.false_positives == []

    def test_greedy_order_higher_score_claims_the_sign(self):
        # Both detections overlap the single truth box (IoU 0.9 and 0.6);
        # the higher-score one (0.6 overlap) matches first, the other is FP.
        truth = [ann((0, 0, 20, 20))]
        d_tight = det((0, 0, 20, 18), score=2.0)  # IoU = 0.9
        d_loose = det((0, 6, 20, 20), score=3.0)  # IoU = 0.538...
        res = match_detections([d_tight, d_loose], truth)
        assert res.statuses == [CORRECT]
        assert res.matched_detection == [1]
        assert res.false_positives == [d_tight]

    def test_below_threshold_is_false_positive(self):
        res = match_detections([det((100, 100, 24, 24))], [ann((0, 0, 24, 24))])
        assert res.statuses == [MISSED]
        assert len(res.false_positives) == 1

    def test_threshold_validated(self):
        with pytest.raises(ValueError):
            match_detections([], [], iou_threshold=0.0)

    def test_order_invariance_of_metrics(self):
        truth = [ann((0, 0, 20, 20)), ann((50, 50, 20, 20), 2)]
        dets = [
            det((0, 0, 20, 20), score=1.0, subclass=1),
            det((50, 50, 20, 20), score=2.0, subclass=2),
            det((90, 90, 10, 10), score=0.5, subclass=3),
        ]
        res_a = match_detections(dets, truth)
        res_b = match_detections(dets[::-1], truth)
        assert sorted(res_a.statuses) == sorted(res_b.statuses)
        assert len(res_a.false_positives) == len(res_b.false_positives)

    def test_dataset_matching_respects_image_boundaries(self):
        # A perfect-overlap detection in the wrong image must not match.
        truth_by_image = {"a": [ann((0, 0, 24, 24), 1, "a")], "b": []}
        dets_by_image = {"b": [det((0, 0, 24, 24), subclass=1)]}
        res = match_dataset(dets_by_image, truth_by_image)
        assert res.statuses == [MISSED]
        assert len(res.false_positives) == 1


class TestMetrics:
    def make_result(self, statuses, subclasses, n_fps, fp_subclass=1):
        from multikernel.evaluation import MatchResult

        return MatchResult(
            statuses=list(statuses),
            truth_subclasses=list(subclasses),
            matched_detection=[None] * len(statuses),
            false_positives=[det((0, 0, 5, 5), subclass=fp_subclass)] * n_fps,
        )

    def test_direct_arithmetic_example(self):
        # 10 signs, 5 images, 8 detected (7 correct), 3 FPs.
        statuses = [CORRECT] * 7 + [MISCLASSIFIED] + [MISSED] * 2
        res = self.make_result(statuses, [1] * 10, 3)
        m = compute_metrics(res, n_signs=10, n_images=5)
        assert m.detection_rate == pytest.approx(0.8)
        assert m.classification_rate == pytest.approx(0.7)
        assert m.fp_rate == pytest.approx(0.3)
        assert m.fp_per_image == pytest.approx(0.6)

    def test_perfect_run(self):
        res = self.make_result([CORRECT] * 4, [1, 2, 3, 4], 0)
        m = compute_metrics(res, n_signs=4, n_images=2)
        assert m.detection_rate == 1.0
        assert m.classification_rate == 1.0
        assert m.fp_rate == 0.0
        assert m.fp_per_image == 0.0

    def test_reference_fp_ratios(self):
        # 214 signs, 200 images, 117 false positives: FP = 117/214 (~55%),
        # FP/I = 117/200 (~58%).
        statuses = [CORRECT] * 214
        res = self.make_result(statuses, [1] * 214, 117)
        m = compute_metrics(res, n_signs=214, n_images=200)
        assert m.fp_rate == pytest.approx(117 / 214, abs=1e-12)
        assert m.fp_per_image == pytest.approx(117 / 200, abs=1e-12)
        report = format_report(m)
        assert "55%" in report
        assert "58%" in report

    def test_classification_never_exceeds_detection(self):
        import itertools, random

        rng = random.Random(0)
        options = [CORRECT, MISCLASSIFIED, MISSED]
        for _ in range(50):
            statuses = [rng.choice(options) for _ in range(12)]
            res = self.make_result(statuses, [1 + i % 5 for i in range(12)], rng.randrange(5))
            m = compute_metrics(res, n_signs=12, n_images=3)
            assert m.classification_rate <= m.detection_rate <= 1.0

    def test_per_subclass_breakdown_sums(self):
        statuses = [CORRECT, MISSED, MISCLASSIFIED, CORRECT]
        subclasses = [1, 1, 2, 3]
        res = self.make_result(statuses, subclasses, 2, fp_subclass=2)
        m = compute_metrics(res, n_signs=4, n_images=4)
        assert m.per_subclass[1]["detection_rate"] == pytest.approx(0.5)
        assert m.per_subclass[2]["detection_rate"] == pytest.approx(1.0)
        assert m.per_subclass[2]["classification_rate"] == pytest.approx(0.0)
        assert m.per_subclass[2]["fp_rate"] == pytest.approx(2.0)
        detected_total = sum(
            m.per_subclass[v]["detection_rate"] * m.per_subclass[v]["n_signs"]
            for v in m.per_subclass
        )
        assert detected_total == pytest.approx(m.detection_rate * m.n_signs)

    def test_zero_denominators_rejected(self):
        res = self.make_result([], [], 0)
        with pytest.raises(ValueError):
            compute_metrics(res, n_signs=0, n_images=1)

    def test_report_contains_machine_block(self):
        res = self.make_result([CORRECT, MISSED], [1, 2], 1)
        m = compute_metrics(res, n_signs=2, n_images=1)
        report = format_report(m, name="demo")
        machine = json.loads(report.splitlines()[-1])
        assert machine["detection_rate"] == m.detection_rate
        assert machine["n_false_positives"] == 1

    def test_report_deltas_against_baseline(self):
        base = compute_metrics(self.make_result([CORRECT] * 2, [1, 2], 0), 2, 2)
        run = compute_metrics(self.make_result([CORRECT, MISSED], [1, 2], 1), 2, 2)
        report = format_report(run, baseline=base, name="n300")
        assert "-50%" in report
