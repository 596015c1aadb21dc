"""Match detections against ground truth and compute detection rate D,
classification rate C, false-positive rate FP (relative to sign count), and
false positives per image FP/I, overall and per subclass.

Matching is greedy in descending detection score: each detection claims the
unmatched ground-truth box of highest overlap if the IoU clears the
threshold. A matched sign with the wrong subclass counts toward D but not C
and is never also a false positive; unmatched detections are the false
positives.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .dataio import Annotation, SUBCLASSES
from .detect import Detection, _iou

__all__ = [
    "MatchResult",
    "Metrics",
    "match_detections",
    "match_dataset",
    "compute_metrics",
    "format_report",
]

CORRECT = "detected-correct"
MISCLASSIFIED = "detected-misclassified"
MISSED = "missed"


@dataclass
class MatchResult:
    statuses: list[str]  # one per ground-truth sign, in truth order
    truth_subclasses: list[int]
    matched_detection: list[int | None]  # detection index per sign
    false_positives: list[Detection]


@dataclass
class Metrics:
    detection_rate: float
    classification_rate: float
    fp_rate: float
    fp_per_image: float
    n_signs: int
    n_images: int
    n_false_positives: int
    per_subclass: dict[int, dict[str, float]] = field(default_factory=dict)


def match_detections(
    dets: list[Detection],
    truth: list[Annotation],
    iou_threshold: float = 0.5,
) -> MatchResult:
    """Greedy one-to-one matching in descending score order, for detections
    and ground truth belonging to one image."""
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError("iou_threshold must lie in (0, 1)")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    taken = [False] * len(truth)
    matched: list[int | None] = [None] * len(truth)
    statuses = [MISSED] * len(truth)
    false_positives: list[Detection] = []
    for di in order:
        det = dets[di]
        best_iou = 0.0
        best_t = None
        for ti, ann in enumerate(truth):
            if taken[ti]:
                continue
            overlap = _iou(det.bbox, ann.bbox)
            if overlap > best_iou:
                best_iou, best_t = overlap, ti
        if best_t is not None and best_iou >= iou_threshold:
            taken[best_t] = True
            matched[best_t] = di
            statuses[best_t] = (
                CORRECT if det.subclass == truth[best_t].subclass else MISCLASSIFIED
            )
        else:
            false_positives.append(det)
    return MatchResult(
        statuses=statuses,
        truth_subclasses=[a.subclass for a in truth],
        matched_detection=matched,
        false_positives=false_positives,
    )


def match_dataset(
    dets_by_image: dict[str, list[Detection]],
    truth_by_image: dict[str, list[Annotation]],
    iou_threshold: float = 0.5,
) -> MatchResult:
    """Per-image matching merged into one result. Detections for images
    without ground truth count as false positives."""
    merged = MatchResult(statuses=[], truth_subclasses=[], matched_detection=[], false_positives=[])
    for image_id in sorted(set(dets_by_image) | set(truth_by_image)):
        part = match_detections(
            dets_by_image.get(image_id, []),
            truth_by_image.get(image_id, []),
            iou_threshold,
        )
        merged.statuses.extend(part.statuses)
        merged.truth_subclasses.extend(part.truth_subclasses)
        merged.matched_detection.extend(part.matched_detection)
        merged.false_positives.extend(part.false_positives)
    return merged


def compute_metrics(result: MatchResult, n_signs: int, n_images: int) -> Metrics:
    """Rates per the counting rules in the module docstring."""
    if n_signs < 1 or n_images < 1:
        raise ValueError("n_signs and n_images must be >= 1")
    detected = sum(s != MISSED for s in result.statuses)
    correct = sum(s == CORRECT for s in result.statuses)
    n_fp = len(result.false_positives)

    per_subclass: dict[int, dict[str, float]] = {}
    fp_by_class: dict[int, int] = {v: 0 for v in SUBCLASSES}
    for det in result.false_positives:
        fp_by_class[det.subclass] = fp_by_class.get(det.subclass, 0) + 1
    for v in SUBCLASSES:
        idx = [i for i, sv in enumerate(result.truth_subclasses) if sv == v]
        if not idx:
            continue
        det_v = sum(result.statuses[i] != MISSED for i in idx)
        cor_v = sum(result.statuses[i] == CORRECT for i in idx)
        per_subclass[v] = {
            "n_signs": float(len(idx)),
            "detection_rate": det_v / len(idx),
            "classification_rate": cor_v / len(idx),
            "fp_rate": fp_by_class.get(v, 0) / len(idx),
        }

    return Metrics(
        detection_rate=detected / n_signs,
        classification_rate=correct / n_signs,
        fp_rate=n_fp / n_signs,
        fp_per_image=n_fp / n_images,
        n_signs=n_signs,
        n_images=n_images,
        n_false_positives=n_fp,
        per_subclass=per_subclass,
    )


def format_report(metrics: Metrics, baseline: Metrics | None = None, name: str = "run") -> str:
    """Human table (rates with deltas against a named baseline) followed by
    a machine-readable JSON block with full-precision ratios."""

    def pct(x: float) -> str:
        return f"{100.0 * x:.0f}%"

    def delta(x: float, ref: float | None) -> str:
        if ref is None:
            return "-"
        d = 100.0 * (x - ref)
        return f"{d:+.0f}%"

    ref = baseline
    header = f"{'run':<12}{'D':>6}{'dD':>6}{'C':>6}{'dC':>6}{'FP':>6}{'dFP':>6}{'FP/I':>7}{'dFP/I':>7}"
    row = (
        f"{name:<12}"
        f"{pct(metrics.detection_rate):>6}"
        f"{delta(metrics.detection_rate, ref.detection_rate if ref else None):>6}"
        f"{pct(metrics.classification_rate):>6}"
        f"{delta(metrics.classification_rate, ref.classification_rate if ref else None):>6}"
        f"{pct(metrics.fp_rate):>6}"
        f"{delta(metrics.fp_rate, ref.fp_rate if ref else None):>6}"
        f"{pct(metrics.fp_per_image):>7}"
        f"{delta(metrics.fp_per_image, ref.fp_per_image if ref else None):>7}"
    )
    lines = [header, row, "", "per-subclass:"]
    lines.append(f"{'v':<4}{'signs':>6}{'D':>7}{'C':>7}{'FP':>7}")
    for v in sorted(metrics.per_subclass):
        m = metrics.per_subclass[v]
        lines.append(
            f"{v:<4}{int(m['n_signs']):>6}"
            f"{pct(m['detection_rate']):>7}"
            f"{pct(m['classification_rate']):>7}"
            f"{pct(m['fp_rate']):>7}"
        )
    machine = {
        "name": name,
        "detection_rate": metrics.detection_rate,
        "classification_rate": metrics.classification_rate,
        "fp_rate": metrics.fp_rate,
        "fp_per_image": metrics.fp_per_image,
        "n_signs": metrics.n_signs,
        "n_images": metrics.n_images,
        "n_false_positives": metrics.n_false_positives,
        "per_subclass": metrics.per_subclass,
    }
    lines += ["", json.dumps(machine, sort_keys=True)]
    return "\n".join(lines)
