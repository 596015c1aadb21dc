"""Compress the detector family to representative medoids.

Detectors are compared through the cosine complement of their per-support
weight vectors. Partitioning Around Medoids runs a greedy BUILD phase and
then exchanges (medoid, non-medoid) pairs while any single swap lowers the
total assignment cost. The number of medoids is chosen by sweeping k down
from half the family size by a decay factor and keeping the k with the best
silhouette value.

Note: the cosine complement is symmetric with a zero diagonal but does not
satisfy the triangle inequality; PAM and silhouette only need a dissimilarity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .family import DetectorFamily

__all__ = [
    "KSelectConfig",
    "Clustering",
    "KSelectReport",
    "cosine_complement_distance",
    "weight_distance_matrix",
    "pam",
    "silhouette",
    "select_representatives",
    "write_report",
]


@dataclass(frozen=True)
class KSelectConfig:
    start_fraction: float = 0.5
    decay: float = 0.8
    k_min: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.start_fraction <= 1:
            raise ValueError("start_fraction must lie in (0, 1]")
        if not 0 < self.decay < 1:
            raise ValueError("decay must lie in (0, 1)")
        if self.k_min < 1:
            raise ValueError("k_min must be >= 1")


@dataclass(frozen=True)
class Clustering:
    medoids: np.ndarray  # sorted point indices, size k
    assignment: np.ndarray  # point -> index into medoids
    cost: float

    @property
    def k(self) -> int:
        return len(self.medoids)


@dataclass
class KSelectReport:
    rows: list[tuple[int, float, float]] = field(default_factory=list)  # k, silhouette, cost
    selected_k: int = 0
    family_size: int = 0
    warning: str | None = None
    validation_false_negatives: dict[int, int] = field(default_factory=dict)

    @property
    def selected_fraction(self) -> float:
        return self.selected_k / self.family_size if self.family_size else 0.0


def cosine_complement_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cos(a, b), in [0, 2]. All-zero vectors sit at distance 1 from
    every other vector and 0 from another all-zero vector."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 and nb == 0.0:
        return 0.0
    if na == 0.0 or nb == 0.0:
        return 1.0
    return float(np.clip(1.0 - (a @ b) / (na * nb), 0.0, 2.0))


def weight_distance_matrix(vectors: np.ndarray) -> np.ndarray:
    """Pairwise cosine-complement distances, symmetric with a zero diagonal."""
    vectors = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(vectors, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    unit = vectors / safe[:, None]
    d = 1.0 - unit @ unit.T
    zero = norms == 0.0
    if zero.any():
        d[zero, :] = 1.0
        d[:, zero] = 1.0
        d[np.ix_(zero, zero)] = 0.0
    d = np.clip(d, 0.0, 2.0)
    d = np.triu(d, 1)
    d = d + d.T
    return d


def _validate_distance_matrix(dm: np.ndarray) -> np.ndarray:
    dm = np.asarray(dm, dtype=np.float64)
    if dm.ndim != 2 or dm.shape[0] != dm.shape[1]:
        raise ValueError("distance matrix must be square")
    return dm


def pam(dm: np.ndarray, k: int, seed: int = 0) -> Clustering:
    """Partitioning Around Medoids: greedy BUILD, then best-improvement SWAP
    until no single exchange lowers the cost.

    Ties always break toward the lowest index, so the result is
    deterministic; the seed parameter is accepted for interface stability
    but does not influence the outcome.
    """
    dm = _validate_distance_matrix(dm)
    n = dm.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")

    medoids = _build_phase(dm, k)
    d_near, d_second, nearest = _assignment_state(dm, medoids)
    while True:
        best_delta, best_m, best_h = _best_swap(dm, medoids, d_near, d_second, nearest)
        if best_delta >= -1e-12:
            break
        medoids[best_m] = best_h
        d_near, d_second, nearest = _assignment_state(dm, medoids)

    order = np.argsort(medoids, kind="stable")
    medoids = medoids[order]
    d_near, d_second, nearest = _assignment_state(dm, medoids)
    return Clustering(
        medoids=medoids,
        assignment=nearest,
        cost=float(d_near.sum()),
    )


def build_cost(dm: np.ndarray, k: int) -> float:
    """Assignment cost right after the BUILD phase (before any swaps)."""
    dm = _validate_distance_matrix(dm)
    medoids = _build_phase(dm, k)
    d_near, _, _ = _assignment_state(dm, medoids)
    return float(d_near.sum())


def _build_phase(dm: np.ndarray, k: int) -> np.ndarray:
    n = dm.shape[0]
    totals = dm.sum(axis=0)
    first = int(np.argmin(totals))
    medoids = [first]
    d_near = dm[first].copy()
    for _ in range(1, k):
        gains = np.maximum(d_near[None, :] - dm, 0.0).sum(axis=1)
        gains[medoids] = -np.inf
        nxt = int(np.argmax(gains))
        medoids.append(nxt)
        d_near = np.minimum(d_near, dm[nxt])
    return np.array(medoids, dtype=np.intp)


def _assignment_state(
    dm: np.ndarray, medoids: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nearest and second-nearest medoid distances plus the nearest's
    position in the medoid list (ties toward the lowest medoid index)."""
    sub = dm[:, medoids]  # (n, k)
    nearest = np.argmin(sub, axis=1)
    d_near = sub[np.arange(len(dm)), nearest]
    if len(medoids) == 1:
        d_second = np.full(len(dm), np.inf)
    else:
        masked = sub.copy()
        masked[np.arange(len(dm)), nearest] = np.inf
        d_second = masked.min(axis=1)
    return d_near, d_second, nearest


def _best_swap(
    dm: np.ndarray,
    medoids: np.ndarray,
    d_near: np.ndarray,
    d_second: np.ndarray,
    nearest: np.ndarray,
) -> tuple[float, int, int]:
    """Most negative total-cost change over all (medoid, candidate) swaps.

    For candidate h, points not assigned to the removed medoid m change by
    min(d(j,h) - d_near(j), 0); points assigned to m change by
    min(d(j,h), d_second(j)) - d_near(j). Evaluated for all m at once.
    """
    n = dm.shape[0]
    k = len(medoids)
    is_medoid = np.zeros(n, dtype=bool)
    is_medoid[medoids] = True
    candidates = np.flatnonzero(~is_medoid)

    best = (np.inf, -1, -1)
    for h in candidates:
        dj_h = dm[:, h]
        gain = np.minimum(dj_h - d_near, 0.0)
        base = gain.sum()
        # Correction per removed medoid m over its own cluster members.
        member_term = np.minimum(dj_h, d_second) - d_near - gain
        corrections = np.bincount(nearest, weights=member_term, minlength=k)
        deltas = base + corrections
        m_pos = int(np.argmin(deltas))
        delta = float(deltas[m_pos])
        if delta < best[0] - 1e-15:
            best = (delta, m_pos, int(h))
    return best


def silhouette(clustering: Clustering, dm: np.ndarray) -> float:
    """Mean over points of (b - a) / max(a, b); a is the mean distance to
    the point's own cluster, b the best mean distance to another cluster.
    Singleton clusters and zero-distance ties contribute 0."""
    dm = _validate_distance_matrix(dm)
    k = clustering.k
    if k < 2:
        raise ValueError("silhouette requires at least two clusters")
    n = dm.shape[0]
    labels = clustering.assignment
    members = [np.flatnonzero(labels == c) for c in range(k)]
    sizes = np.array([len(m) for m in members])
    # Mean distance from every point to each cluster.
    sums = np.zeros((n, k))
    for c, idx in enumerate(members):
        if len(idx):
            sums[:, c] = dm[:, idx].sum(axis=1)
    scores = np.zeros(n)
    for p in range(n):
        c = labels[p]
        if sizes[c] <= 1:
            continue
        a = sums[p, c] / (sizes[c] - 1)
        other = [sums[p, o] / sizes[o] for o in range(k) if o != c and sizes[o] > 0]
        if not other:
            continue
        b = min(other)
        denom = max(a, b)
        scores[p] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())


def candidate_ks(n: int, cfg: KSelectConfig) -> list[int]:
    """Strictly decreasing k schedule from ceil(start_fraction * n) down to
    k_min, shrinking by the decay factor (silhouette needs k >= 2)."""
    ks = []
    k = int(np.ceil(cfg.start_fraction * n))
    k = min(k, n)
    floor = max(cfg.k_min, 2)
    while k >= floor:
        ks.append(k)
        k = min(int(np.floor(k * cfg.decay)), k - 1)
    return ks


def select_representatives(
    family: DetectorFamily,
    cfg: KSelectConfig,
    validation: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[DetectorFamily, KSelectReport]:
    """Sweep k, run PAM at each, and keep the medoid detectors of the
    best-silhouette k (ties prefer the smallest k).

    The optional validation hook takes (features, subclasses) of cropped
    positives and reports per-k false-negative counts; it never influences
    which k is selected.
    """
    n = len(family)
    report = KSelectReport(family_size=n)
    if n < 2:
        report.warning = "family too small to cluster"
        report.selected_k = n
        return family, report
    ks = candidate_ks(n, cfg)
    if not ks:
        report.warning = f"family smaller than k_min={cfg.k_min}; returned unchanged"
        report.selected_k = n
        return family, report

    dm = weight_distance_matrix(family.sv_weight_matrix)
    best_k = None
    best_sil = -np.inf
    clusterings: dict[int, Clustering] = {}
    for k in ks:
        clustering = pam(dm, k, seed=cfg.seed)
        sil = silhouette(clustering, dm)
        report.rows.append((k, sil, clustering.cost))
        clusterings[k] = clustering
        if sil >= best_sil:
            best_sil, best_k = sil, k
        if validation is not None:
            feats, _ = validation
            sub = family.restrict(clusterings[k].medoids)
            responses = feats @ sub.weight_matrix.T + sub.bias
            report.validation_false_negatives[k] = int(
                np.sum(responses.max(axis=1) <= 0)
            )

    report.selected_k = int(best_k)
    return family.restrict(clusterings[best_k].medoids), report


def write_report(report: KSelectReport, path: Path | str) -> None:
    lines = ["k,silhouette,cost,selected"]
    for k, sil, cost in report.rows:
        flag = 1 if k == report.selected_k else 0
        lines.append(f"{k},{sil!r},{cost!r},{flag}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
