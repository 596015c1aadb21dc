"""Kernels over training tuples: a within-class factor comparing foreground
features, a linear between-class factor comparing the raw features, and
their product, which lets one SVM learn a whole family of detectors.

A training sample is a tuple (x, i, y): feature vector x, foreground index i
into the foreground table, and label y in {-1, +1}. Foreground samples carry
their own table index; negatives carry a randomly assigned one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "DISTANCE_MODES",
    "KernelParams",
    "TrainingTuple",
    "ForegroundTable",
    "within_class_kernel",
    "between_class_kernel",
    "tuple_kernel",
    "gram_matrix",
    "foreground_distances",
    "multiplicative_gram",
]

DISTANCE_MODES = ("euclidean", "squared_euclidean")


@dataclass(frozen=True)
class KernelParams:
    eta: float
    distance_mode: str = "euclidean"

    def __post_init__(self) -> None:
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.distance_mode not in DISTANCE_MODES:
            raise ValueError(f"distance_mode must be one of {DISTANCE_MODES}")


@dataclass(frozen=True)
class TrainingTuple:
    x: np.ndarray
    fg_index: int
    label: int

    def __post_init__(self) -> None:
        if self.label not in (-1, 1):
            raise ValueError("label must be +1 or -1")


@dataclass(frozen=True)
class ForegroundTable:
    """Indexed foreground samples: features row i and its subclass label."""

    features: np.ndarray  # (n_fg, dim)
    subclasses: np.ndarray  # (n_fg,), values in {1..5}

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        subclasses = np.asarray(self.subclasses, dtype=np.intp)
        if features.ndim != 2 or len(subclasses) != features.shape[0]:
            raise ValueError("features must be (n, dim) with one subclass per row")
        if features.shape[0] == 0:
            raise ValueError("foreground table must be nonempty")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "subclasses", subclasses)

    def __len__(self) -> int:
        return self.features.shape[0]

    def feature(self, i: int) -> np.ndarray:
        if not 0 <= i < len(self):
            raise IndexError(f"foreground index {i} out of range")
        return self.features[i]


def _distance(a: np.ndarray, b: np.ndarray, mode: str) -> float:
    diff = a - b
    sq = float(diff @ diff)
    return sq if mode == "squared_euclidean" else float(np.sqrt(sq))


def within_class_kernel(a: np.ndarray, b: np.ndarray, params: KernelParams) -> float:
    """exp(-eta * D(a, b)) with D plain or squared Euclidean; in (0, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.exp(-params.eta * _distance(a, b, params.distance_mode)))


def between_class_kernel(a: np.ndarray, b: np.ndarray) -> float:
    """Linear kernel: plain dot product."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(a @ b)


def tuple_kernel(
    t1: TrainingTuple,
    t2: TrainingTuple,
    table: ForegroundTable,
    params: KernelParams,
) -> float:
    """Product kernel over sample tuples: within-class factor on the
    tuples' assigned foreground features times the linear factor on the
    tuples' own features."""
    return within_class_kernel(
        table.feature(t1.fg_index), table.feature(t2.fg_index), params
    ) * between_class_kernel(t1.x, t2.x)


def gram_matrix(
    samples: Sequence[TrainingTuple],
    table: ForegroundTable,
    params: KernelParams,
) -> np.ndarray:
    """Dense tuple-kernel Gram matrix, exactly symmetric by construction."""
    if len(samples) == 0:
        raise ValueError("sample list must be nonempty")
    xs = np.stack([np.asarray(t.x, dtype=np.float64) for t in samples])
    fg_idx = np.array([t.fg_index for t in samples], dtype=np.intp)
    fgd = foreground_distances(table, params.distance_mode)
    return multiplicative_gram(xs, fg_idx, fgd, params.eta)


def foreground_distances(table: ForegroundTable, mode: str) -> np.ndarray:
    """Pairwise distances between foreground-table features. Computed once
    and reused for every eta and every training round."""
    if mode not in DISTANCE_MODES:
        raise ValueError(f"distance_mode must be one of {DISTANCE_MODES}")
    metric = "sqeuclidean" if mode == "squared_euclidean" else "euclidean"
    d = cdist(table.features, table.features, metric=metric)
    np.fill_diagonal(d, 0.0)
    return d


def multiplicative_gram(
    xs: np.ndarray,
    fg_idx: np.ndarray,
    fg_dist: np.ndarray,
    eta: float,
    lin: np.ndarray | None = None,
) -> np.ndarray:
    """exp(-eta * fg_dist)[fg_idx, fg_idx] elementwise-times xs @ xs.T.

    A precomputed linear part may be passed in to share it across etas.
    The result is mirrored from its upper triangle so G == G.T holds
    exactly, not merely to rounding.
    """
    if lin is None:
        lin = xs @ xs.T
    theta = np.exp(-eta * fg_dist)[np.ix_(fg_idx, fg_idx)]
    g = theta * lin
    upper = np.triu(g)
    g = upper + np.triu(g, 1).T
    return g


def kernel_rows(
    xs_a: np.ndarray,
    fg_a: np.ndarray,
    xs_b: np.ndarray,
    fg_b: np.ndarray,
    fg_dist: np.ndarray,
    eta: float,
) -> np.ndarray:
    """Rectangular tuple-kernel block K[a, b] between two sample sets."""
    lin = xs_a @ xs_b.T
    theta = np.exp(-eta * fg_dist)[np.ix_(fg_a, fg_b)]
    return theta * lin
