"""Fold a trained tuple-kernel model into a family of linear detectors.

For each foreground index the within-class factor between every support
tuple's assigned foreground feature and that index's feature is absorbed
into the support weights. The weighted sum of support features then gives
one plain weight vector per index: detection reduces to a dot product. All
detectors share the one support set; only the per-support weights differ.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import modelio
from .kernels import KernelParams, foreground_distances, within_class_kernel
from .trainer import SvmModel

__all__ = [
    "LinearDetector",
    "DetectorFamily",
    "fold_support_weight",
    "build_detector",
    "build_family",
    "save_family",
    "load_family",
]


@dataclass(frozen=True)
class LinearDetector:
    """One folded detector: weight vector over feature dimensions, shared
    bias, the foreground index it was folded for, that index's subclass,
    and the per-support folded weights it was built from."""

    weights: np.ndarray
    bias: float
    fg_index: int
    subclass: int
    sv_weights: np.ndarray

    def response(self, x: np.ndarray) -> float:
        return float(self.weights @ x + self.bias)


@dataclass
class DetectorFamily:
    weight_matrix: np.ndarray  # (n_detectors, dim)
    bias: float
    fg_indices: np.ndarray  # (n_detectors,)
    subclasses: np.ndarray  # (n_detectors,)
    sv_weight_matrix: np.ndarray  # (n_detectors, n_support)
    model_fingerprint: str
    shared_sv_count: int

    def __post_init__(self) -> None:
        n = self.weight_matrix.shape[0]
        if not (
            len(self.fg_indices) == len(self.subclasses) == n
            and self.sv_weight_matrix.shape == (n, self.shared_sv_count)
        ):
            raise ValueError("detector family arrays are inconsistent")
        if len(np.unique(self.fg_indices)) != n:
            raise ValueError("fg_index values must be distinct")

    def __len__(self) -> int:
        return self.weight_matrix.shape[0]

    def __getitem__(self, pos: int) -> LinearDetector:
        return LinearDetector(
            weights=self.weight_matrix[pos],
            bias=self.bias,
            fg_index=int(self.fg_indices[pos]),
            subclass=int(self.subclasses[pos]),
            sv_weights=self.sv_weight_matrix[pos],
        )

    @property
    def detectors(self) -> list[LinearDetector]:
        return [self[i] for i in range(len(self))]

    def restrict(self, positions: np.ndarray) -> "DetectorFamily":
        """Subfamily at the given detector positions (order preserved)."""
        positions = np.asarray(positions, dtype=np.intp)
        return DetectorFamily(
            weight_matrix=self.weight_matrix[positions],
            bias=self.bias,
            fg_indices=self.fg_indices[positions],
            subclasses=self.subclasses[positions],
            sv_weight_matrix=self.sv_weight_matrix[positions],
            model_fingerprint=self.model_fingerprint,
            shared_sv_count=self.shared_sv_count,
        )


def fold_support_weight(model: SvmModel, s: int, i: int) -> float:
    """Folded weight of support tuple s for foreground index i: the signed
    dual weight scaled by the within-class factor between the support's
    assigned foreground feature and foreground i's feature."""
    if not 0 <= s < len(model.support):
        raise IndexError(f"support index {s} out of range")
    params = KernelParams(eta=model.eta, distance_mode=model.distance_mode)
    assigned = model.fg_table.feature(model.support[s].fg_index)
    return float(
        model.signed_weights[s]
        * within_class_kernel(assigned, model.fg_table.feature(i), params)
    )


def build_detector(model: SvmModel, i: int) -> LinearDetector:
    """Fold the full support expansion for one foreground index."""
    if not 0 <= i < len(model.fg_table):
        raise IndexError(f"foreground index {i} out of range")
    sv_weights = np.array(
        [fold_support_weight(model, s, i) for s in range(len(model.support))]
    )
    weights = sv_weights @ model.support_features
    return LinearDetector(
        weights=weights,
        bias=model.bias,
        fg_index=i,
        subclass=int(model.fg_table.subclasses[i]),
        sv_weights=sv_weights,
    )


def build_family(model: SvmModel) -> DetectorFamily:
    """One detector per foreground-table entry, folded in a single batch."""
    if len(model.support) == 0:
        raise ValueError("model has no support vectors")
    fgd = foreground_distances(model.fg_table, model.distance_mode)
    # (n_fg, n_support) within-class factors between each detector's
    # foreground feature and each support tuple's assigned foreground.
    theta = np.exp(-model.eta * fgd)[np.ix_(np.arange(len(model.fg_table)), model.support_fg_indices)]
    sv_weight_matrix = theta * model.signed_weights[np.newaxis, :]
    weight_matrix = sv_weight_matrix @ model.support_features
    return DetectorFamily(
        weight_matrix=weight_matrix,
        bias=model.bias,
        fg_indices=np.arange(len(model.fg_table), dtype=np.intp),
        subclasses=np.asarray(model.fg_table.subclasses, dtype=np.intp),
        sv_weight_matrix=sv_weight_matrix,
        model_fingerprint=model.fingerprint(),
        shared_sv_count=len(model.support),
    )


def save_family(family: DetectorFamily, path: Path | str) -> None:
    meta = {
        "kind": "detector-family",
        "bias": family.bias,
        "model_fingerprint": family.model_fingerprint,
        "shared_sv_count": family.shared_sv_count,
    }
    arrays = {
        "weight_matrix": family.weight_matrix,
        "fg_indices": np.asarray(family.fg_indices, dtype=np.int64),
        "subclasses": np.asarray(family.subclasses, dtype=np.int64),
        "sv_weight_matrix": family.sv_weight_matrix,
    }
    modelio.save(path, meta, arrays)


def load_family(path: Path | str) -> DetectorFamily:
    meta, arrays = modelio.load(path)
    if meta.get("kind") != "detector-family":
        raise ValueError(f"{path} is not a detector-family file")
    return DetectorFamily(
        weight_matrix=arrays["weight_matrix"],
        bias=float(meta["bias"]),
        fg_indices=arrays["fg_indices"].astype(np.intp),
        subclasses=arrays["subclasses"].astype(np.intp),
        sv_weight_matrix=arrays["sv_weight_matrix"],
        model_fingerprint=str(meta["model_fingerprint"]),
        shared_sv_count=int(meta["shared_sv_count"]),
    )
