"""Bootstrap training with hard-negative mining around the tuple-kernel SVM.

Each round trains on all foregrounds plus the currently active negatives,
re-selects the within-class bandwidth eta by stratified cross-validation,
then scores every pool negative under its assigned foreground index. Pool
members with a positive response that are not yet active are appended (up
to a per-round cap). The loop converges when no pool negative scores
positive; active negatives are never removed, so rounds grow monotonically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import modelio
from .kernels import (
    ForegroundTable,
    TrainingTuple,
    foreground_distances,
    kernel_rows,
    multiplicative_gram,
)
from .svm import DualSolution, SmoConfig, smo_train

__all__ = [
    "BootstrapConfig",
    "SvmModel",
    "negative_combination_count",
    "assign_negative_indices",
    "stratified_folds",
    "cross_validate_eta",
    "select_eta",
    "bootstrap_train",
    "model_decision_values",
    "save_model",
    "load_model",
]

# Training sets up to this size get a materialized Gram matrix; larger ones
# fall back to on-demand kernel columns behind a bounded cache.
DENSE_GRAM_LIMIT = 8192


def _train_smo(
    xs: np.ndarray,
    fg_idx: np.ndarray,
    samples: Sequence[TrainingTuple],
    fgd: np.ndarray,
    eta: float,
    smo_cfg: SmoConfig,
):
    n = len(samples)
    if n <= DENSE_GRAM_LIMIT:
        gram = multiplicative_gram(xs, fg_idx, fgd, eta)
        return smo_train(samples, None, smo_cfg, gram=gram)
    theta = np.exp(-eta * fgd)

    def column(i: int) -> np.ndarray:
        return (xs @ xs[i]) * theta[fg_idx, fg_idx[i]]

    diag = np.einsum("ij,ij->i", xs, xs) * theta[fg_idx, fg_idx]
    return smo_train(samples, None, smo_cfg, column_fn=column, diag=diag)


@dataclass(frozen=True)
class BootstrapConfig:
    max_rounds: int = 5
    per_round_fp_cap: int = 1000
    initial_negatives: int = 1000
    eta_grid: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0)
    cv_folds: int = 3
    distance_mode: str = "euclidean"
    smo: SmoConfig = field(default_factory=SmoConfig)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.per_round_fp_cap < 1:
            raise ValueError("per_round_fp_cap must be >= 1")
        if self.initial_negatives < 1:
            raise ValueError("initial_negatives must be >= 1")
        if not self.eta_grid or any(e <= 0 for e in self.eta_grid):
            raise ValueError("eta_grid must be a nonempty tuple of positive reals")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")


@dataclass
class SvmModel:
    """Result of bootstrap training: shared support set with label-signed
    dual weights, bias, the selected eta, and the foreground table every
    detector folds against."""

    support: list[TrainingTuple]
    signed_weights: np.ndarray
    bias: float
    eta: float
    distance_mode: str
    fg_table: ForegroundTable
    rounds_run: int
    converged: bool
    smo_converged: bool = True
    negatives_per_round: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.support) != len(self.signed_weights):
            raise ValueError("one signed weight per support tuple required")

    @property
    def support_features(self) -> np.ndarray:
        return np.stack([t.x for t in self.support])

    @property
    def support_fg_indices(self) -> np.ndarray:
        return np.array([t.fg_index for t in self.support], dtype=np.intp)

    def fingerprint(self) -> str:
        meta, arrays = _model_payload(self)
        return modelio.fingerprint(meta, arrays)


def negative_combination_count(nb: int, nf: int) -> int:
    """Number of distinct (background, foreground-index) training tuples."""
    if nb < 0 or nf < 0:
        raise ValueError("counts must be nonnegative")
    return nb * nf


def assign_negative_indices(
    negatives: Sequence[np.ndarray], table: ForegroundTable, seed: int
) -> list[TrainingTuple]:
    """Turn negative feature vectors into tuples with label -1 and a
    uniformly random foreground index, deterministic per seed."""
    if len(table) == 0:
        raise ValueError("foreground table must be nonempty")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(table), size=len(negatives))
    return [
        TrainingTuple(x=np.asarray(x, dtype=np.float64), fg_index=int(i), label=-1)
        for x, i in zip(negatives, idx)
    ]


def stratified_folds(labels: np.ndarray, k: int, seed: int) -> list[np.ndarray]:
    """Deal each label's (shuffled) indices round-robin into k folds."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for value in np.unique(labels):
        idx = np.flatnonzero(labels == value)
        if len(idx) < k:
            raise ValueError(f"label {value} has fewer than {k} samples")
        idx = idx[rng.permutation(len(idx))]
        for pos, sample in enumerate(idx):
            folds[pos % k].append(int(sample))
    return [np.array(sorted(f), dtype=np.intp) for f in folds]


def cross_validate_eta(
    samples: Sequence[TrainingTuple],
    table: ForegroundTable,
    cfg: BootstrapConfig,
) -> list[tuple[float, float]]:
    """Mean validation accuracy per grid eta over stratified folds (drawn
    with seed cfg.seed + 1, so a caller can reproduce the split)."""
    labels = np.array([t.label for t in samples], dtype=np.float64)
    xs = np.stack([t.x for t in samples])
    fg_idx = np.array([t.fg_index for t in samples], dtype=np.intp)
    fgd = foreground_distances(table, cfg.distance_mode)
    folds = stratified_folds(labels, cfg.cv_folds, cfg.seed + 1)

    # Per-fold training data; the linear Gram part is shared across etas.
    fold_data = []
    for fold in folds:
        mask = np.zeros(len(samples), dtype=bool)
        mask[fold] = True
        tr = np.flatnonzero(~mask)
        xs_tr = xs[tr]
        lin = xs_tr @ xs_tr.T if len(tr) <= DENSE_GRAM_LIMIT else None
        fold_data.append((fold, tr, xs_tr, fg_idx[tr], lin))

    results = []
    for eta in cfg.eta_grid:
        accs = []
        for fold, tr, xs_tr, fg_tr, lin in fold_data:
            samples_tr = [samples[i] for i in tr]
            if lin is not None:
                gram = multiplicative_gram(xs_tr, fg_tr, fgd, eta, lin=lin)
                sol = smo_train(samples_tr, None, cfg.smo, gram=gram)
            else:
                sol = _train_smo(xs_tr, fg_tr, samples_tr, fgd, eta, cfg.smo)
            signed = sol.alphas[sol.sv_indices] * labels[tr][sol.sv_indices]
            rows = kernel_rows(
                xs_tr[sol.sv_indices],
                fg_tr[sol.sv_indices],
                xs[fold],
                fg_idx[fold],
                fgd,
                eta,
            )
            pred = np.where(signed @ rows + sol.bias > 0, 1.0, -1.0)
            accs.append(float(np.mean(pred == labels[fold])))
        results.append((float(eta), float(np.mean(accs))))
    return results


def select_eta(
    samples: Sequence[TrainingTuple],
    table: ForegroundTable,
    cfg: BootstrapConfig,
) -> float:
    """Grid eta with the best mean fold accuracy; ties go to the smallest."""
    if len(cfg.eta_grid) == 1:
        return float(cfg.eta_grid[0])
    scores = dict(cross_validate_eta(samples, table, cfg))
    best_eta = None
    best_acc = -np.inf
    for eta in sorted(scores):
        if scores[eta] > best_acc:
            best_eta, best_acc = eta, scores[eta]
    return float(best_eta)


def bootstrap_train(
    foregrounds: Sequence[tuple[np.ndarray, int]],
    negative_pool: Sequence[np.ndarray],
    cfg: BootstrapConfig,
) -> SvmModel:
    """Run the mining loop and return the folded-ready model."""
    if not foregrounds:
        raise ValueError("at least one foreground sample is required")
    if not len(negative_pool):
        raise ValueError("negative pool must be nonempty")

    table = ForegroundTable(
        features=np.stack([np.asarray(x, dtype=np.float64) for x, _ in foregrounds]),
        subclasses=np.array([v for _, v in foregrounds], dtype=np.intp),
    )
    fg_tuples = [
        TrainingTuple(x=table.features[i], fg_index=i, label=1)
        for i in range(len(table))
    ]
    pool_tuples = assign_negative_indices(negative_pool, table, cfg.seed)
    pool_x = np.stack([t.x for t in pool_tuples])
    pool_fg = np.array([t.fg_index for t in pool_tuples], dtype=np.intp)
    fgd = foreground_distances(table, cfg.distance_mode)

    active = np.zeros(len(pool_tuples), dtype=bool)
    active[: min(cfg.initial_negatives, len(pool_tuples))] = True

    converged = False
    rounds_run = 0
    negatives_per_round: list[int] = []
    eta = float(cfg.eta_grid[0])
    sol: DualSolution | None = None
    samples: list[TrainingTuple] = []

    while rounds_run < cfg.max_rounds:
        rounds_run += 1
        active_idx = np.flatnonzero(active)
        negatives_per_round.append(len(active_idx))
        samples = fg_tuples + [pool_tuples[i] for i in active_idx]
        eta = select_eta(samples, table, cfg)

        xs = np.stack([t.x for t in samples])
        fg_idx = np.array([t.fg_index for t in samples], dtype=np.intp)
        labels = np.array([t.label for t in samples], dtype=np.float64)
        sol = _train_smo(xs, fg_idx, samples, fgd, eta, cfg.smo)

        signed = sol.alphas[sol.sv_indices] * labels[sol.sv_indices]
        sv_x = xs[sol.sv_indices]
        sv_fg = fg_idx[sol.sv_indices]
        pool_scores = (
            signed @ kernel_rows(sv_x, sv_fg, pool_x, pool_fg, fgd, eta) + sol.bias
        )
        false_pos = pool_scores > 0
        if not false_pos.any():
            converged = True
            break
        addable = np.flatnonzero(false_pos & ~active)
        if len(addable) == 0:
            break  # every remaining false positive is already being trained on
        active[addable[: cfg.per_round_fp_cap]] = True

    labels = np.array([t.label for t in samples], dtype=np.float64)
    support = [samples[i] for i in sol.sv_indices]
    signed_weights = sol.alphas[sol.sv_indices] * labels[sol.sv_indices]
    return SvmModel(
        support=support,
        signed_weights=signed_weights,
        bias=sol.bias,
        eta=eta,
        distance_mode=cfg.distance_mode,
        fg_table=table,
        rounds_run=rounds_run,
        converged=converged,
        smo_converged=sol.converged,
        negatives_per_round=negatives_per_round,
    )


def model_decision_values(
    model: SvmModel, xs: np.ndarray, fg_idx: np.ndarray
) -> np.ndarray:
    """Kernel-expansion responses (with bias) for tuples (xs[i], fg_idx[i])."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    fg_idx = np.asarray(fg_idx, dtype=np.intp)
    fgd = foreground_distances(model.fg_table, model.distance_mode)
    rows = kernel_rows(
        model.support_features,
        model.support_fg_indices,
        xs,
        fg_idx,
        fgd,
        model.eta,
    )
    return model.signed_weights @ rows + model.bias


def _model_payload(model: SvmModel) -> tuple[dict, dict[str, np.ndarray]]:
    meta = {
        "kind": "svm-model",
        "eta": model.eta,
        "bias": model.bias,
        "distance_mode": model.distance_mode,
        "rounds_run": model.rounds_run,
        "converged": model.converged,
        "smo_converged": model.smo_converged,
        "negatives_per_round": list(model.negatives_per_round),
    }
    arrays = {
        "fg_features": model.fg_table.features,
        "fg_subclasses": np.asarray(model.fg_table.subclasses, dtype=np.int64),
        "support_x": model.support_features,
        "support_fg": np.asarray(model.support_fg_indices, dtype=np.int64),
        "support_labels": np.array([t.label for t in model.support], dtype=np.int64),
        "signed_weights": np.asarray(model.signed_weights, dtype=np.float64),
    }
    return meta, arrays


def save_model(model: SvmModel, path: Path | str) -> None:
    meta, arrays = _model_payload(model)
    modelio.save(path, meta, arrays)


def load_model(path: Path | str) -> SvmModel:
    meta, arrays = modelio.load(path)
    if meta.get("kind") != "svm-model":
        raise ValueError(f"{path} is not a model file")
    table = ForegroundTable(
        features=arrays["fg_features"], subclasses=arrays["fg_subclasses"]
    )
    support = [
        TrainingTuple(x=x, fg_index=int(i), label=int(label))
        for x, i, label in zip(
            arrays["support_x"], arrays["support_fg"], arrays["support_labels"]
        )
    ]
    return SvmModel(
        support=support,
        signed_weights=arrays["signed_weights"],
        bias=float(meta["bias"]),
        eta=float(meta["eta"]),
        distance_mode=str(meta["distance_mode"]),
        fg_table=table,
        rounds_run=int(meta["rounds_run"]),
        converged=bool(meta["converged"]),
        smo_converged=bool(meta["smo_converged"]),
        negatives_per_round=[int(v) for v in meta["negatives_per_round"]],
    )
