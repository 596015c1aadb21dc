"""Sequential minimal optimization for the soft-margin dual SVM.

Solves max_a sum(a) - 1/2 (a*y)' K (a*y) subject to 0 <= a_i <= C and
sum(a_i * y_i) = 0 for an arbitrary symmetric PSD kernel. Pair selection is
the first-order maximal-violating-pair rule; full-set passes alternate with
passes restricted to the unbounded (0 < a < C) subset. The bias is fixed
after convergence from the average over unbounded support vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .kernels import TrainingTuple

__all__ = ["SmoConfig", "DualSolution", "smo_train", "decision", "dual_objective"]

KernelFn = Callable[[TrainingTuple, TrainingTuple], float]


@dataclass(frozen=True)
class SmoConfig:
    C: float = 10.0
    kkt_tol: float = 1e-3
    max_passes: int = 200
    seed: int = 0
    fit_bias: bool = True

    def __post_init__(self) -> None:
        if self.C <= 0:
            raise ValueError("C must be positive")
        if not 0 < self.kkt_tol <= 0.1:
            raise ValueError("kkt_tol must lie in (0, 0.1]")
        if self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")


@dataclass(frozen=True)
class DualSolution:
    alphas: np.ndarray
    bias: float
    sv_indices: np.ndarray
    converged: bool
    steps: int


def dual_objective(alphas: np.ndarray, labels: np.ndarray, gram: np.ndarray) -> float:
    """Recompute the dual objective from scratch."""
    ay = alphas * labels
    return float(alphas.sum() - 0.5 * (ay @ gram @ ay))


def build_gram(samples: Sequence[TrainingTuple], kernel: KernelFn) -> np.ndarray:
    """Evaluate the kernel callback on every pair; mirror the upper triangle
    so the matrix is exactly symmetric."""
    n = len(samples)
    g = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            g[i, j] = kernel(samples[i], samples[j])
            g[j, i] = g[i, j]
    return g


def smo_train(
    samples: Sequence[TrainingTuple],
    kernel: KernelFn | None,
    cfg: SmoConfig,
    gram: np.ndarray | None = None,
    column_fn: Callable[[int], np.ndarray] | None = None,
    diag: np.ndarray | None = None,
    step_callback: Callable[[np.ndarray], None] | None = None,
) -> DualSolution:
    """Solve the dual problem for labeled sample tuples.

    The kernel can be supplied as a pairwise callback, a precomputed Gram
    matrix, or a column accessor (column_fn(i) -> full kernel column i, for
    problems too large to materialize; columns are cached in a bounded LRU).
    A non-converged run (pass budget exhausted) returns a flagged but still
    box- and equality-feasible solution. The seed shuffles the internal
    sample order, which only affects tie-breaking among equal violators.
    """
    labels = np.array([t.label for t in samples], dtype=np.float64)
    n = len(labels)
    if n == 0:
        raise ValueError("no training samples")
    if np.all(labels > 0) or np.all(labels < 0):
        raise ValueError("training requires at least one sample of each label")
    if gram is None and column_fn is None:
        if kernel is None:
            raise ValueError("a kernel callback, Gram matrix, or column_fn is required")
        gram = build_gram(samples, kernel)

    perm = np.random.default_rng(cfg.seed).permutation(n)
    inv = np.argsort(perm)
    y = labels[perm]
    if gram is not None:
        gram = np.asarray(gram, dtype=np.float64)
        if gram.shape != (n, n):
            raise ValueError(f"Gram shape {gram.shape} does not match {n} samples")
        columns = _DenseColumns(gram[np.ix_(perm, perm)])
    else:
        columns = _CachedColumns(column_fn, perm, diag)

    solver = _Smo(columns, y, cfg)
    if step_callback is not None:
        solver.step_callback = lambda a: step_callback(a[inv].copy())
    converged, steps = solver.run()

    alphas = solver.alphas[inv]
    bias = solver.bias() if cfg.fit_bias else 0.0
    return DualSolution(
        alphas=alphas,
        bias=bias,
        sv_indices=np.flatnonzero(alphas > 0.0),
        converged=converged,
        steps=steps,
    )


def decision(
    samples: Sequence[TrainingTuple],
    sol: DualSolution,
    kernel: KernelFn,
    t: TrainingTuple,
) -> float:
    """Kernel-expansion response sum_s y_s a_s k(sample_s, t) + bias."""
    total = sol.bias
    for s in sol.sv_indices:
        total += samples[s].label * sol.alphas[s] * kernel(samples[s], t)
    return float(total)


class _DenseColumns:
    """Column access over a materialized Gram matrix."""

    def __init__(self, gram: np.ndarray) -> None:
        self.gram = gram
        self.diag = np.diagonal(gram).copy()

    def column(self, i: int) -> np.ndarray:
        return self.gram[:, i]


class _CachedColumns:
    """Column access through a callback, with a bounded LRU of computed
    columns. Indices are translated between solver (permuted) order and the
    caller's order."""

    MAX_CACHED = 512

    def __init__(self, column_fn, perm: np.ndarray, diag: np.ndarray | None) -> None:
        self.column_fn = column_fn
        self.perm = perm
        self.cache: dict[int, np.ndarray] = {}
        if diag is None:
            diag = np.array([float(column_fn(int(o))[o]) for o in perm])
        else:
            diag = np.asarray(diag, dtype=np.float64)[perm]
        self.diag = diag

    def column(self, i: int) -> np.ndarray:
        col = self.cache.pop(i, None)
        if col is None:
            col = np.asarray(self.column_fn(int(self.perm[i])), dtype=np.float64)[
                self.perm
            ]
            if len(self.cache) >= self.MAX_CACHED:
                self.cache.pop(next(iter(self.cache)))
        self.cache[i] = col  # re-insert as most recently used
        return col


class _Smo:
    """Solver state over one (permuted) problem instance."""

    def __init__(self, columns, y: np.ndarray, cfg: SmoConfig) -> None:
        self.cols = columns
        self.y = y
        self.cfg = cfg
        self.n = len(y)
        self.alphas = np.zeros(self.n)
        self.u = np.zeros(self.n)  # decision values without bias
        self.snap = 1e-12 * max(1.0, cfg.C)
        self.step_callback: Callable[[np.ndarray], None] | None = None

    # rho_i = y_i - u_i is the per-sample bias bound: i in I_up requires
    # bias >= rho_i, i in I_low requires bias <= rho_i.
    def rho(self) -> np.ndarray:
        return self.y - self.u

    def masks(self, free_only: bool) -> tuple[np.ndarray, np.ndarray]:
        a, c = self.alphas, self.cfg.C
        if free_only:
            free = (a > 0.0) & (a < c)
            return free, free
        up = ((self.y > 0) & (a < c)) | ((self.y < 0) & (a > 0.0))
        low = ((self.y < 0) & (a < c)) | ((self.y > 0) & (a > 0.0))
        return up, low

    def gap_pair(self, free_only: bool) -> tuple[float, int, int]:
        """Largest KKT violation over the subset and its argmax pair."""
        up, low = self.masks(free_only)
        if not up.any() or not low.any():
            return -np.inf, -1, -1
        rho = self.rho()
        i = int(np.flatnonzero(up)[np.argmax(rho[up])])
        j = int(np.flatnonzero(low)[np.argmin(rho[low])])
        return float(rho[i] - rho[j]), i, j

    def run(self) -> tuple[bool, int]:
        budget = max(self.n, 16)
        steps = 0
        examine_all = True
        for _ in range(self.cfg.max_passes):
            progressed = False
            for _ in range(budget):
                gap, i, j = self.gap_pair(free_only=not examine_all)
                if gap <= self.cfg.kkt_tol:
                    break
                if not self.update(i, j):
                    break
                progressed = True
                steps += 1
            if examine_all:
                gap, _, _ = self.gap_pair(free_only=False)
                if gap <= self.cfg.kkt_tol:
                    return True, steps
                if not progressed:
                    # Largest violator cannot move; a numerical dead end.
                    return False, steps
            examine_all = not examine_all
        gap, _, _ = self.gap_pair(free_only=False)
        return bool(gap <= self.cfg.kkt_tol), steps

    def update(self, i: int, j: int) -> bool:
        a, y, c = self.alphas, self.y, self.cfg.C
        if i == j:
            return False
        col_i = self.cols.column(i)
        col_j = self.cols.column(j)
        e_i = self.u[i] - y[i]
        e_j = self.u[j] - y[j]
        if y[i] != y[j]:
            lo = max(0.0, a[j] - a[i])
            hi = min(c, c + a[j] - a[i])
        else:
            lo = max(0.0, a[i] + a[j] - c)
            hi = min(c, a[i] + a[j])
        if hi - lo <= 0.0:
            return False
        kappa = self.cols.diag[i] + self.cols.diag[j] - 2.0 * col_i[j]
        if kappa > 1e-12:
            aj_new = a[j] + y[j] * (e_i - e_j) / kappa
            aj_new = min(max(aj_new, lo), hi)
        else:
            # Flat direction: the objective is linear along the pair line.
            slope = y[j] * (e_i - e_j)
            if slope > 0.0:
                aj_new = hi
            elif slope < 0.0:
                aj_new = lo
            else:
                return False
        aj_new = self._snap_bounds(aj_new)
        delta_j = aj_new - a[j]
        if delta_j == 0.0:
            return False
        ai_new = self._snap_bounds(a[i] + y[i] * y[j] * (a[j] - aj_new))
        delta_i = ai_new - a[i]
        a[i] = ai_new
        a[j] = aj_new
        self.u += y[i] * delta_i * col_i + y[j] * delta_j * col_j
        if self.step_callback is not None:
            self.step_callback(a)
        return True

    def _snap_bounds(self, value: float) -> float:
        if abs(value) <= self.snap:
            return 0.0
        if abs(value - self.cfg.C) <= self.snap:
            return self.cfg.C
        return min(max(value, 0.0), self.cfg.C)

    def bias(self) -> float:
        rho = self.rho()
        free = (self.alphas > 0.0) & (self.alphas < self.cfg.C)
        if free.any():
            return float(rho[free].mean())
        up, low = self.masks(free_only=False)
        hi = rho[up].max() if up.any() else 0.0
        lo = rho[low].min() if low.any() else 0.0
        return float(0.5 * (hi + lo))
