"""Histogram-of-oriented-gradients descriptors for square grayscale patches.

The descriptor uses unsigned gradient orientations in [0, 180), per-cell
orientation histograms with linear votes split between the two nearest bin
centers, and per-block L2 normalization of 2x2 cell groups with overlapping
block stride. Votes are interpolated in orientation only, not spatially.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

__all__ = ["HogConfig", "hog_dim", "compute_hog", "compute_hog_batch"]


@dataclass(frozen=True)
class HogConfig:
    """Descriptor layout: square window split into cells, cells grouped
    into overlapping normalization blocks."""

    window: int = 24
    cell: int = 4
    block_cells: int = 2
    block_stride_cells: int = 1
    bins: int = 9
    epsilon: float = 1e-5

    def __post_init__(self) -> None:
        if self.window <= 0 or self.cell <= 0:
            raise ValueError("window and cell must be positive")
        if self.window % self.cell != 0:
            raise ValueError("window must be divisible by cell size")
        if self.bins < 1:
            raise ValueError("bins must be >= 1")
        cells = self.window // self.cell
        if self.block_cells > cells:
            raise ValueError("block does not fit inside the window")
        if (cells - self.block_cells) % self.block_stride_cells != 0:
            raise ValueError("block stride must tile the cell grid exactly")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    @property
    def cells_per_side(self) -> int:
        return self.window // self.cell

    @property
    def blocks_per_side(self) -> int:
        return (self.cells_per_side - self.block_cells) // self.block_stride_cells + 1

    def fingerprint(self) -> str:
        """Stable hash identifying the descriptor layout."""
        key = (
            f"hog:{self.window}:{self.cell}:{self.block_cells}:"
            f"{self.block_stride_cells}:{self.bins}:{self.epsilon!r}"
        )
        return hashlib.sha256(key.encode()).hexdigest()[:16]


def hog_dim(cfg: HogConfig) -> int:
    """Descriptor length: blocks x blocks x (cells-per-block x bins)."""
    return cfg.blocks_per_side**2 * cfg.block_cells**2 * cfg.bins


def compute_hog(patch: np.ndarray, cfg: HogConfig = HogConfig()) -> np.ndarray:
    """Descriptor for a single window-sized patch (float values in [0, 1])."""
    patch = np.asarray(patch, dtype=np.float64)
    if patch.shape != (cfg.window, cfg.window):
        raise ValueError(
            f"patch shape {patch.shape} does not match window {cfg.window}"
        )
    return compute_hog_batch(patch[np.newaxis], cfg)[0]


def compute_hog_batch(patches: np.ndarray, cfg: HogConfig = HogConfig()) -> np.ndarray:
    """Descriptors for a stack of patches, shape (n, window, window) -> (n, dim).

    The batch path performs the exact per-patch arithmetic of compute_hog,
    vectorized over the leading axis, so results are bit-identical to
    one-at-a-time evaluation.
    """
    patches = np.asarray(patches, dtype=np.float64)
    if patches.ndim != 3 or patches.shape[1:] != (cfg.window, cfg.window):
        raise ValueError(
            f"expected (n, {cfg.window}, {cfg.window}) patch stack, got {patches.shape}"
        )
    n = patches.shape[0]
    if n == 0:
        return np.zeros((0, hog_dim(cfg)))

    gx, gy = _gradients(patches)
    mag = np.hypot(gx, gy)
    ang = np.arctan2(gy, gx) % np.pi

    # Linear orientation vote between the two nearest bin centers (centers at
    # b * pi/bins, wrapping at pi for unsigned gradients).
    bin_width = np.pi / cfg.bins
    t = ang / bin_width
    lo = np.floor(t)
    frac = t - lo
    lo = lo.astype(np.intp) % cfg.bins
    hi = (lo + 1) % cfg.bins

    cells = cfg.cells_per_side
    hist = _cell_histograms(mag, lo, hi, frac, n, cells, cfg)

    # Overlapping blocks: gather block_cells x block_cells cell groups.
    bc, stride = cfg.block_cells, cfg.block_stride_cells
    nb = cfg.blocks_per_side
    windows = np.lib.stride_tricks.sliding_window_view(hist, (bc, bc), axis=(1, 2))
    blocks = windows[:, ::stride, ::stride]  # (n, nb, nb, bins, bc, bc)
    blocks = np.ascontiguousarray(np.moveaxis(blocks, 3, 5))  # (n, nb, nb, bc, bc, bins)
    blocks = blocks.reshape(n, nb, nb, bc * bc * cfg.bins)

    norms = np.sqrt(np.sum(blocks**2, axis=-1, keepdims=True) + cfg.epsilon**2)
    blocks = blocks / norms
    return blocks.reshape(n, hog_dim(cfg))


def _gradients(patches: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Centered differences with replicated border pixels."""
    gx = np.empty_like(patches)
    gx[:, :, 1:-1] = patches[:, :, 2:] - patches[:, :, :-2]
    gx[:, :, 0] = patches[:, :, 1] - patches[:, :, 0]
    gx[:, :, -1] = patches[:, :, -1] - patches[:, :, -2]
    gy = np.empty_like(patches)
    gy[:, 1:-1, :] = patches[:, 2:, :] - patches[:, :-2, :]
    gy[:, 0, :] = patches[:, 1, :] - patches[:, 0, :]
    gy[:, -1, :] = patches[:, -1, :] - patches[:, -2, :]
    return gx, gy


def _cell_histograms(
    mag: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    frac: np.ndarray,
    n: int,
    cells: int,
    cfg: HogConfig,
) -> np.ndarray:
    """Accumulate per-cell orientation histograms via a flat bincount."""
    w = cfg.window
    ys, xs = np.meshgrid(np.arange(w), np.arange(w), indexing="ij")
    cell_id = (ys // cfg.cell) * cells + (xs // cfg.cell)  # (w, w)
    base = (
        np.arange(n, dtype=np.intp)[:, None, None] * (cells * cells) + cell_id
    ) * cfg.bins
    idx = np.concatenate([(base + lo).ravel(), (base + hi).ravel()])
    votes = np.concatenate([(mag * (1.0 - frac)).ravel(), (mag * frac).ravel()])
    flat = np.bincount(idx, weights=votes, minlength=n * cells * cells * cfg.bins)
    return flat.reshape(n, cells, cells, cfg.bins)
