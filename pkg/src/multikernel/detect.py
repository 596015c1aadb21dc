"""Multi-scale sliding-window detection with the folded detector family.

An image pyramid is built by repeated downscaling; at every level a fixed
window slides at the configured stride, each window's descriptor is scored
by all detectors, and the maximum response decides. Windows whose best
response clears the threshold become detections labeled with the winning
detector's subclass, mapped back to original-image coordinates. Output is
ordered by (pyramid level, y, x), so chunked or threaded evaluation merges
to the same list.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataio import resize_bilinear
from .family import DetectorFamily
from .hog import HogConfig, compute_hog_batch

__all__ = [
    "ScanConfig",
    "Detection",
    "classify_window",
    "scan_image",
    "group_detections",
    "render_detections",
]


@dataclass(frozen=True)
class ScanConfig:
    window: int = 24
    stride: int = 4
    scale_factor: float = 1.2
    min_size: int = 24
    max_size: int | None = None
    score_threshold: float = 0.0
    min_neighbors: int = 0
    threads: int = 1

    def __post_init__(self) -> None:
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.scale_factor <= 1.0:
            raise ValueError("scale_factor must be > 1")
        if self.min_size < self.window:
            raise ValueError("min_size cannot be below the window size")
        if self.max_size is not None and self.max_size < self.min_size:
            raise ValueError("max_size must be >= min_size")
        if self.score_threshold < 0.0:
            raise ValueError("score_threshold must be >= 0")
        if self.min_neighbors < 0:
            raise ValueError("min_neighbors must be >= 0")


@dataclass(frozen=True)
class Detection:
    bbox: tuple[int, int, int, int]  # x, y, w, h in original image pixels
    score: float
    subclass: int
    detector_fg_index: int


def classify_window(x: np.ndarray, family: DetectorFamily) -> tuple[float, int]:
    """Best detector response for one descriptor and the winning detector's
    position in the family (ties toward the lowest fg_index)."""
    if len(family) == 0:
        raise ValueError("empty detector family")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (family.weight_matrix.shape[1],):
        raise ValueError(
            f"descriptor length {x.shape} does not match detectors "
            f"({family.weight_matrix.shape[1]})"
        )
    responses = family.weight_matrix @ x + family.bias
    winner = int(np.argmax(responses))
    return float(responses[winner]), winner


def pyramid_levels(
    height: int, width: int, cfg: ScanConfig
) -> list[tuple[int, int, int]]:
    """(level, level_height, level_width) for every usable pyramid level."""
    levels = []
    level = 0
    h, w = height, width
    while h >= cfg.window and w >= cfg.window:
        levels.append((level, h, w))
        level += 1
        h = int(round(height / cfg.scale_factor**level))
        w = int(round(width / cfg.scale_factor**level))
        if levels and (h, w) >= (levels[-1][1], levels[-1][2]):
            break  # rounding stalled; cannot shrink further
    return levels


def _object_size_at(level_h: int, level_w: int, orig_h: int, orig_w: int, window: int) -> float:
    return window * max(orig_h / level_h, orig_w / level_w)


def _scan_level(
    image: np.ndarray,
    level_h: int,
    level_w: int,
    family: DetectorFamily,
    cfg: ScanConfig,
    hog_cfg: HogConfig,
) -> list[Detection]:
    orig_h, orig_w = image.shape
    scaled = (
        image
        if (level_h, level_w) == image.shape
        else resize_bilinear(image, level_h, level_w)
    )
    win = cfg.window
    ys = np.arange(0, level_h - win + 1, cfg.stride)
    xs = np.arange(0, level_w - win + 1, cfg.stride)
    if len(ys) == 0 or len(xs) == 0:
        return []

    # All windows at this level as one batch, in (y, x) raster order.
    windows = np.lib.stride_tricks.sliding_window_view(scaled, (win, win))
    patches = windows[np.ix_(ys, xs)].reshape(-1, win, win)
    descriptors = compute_hog_batch(patches, hog_cfg)
    responses = descriptors @ family.weight_matrix.T + family.bias
    winners = np.argmax(responses, axis=1)
    scores = responses[np.arange(len(responses)), winners]

    fy = orig_h / level_h
    fx = orig_w / level_w
    out = []
    keep = np.flatnonzero(scores > cfg.score_threshold)
    for flat in keep:
        wy = ys[flat // len(xs)]
        wx = xs[flat % len(xs)]
        x0 = int(round(wx * fx))
        y0 = int(round(wy * fy))
        bw = int(round(win * fx))
        bh = int(round(win * fy))
        x0 = min(max(x0, 0), orig_w - 1)
        y0 = min(max(y0, 0), orig_h - 1)
        bw = min(bw, orig_w - x0)
        bh = min(bh, orig_h - y0)
        pos = int(winners[flat])
        out.append(
            Detection(
                bbox=(x0, y0, bw, bh),
                score=float(scores[flat]),
                subclass=int(family.subclasses[pos]),
                detector_fg_index=int(family.fg_indices[pos]),
            )
        )
    return out


def scan_image(
    image: np.ndarray,
    family: DetectorFamily,
    cfg: ScanConfig = ScanConfig(),
    hog_cfg: HogConfig = HogConfig(),
) -> list[Detection]:
    """Scan the pyramid and return detections in (level, y, x) order.

    Levels are independent work units; with threads > 1 they are evaluated
    concurrently and merged in level order, which keeps the output identical
    to the single-threaded scan.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("expected a 2-D luminance image")
    orig_h, orig_w = image.shape
    if orig_h < cfg.window or orig_w < cfg.window:
        raise ValueError(f"image {image.shape} is smaller than the scan window")
    if hog_cfg.window != cfg.window:
        raise ValueError("scan window and descriptor window must agree")

    levels = []
    for _, h, w in pyramid_levels(orig_h, orig_w, cfg):
        size = _object_size_at(h, w, orig_h, orig_w, cfg.window)
        if size < cfg.min_size - 1e-9:
            continue
        if cfg.max_size is not None and size > cfg.max_size + 1e-9:
            continue
        levels.append((h, w))

    if cfg.threads > 1 and len(levels) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            chunks = list(
                pool.map(
                    lambda hw: _scan_level(image, hw[0], hw[1], family, cfg, hog_cfg),
                    levels,
                )
            )
    else:
        chunks = [_scan_level(image, h, w, family, cfg, hog_cfg) for h, w in levels]
    return [det for chunk in chunks for det in chunk]


def render_detections(image: np.ndarray, dets: list[Detection]) -> np.ndarray:
    """Copy of the image with a double border (dark outer, bright inner)
    drawn around every detection box."""
    out = np.asarray(image, dtype=np.float64).copy()
    h, w = out.shape
    for d in dets:
        x, y, bw, bh = d.bbox
        for inset, shade in ((0, 0.0), (1, 1.0)):
            x0, y0 = x + inset, y + inset
            x1, y1 = min(x + bw - 1 - inset, w - 1), min(y + bh - 1 - inset, h - 1)
            if x1 <= x0 or y1 <= y0:
                continue
            out[y0, x0 : x1 + 1] = shade
            out[y1, x0 : x1 + 1] = shade
            out[y0 : y1 + 1, x0] = shade
            out[y0 : y1 + 1, x1] = shade
    return out


def _iou(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = max(0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def group_detections(dets: list[Detection], min_neighbors: int = 0) -> list[Detection]:
    """Cluster mutually overlapping detections (IoU >= 0.5, transitive) and
    keep one representative per sufficiently large group.

    min_neighbors = 0 is the identity. Otherwise groups smaller than
    min_neighbors are dropped and each surviving group emits its
    highest-score member carrying the group's majority subclass (majority
    ties resolve to that member's subclass).
    """
    if min_neighbors == 0:
        return list(dets)
    n = len(dets)
    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n):
        for j in range(i + 1, n):
            if _iou(dets[i].bbox, dets[j].bbox) >= 0.5:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)

    out = []
    for root in sorted(groups):
        members = groups[root]
        if len(members) < min_neighbors:
            continue
        best = max(members, key=lambda i: (dets[i].score, -i))
        votes: dict[int, int] = {}
        for i in members:
            votes[dets[i].subclass] = votes.get(dets[i].subclass, 0) + 1
        top = max(votes.values())
        tied = [s for s, c in votes.items() if c == top]
        subclass = tied[0] if len(tied) == 1 else dets[best].subclass
        out.append(
            Detection(
                bbox=dets[best].bbox,
                score=dets[best].score,
                subclass=subclass,
                detector_fg_index=dets[best].detector_fg_index,
            )
        )
    return out
