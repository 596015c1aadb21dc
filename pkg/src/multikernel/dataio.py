"""Dataset manifests, patch extraction, training-set sampling, and a
deterministic synthetic sign-scene generator.

Images are handled as luminance grids of floats in [0, 1]. RGB input is
converted with the usual 0.299/0.587/0.114 weighting. Patches are cropped
from annotated boxes and rescaled to 24x24 with bilinear interpolation.

The manifest format is a UTF-8 CSV with the header line
``#multikernel-manifest v1``. Each subsequent non-comment line is either a
bare image path (registers an image with no annotations) or
``image_path,x,y,w,h,subclass``. An optional ``#split <tag>`` comment line
records which of the train / test-crops / test-scenes splits the file holds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

__all__ = [
    "DataError",
    "PATCH_SIZE",
    "SUBCLASSES",
    "Annotation",
    "ImageInfo",
    "DatasetManifest",
    "SamplingConfig",
    "SynthConfig",
    "load_image",
    "load_manifest",
    "write_manifest",
    "resize_bilinear",
    "extract_patch",
    "sample_training_sets",
    "synth_dataset",
]

PATCH_SIZE = 24
SUBCLASSES = (1, 2, 3, 4, 5)
MANIFEST_HEADER = "#multikernel-manifest v1"
VALID_SPLITS = ("train", "test-crops", "test-scenes")


class DataError(Exception):
    """Raised for malformed manifests, unreadable images, or impossible
    sampling requests."""


@dataclass(frozen=True)
class Annotation:
    image_id: str
    bbox: tuple[int, int, int, int]  # x, y, w, h in pixels
    subclass: int


@dataclass(frozen=True)
class ImageInfo:
    image_id: str
    path: Path
    width: int
    height: int


@dataclass
class DatasetManifest:
    images: list[ImageInfo]
    annotations: list[Annotation]
    split: str = "train"

    def __post_init__(self) -> None:
        if self.split not in VALID_SPLITS:
            raise DataError(f"unknown split tag {self.split!r}")
        by_id = {im.image_id: im for im in self.images}
        if len(by_id) != len(self.images):
            raise DataError("duplicate image_id in manifest")
        for ann in self.annotations:
            im = by_id.get(ann.image_id)
            if im is None:
                raise DataError(f"annotation references unknown image {ann.image_id!r}")
            if ann.subclass not in SUBCLASSES:
                raise DataError(f"subclass out of range: {ann.subclass}")
            x, y, w, h = ann.bbox
            if w < 1 or h < 1 or x < 0 or y < 0 or x + w > im.width or y + h > im.height:
                raise DataError(f"bbox {ann.bbox} outside image {ann.image_id!r}")

    def image(self, image_id: str) -> ImageInfo:
        for im in self.images:
            if im.image_id == image_id:
                return im
        raise KeyError(image_id)

    def annotations_for(self, image_id: str) -> list[Annotation]:
        return [a for a in self.annotations if a.image_id == image_id]


@dataclass(frozen=True)
class SamplingConfig:
    """How many foregrounds per subclass and how many negative patches to
    draw from the training split."""

    n_pos_per_subclass: int = 200
    n_negatives: int = 4000
    seed: int = 0
    neg_size_range: tuple[int, int] = (24, 96)

    def __post_init__(self) -> None:
        if self.n_pos_per_subclass < 1:
            raise ValueError("n_pos_per_subclass must be >= 1")
        if self.n_negatives < 1:
            raise ValueError("n_negatives must be >= 1")
        lo, hi = self.neg_size_range
        if lo < PATCH_SIZE or hi < lo:
            raise ValueError("neg_size_range must satisfy 24 <= lo <= hi")


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic scene generation: scene count and size, signs per scene,
    background noise and clutter, all driven by one seed."""

    n_scenes: int = 100
    scene_size: int = 160
    signs_per_scene: tuple[int, int] = (1, 3)
    sign_size_range: tuple[int, int] = (28, 64)
    noise: float = 0.02
    clutter_per_scene: tuple[int, int] = (0, 3)
    seed: int = 0
    split: str = "train"

    def __post_init__(self) -> None:
        if self.n_scenes < 1 or self.scene_size < PATCH_SIZE:
            raise ValueError("n_scenes must be >= 1 and scene_size >= 24")
        lo, hi = self.signs_per_scene
        if lo < 0 or hi < lo:
            raise ValueError("signs_per_scene range is invalid")
        slo, shi = self.sign_size_range
        if slo < PATCH_SIZE or shi < slo or shi > self.scene_size:
            raise ValueError("sign_size_range must fit the scene")
        if not 0.0 <= self.noise < 0.5:
            raise ValueError("noise must be in [0, 0.5)")
        if self.split not in VALID_SPLITS:
            raise ValueError(f"unknown split tag {self.split!r}")


# ---------------------------------------------------------------------------
# Image and manifest I/O


def load_image(path: Path | str) -> np.ndarray:
    """Load a PNG as a luminance grid of floats in [0, 1]."""
    try:
        with Image.open(path) as img:
            if img.mode in ("RGB", "RGBA"):
                arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
                return arr @ np.array([0.299, 0.587, 0.114])
            return np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    except FileNotFoundError:
        raise DataError(f"image file not found: {path}") from None


def save_image(path: Path | str, luminance: np.ndarray) -> None:
    """Write a [0, 1] luminance grid as an 8-bit grayscale PNG."""
    data = np.clip(np.rint(np.asarray(luminance) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path, format="PNG")


def load_manifest(path: Path | str) -> DatasetManifest:
    """Parse and validate a manifest file (see module docstring for format)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MANIFEST_HEADER:
        raise DataError(f"missing manifest header line {MANIFEST_HEADER!r}")

    split = "train"
    image_paths: list[str] = []
    seen: set[str] = set()
    raw_annotations: list[tuple[str, tuple[int, int, int, int], int]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line.startswith("#split"):
                split = line.split(None, 1)[1].strip()
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) == 1:
            if parts[0] not in seen:
                seen.add(parts[0])
                image_paths.append(parts[0])
            continue
        if len(parts) != 6:
            raise DataError(f"{path.name}:{lineno}: malformed line {line!r}")
        try:
            x, y, w, h, v = (int(p) for p in parts[1:])
        except ValueError:
            raise DataError(f"{path.name}:{lineno}: non-integer field in {line!r}") from None
        if v not in SUBCLASSES:
            raise DataError(f"{path.name}:{lineno}: subclass out of range: {v}")
        if parts[0] not in seen:
            seen.add(parts[0])
            image_paths.append(parts[0])
        raw_annotations.append((parts[0], (x, y, w, h), v))

    images = []
    for rel in image_paths:
        img_path = (path.parent / rel).resolve()
        if not img_path.is_file():
            raise DataError(f"annotation references unknown image {rel!r}")
        with Image.open(img_path) as img:
            width, height = img.size
        images.append(ImageInfo(image_id=rel, path=img_path, width=width, height=height))

    annotations = [Annotation(i, bbox, v) for i, bbox, v in raw_annotations]
    return DatasetManifest(images=images, annotations=annotations, split=split)


def write_manifest(manifest: DatasetManifest, path: Path | str) -> None:
    """Write a manifest in the CSV format load_manifest reads back."""
    path = Path(path)
    annotated = {a.image_id for a in manifest.annotations}
    lines = [MANIFEST_HEADER, f"#split {manifest.split}"]
    for im in manifest.images:
        if im.image_id not in annotated:
            lines.append(im.image_id)
    for a in manifest.annotations:
        x, y, w, h = a.bbox
        lines.append(f"{a.image_id},{x},{y},{w},{h},{a.subclass}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Patch extraction


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel-center alignment and clamped
    borders. An exact 2x reduction equals 2x2 box averaging."""
    image = np.asarray(image, dtype=np.float64)
    in_h, in_w = image.shape
    sy = in_h / out_h
    sx = in_w / out_w
    fy = (np.arange(out_h) + 0.5) * sy - 0.5
    fx = (np.arange(out_w) + 0.5) * sx - 0.5
    y0 = np.clip(np.floor(fy), 0, in_h - 1).astype(np.intp)
    x0 = np.clip(np.floor(fx), 0, in_w - 1).astype(np.intp)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = np.clip(fy - y0, 0.0, 1.0)[:, None]
    wx = np.clip(fx - x0, 0.0, 1.0)[None, :]
    top = image[np.ix_(y0, x0)] * (1 - wx) + image[np.ix_(y0, x1)] * wx
    bot = image[np.ix_(y1, x0)] * (1 - wx) + image[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def extract_patch(image: np.ndarray, bbox: tuple[int, int, int, int]) -> np.ndarray:
    """Crop a box from a luminance grid and rescale it to 24x24."""
    image = np.asarray(image, dtype=np.float64)
    x, y, w, h = bbox
    if w < 1 or h < 1:
        raise DataError(f"bbox {bbox} has empty extent")
    if x < 0 or y < 0 or x + w > image.shape[1] or y + h > image.shape[0]:
        raise DataError(f"bbox {bbox} out of bounds for image {image.shape}")
    crop = image[y : y + h, x : x + w]
    if crop.shape == (PATCH_SIZE, PATCH_SIZE):
        return crop.copy()
    return resize_bilinear(crop, PATCH_SIZE, PATCH_SIZE)


# ---------------------------------------------------------------------------
# Training-set sampling


def _boxes_intersect(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> bool:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return ax < bx + bw and bx < ax + aw and ay < by + bh and by < ay + ah


def sample_training_sets(
    manifest: DatasetManifest, cfg: SamplingConfig
) -> tuple[list[tuple[np.ndarray, int]], list[np.ndarray]]:
    """Draw per-subclass foreground patches and sign-free negative patches.

    Returns (foregrounds, negatives) where foregrounds is a list of
    (24x24 patch, subclass) pairs, at most n_pos_per_subclass per subclass
    (all available if fewer), and negatives is exactly n_negatives patches
    with zero overlap against every annotated box. Deterministic per seed.
    """
    if manifest.split != "train":
        raise DataError(f"sampling requires the train split, got {manifest.split!r}")
    rng = np.random.default_rng(cfg.seed)
    cache: dict[str, np.ndarray] = {}

    def image_of(image_id: str) -> np.ndarray:
        if image_id not in cache:
            cache[image_id] = load_image(manifest.image(image_id).path)
        return cache[image_id]

    foregrounds: list[tuple[np.ndarray, int]] = []
    for v in SUBCLASSES:
        anns = [a for a in manifest.annotations if a.subclass == v]
        if not anns:
            raise DataError(f"subclass {v} has no annotations in the training split")
        order = rng.permutation(len(anns))[: min(len(anns), cfg.n_pos_per_subclass)]
        for idx in sorted(order):
            a = anns[idx]
            foregrounds.append((extract_patch(image_of(a.image_id), a.bbox), v))

    negatives: list[np.ndarray] = []
    lo, hi = cfg.neg_size_range
    max_attempts = 200 * cfg.n_negatives
    attempts = 0
    while len(negatives) < cfg.n_negatives:
        if attempts >= max_attempts:
            raise DataError("insufficient sign-free area for negative sampling")
        attempts += 1
        im = manifest.images[int(rng.integers(len(manifest.images)))]
        cap = min(hi, im.width, im.height)
        if cap < lo:
            continue
        size = int(rng.integers(lo, cap + 1))
        x = int(rng.integers(0, im.width - size + 1))
        y = int(rng.integers(0, im.height - size + 1))
        box = (x, y, size, size)
        if any(
            _boxes_intersect(box, a.bbox) for a in manifest.annotations_for(im.image_id)
        ):
            continue
        negatives.append(extract_patch(image_of(im.image_id), box))
    return foregrounds, negatives


# ---------------------------------------------------------------------------
# Synthetic scene generation


def _render_sign(size: int, subclass: int, fill: float, dark: float) -> np.ndarray:
    """Shape mask for one sign tile. Returns an array of luminance values
    with NaN where the scene background should show through.

    Recipes keep the shape structure distinctive per subclass: triangle with
    a thick border, circle with a diagonal bar, diamond, square, and circle
    with a thick rim plus interior strokes.
    """
    t = (np.arange(size) + 0.5) / size
    xs, ys = np.meshgrid(t, t)
    tile = np.full((size, size), np.nan)

    if subclass == 1:  # triangle, thick border
        inside = (ys >= 0.12) & (ys <= 0.95) & (np.abs(xs - 0.5) <= 0.52 * (ys - 0.08))
        inner = (ys >= 0.30) & (ys <= 0.82) & (np.abs(xs - 0.5) <= 0.40 * (ys - 0.24))
        tile[inside] = dark
        tile[inner] = fill
    elif subclass == 2:  # circle with a diagonal bar
        r = np.hypot(xs - 0.5, ys - 0.5)
        disc = r <= 0.46
        rim = disc & (r >= 0.38)
        bar = disc & (np.abs((xs - 0.5) - (ys - 0.5)) <= 0.08)
        tile[disc] = fill
        tile[rim] = dark
        tile[bar] = dark
    elif subclass == 3:  # diamond
        d = np.abs(xs - 0.5) + np.abs(ys - 0.5)
        outer = d <= 0.48
        inner = d <= 0.34
        tile[outer] = dark
        tile[inner] = fill
    elif subclass == 4:  # square
        outer = (np.abs(xs - 0.5) <= 0.44) & (np.abs(ys - 0.5) <= 0.44)
        inner = (np.abs(xs - 0.5) <= 0.32) & (np.abs(ys - 0.5) <= 0.32)
        tile[outer] = dark
        tile[inner] = fill
    elif subclass == 5:  # circle with thick rim and interior strokes
        r = np.hypot(xs - 0.5, ys - 0.5)
        disc = r <= 0.48
        rim = disc & (r >= 0.30)
        strokes = (
            (np.abs(ys - 0.5) <= 0.14)
            & ((np.abs(xs - 0.38) <= 0.05) | (np.abs(xs - 0.62) <= 0.05))
        )
        tile[disc] = fill
        tile[rim] = dark
        tile[strokes & (r < 0.30)] = dark
    else:
        raise ValueError(f"unknown subclass {subclass}")
    return tile


def _add_clutter(scene: np.ndarray, rng: np.random.Generator, count: int) -> None:
    """Unannotated structure painted in place: bars, soft blobs, and
    sign-like distractor shapes that give hard-negative mining something
    to find (plain discs, hollow rings, crosses; none match a recipe)."""
    n = scene.shape[0]
    ys, xs = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    for _ in range(count):
        kind = int(rng.integers(5))
        if kind == 0:  # vertical bar
            x = int(rng.integers(0, n - 2))
            w = int(rng.integers(2, 5))
            scene[:, x : x + w] += float(rng.uniform(-0.25, 0.25))
        elif kind == 1:  # horizontal bar
            y = int(rng.integers(0, n - 2))
            h = int(rng.integers(2, 5))
            scene[y : y + h, :] += float(rng.uniform(-0.25, 0.25))
        elif kind == 2:  # soft blob
            cy, cx = rng.uniform(0, n, size=2)
            rad = float(rng.uniform(6, 18))
            shade = float(rng.uniform(-0.2, 0.2))
            bump = np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * rad**2))
            scene += shade * bump
        else:  # sign-like distractor: disc, ring, or cross
            size = int(rng.integers(18, 44))
            if size >= n - 2:
                continue
            x0 = int(rng.integers(0, n - size))
            y0 = int(rng.integers(0, n - size))
            t = (np.arange(size) + 0.5) / size
            u, v = np.meshgrid(t, t)
            bright = float(rng.uniform(0.70, 0.88))
            shape = int(rng.integers(3))
            if shape == 0:
                mask = np.hypot(u - 0.5, v - 0.5) <= 0.42  # plain disc
            elif shape == 1:
                r = np.hypot(u - 0.5, v - 0.5)
                mask = (r <= 0.46) & (r >= 0.22)  # hollow ring
            else:
                mask = (np.abs(u - 0.5) <= 0.10) | (np.abs(v - 0.5) <= 0.10)  # cross
            region = scene[y0 : y0 + size, x0 : x0 + size]
            region[mask] = bright


def synth_dataset(cfg: SynthConfig, out_dir: Path | str) -> DatasetManifest:
    """Generate scenes with planted, non-overlapping signs and write them
    plus a manifest under out_dir. Bit-deterministic for a fixed config."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    n = cfg.scene_size

    # Balanced subclass deck so every subclass appears ~equally often.
    max_total = cfg.n_scenes * cfg.signs_per_scene[1]
    deck = np.tile(np.array(SUBCLASSES), max_total // len(SUBCLASSES) + 1)
    deck = deck[rng.permutation(len(deck))]
    deck_pos = 0

    images: list[ImageInfo] = []
    annotations: list[Annotation] = []
    planted_log = 0
    for scene_idx in range(cfg.n_scenes):
        base = float(rng.uniform(0.40, 0.55))
        scene = np.full((n, n), base)
        _add_clutter(scene, rng, int(rng.integers(cfg.clutter_per_scene[0], cfg.clutter_per_scene[1] + 1)))

        n_signs = int(rng.integers(cfg.signs_per_scene[0], cfg.signs_per_scene[1] + 1))
        placed: list[tuple[int, int, int, int]] = []
        scene_annotations: list[Annotation] = []
        image_id = f"scene_{scene_idx:04d}.png"
        for _ in range(n_signs):
            subclass = int(deck[deck_pos % len(deck)])
            deck_pos += 1
            ok = False
            for _attempt in range(200):
                size = int(rng.integers(cfg.sign_size_range[0], cfg.sign_size_range[1] + 1))
                if size + 2 >= n:
                    continue
                x = int(rng.integers(1, n - size))
                y = int(rng.integers(1, n - size))
                pad = 4  # keep planted signs separated
                box = (x - pad, y - pad, size + 2 * pad, size + 2 * pad)
                if any(_boxes_intersect(box, p) for p in placed):
                    continue
                ok = True
                break
            if not ok:
                raise DataError(
                    f"scene {scene_idx}: no room to place {n_signs} signs of the requested size"
                )
            fill = float(rng.uniform(0.82, 0.95))
            dark = float(rng.uniform(0.05, 0.18))
            tile = _render_sign(size, subclass, fill, dark)
            region = scene[y : y + size, x : x + size]
            scene[y : y + size, x : x + size] = np.where(np.isnan(tile), region, tile)
            placed.append((x - pad, y - pad, size + 2 * pad, size + 2 * pad))
            scene_annotations.append(Annotation(image_id, (x, y, size, size), subclass))
            planted_log += 1

        if cfg.noise > 0:
            scene = scene + rng.normal(0.0, cfg.noise, size=scene.shape)
        scene = np.clip(scene, 0.0, 1.0)
        save_image(out_dir / image_id, scene)
        images.append(ImageInfo(image_id, (out_dir / image_id).resolve(), n, n))
        annotations.extend(scene_annotations)

    manifest = DatasetManifest(images=images, annotations=annotations, split=cfg.split)
    if len(annotations) != planted_log:
        raise AssertionError("placement log disagrees with annotation count")
    write_manifest(manifest, out_dir / "manifest.csv")
    return manifest
