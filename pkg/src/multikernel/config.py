"""Flat key=value run configuration for the pipeline driver.

The file holds one ``section.key=value`` pair per line (``#`` comments and
blank lines ignored); ``--set`` overrides use the same syntax. A single
global seed fans out to the per-stage seeds by fixed offsets so each stage
is independently reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .clustering import KSelectConfig
from .dataio import SamplingConfig, SynthConfig
from .detect import ScanConfig
from .hog import HogConfig
from .svm import SmoConfig
from .trainer import BootstrapConfig

__all__ = ["ConfigError", "RunConfig", "parse_config_text", "load_run_config"]

SEED_OFFSETS = {
    "synth_train": 1,
    "synth_test": 2,
    "sampling": 3,
    "bootstrap": 4,
    "smo": 5,
    "cluster": 6,
}


class ConfigError(Exception):
    """Raised for unreadable, unknown, or invariant-violating configuration."""


@dataclass
class RunConfig:
    seed: int = 0
    threads: int = 1
    data_dir: Path = Path("data")
    out_dir: Path = Path("out")
    # synth
    train_scenes: int = 180
    test_scenes: int = 200
    scene_size: int = 160
    signs_min: int = 1
    signs_max: int = 3
    sign_size_min: int = 28
    sign_size_max: int = 64
    noise: float = 0.02
    clutter_min: int = 0
    clutter_max: int = 3
    # sampling
    n_pos_per_subclass: int = 60
    n_negatives: int = 4000
    # hog
    hog_cell: int = 4
    hog_block_cells: int = 2
    hog_bins: int = 9
    hog_epsilon: float = 1e-5
    # kernel / smo
    distance_mode: str = "euclidean"
    svm_c: float = 10.0
    kkt_tol: float = 1e-3
    max_passes: int = 200
    # bootstrap
    max_rounds: int = 4
    per_round_fp_cap: int = 1000
    initial_negatives: int = 1000
    eta_grid: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0)
    cv_folds: int = 3
    # clustering
    start_fraction: float = 0.5
    decay: float = 0.8
    k_min: int = 5
    # scan
    stride: int = 4
    scale_factor: float = 1.2
    min_size: int = 24
    max_size: int = 0  # 0 = unlimited
    min_neighbors: int = 1
    dump_annotated: bool = False
    # eval
    iou_threshold: float = 0.5

    def path(self, name: str) -> Path:
        files = {
            "train_manifest": self.data_dir / "train" / "manifest.csv",
            "test_manifest": self.data_dir / "test" / "manifest.csv",
            "model": self.out_dir / "model.bin",
            "family": self.out_dir / "family.bin",
            "representatives": self.out_dir / "representatives.bin",
            "report": self.out_dir / "cluster_report.csv",
            "detections": self.out_dir / "detections.csv",
            "metrics": self.out_dir / "metrics.txt",
        }
        return files[name]

    def stage_seed(self, stage: str) -> int:
        return self.seed * 1000 + SEED_OFFSETS[stage]

    def synth_config(self, split: str) -> SynthConfig:
        if split == "train":
            n, stage = self.train_scenes, "synth_train"
        else:
            n, stage = self.test_scenes, "synth_test"
        return SynthConfig(
            n_scenes=n,
            scene_size=self.scene_size,
            signs_per_scene=(self.signs_min, self.signs_max),
            sign_size_range=(self.sign_size_min, self.sign_size_max),
            noise=self.noise,
            clutter_per_scene=(self.clutter_min, self.clutter_max),
            seed=self.stage_seed(stage),
            split="train" if split == "train" else "test-scenes",
        )

    def sampling_config(self) -> SamplingConfig:
        return SamplingConfig(
            n_pos_per_subclass=self.n_pos_per_subclass,
            n_negatives=self.n_negatives,
            seed=self.stage_seed("sampling"),
        )

    def hog_config(self) -> HogConfig:
        return HogConfig(
            window=24,
            cell=self.hog_cell,
            block_cells=self.hog_block_cells,
            bins=self.hog_bins,
            epsilon=self.hog_epsilon,
        )

    def smo_config(self) -> SmoConfig:
        return SmoConfig(
            C=self.svm_c,
            kkt_tol=self.kkt_tol,
            max_passes=self.max_passes,
            seed=self.stage_seed("smo"),
        )

    def bootstrap_config(self) -> BootstrapConfig:
        return BootstrapConfig(
            max_rounds=self.max_rounds,
            per_round_fp_cap=self.per_round_fp_cap,
            initial_negatives=self.initial_negatives,
            eta_grid=self.eta_grid,
            cv_folds=self.cv_folds,
            distance_mode=self.distance_mode,
            smo=self.smo_config(),
            seed=self.stage_seed("bootstrap"),
        )

    def kselect_config(self) -> KSelectConfig:
        return KSelectConfig(
            start_fraction=self.start_fraction,
            decay=self.decay,
            k_min=self.k_min,
            seed=self.stage_seed("cluster"),
        )

    def scan_config(self) -> ScanConfig:
        return ScanConfig(
            window=24,
            stride=self.stride,
            scale_factor=self.scale_factor,
            min_size=self.min_size,
            max_size=self.max_size if self.max_size > 0 else None,
            min_neighbors=self.min_neighbors,
            threads=self.threads,
        )


# Maps "section.key" in the config file to RunConfig attributes.
KEY_MAP = {
    "seed": ("seed", int),
    "threads": ("threads", int),
    "paths.data_dir": ("data_dir", Path),
    "paths.out_dir": ("out_dir", Path),
    "synth.train_scenes": ("train_scenes", int),
    "synth.test_scenes": ("test_scenes", int),
    "synth.scene_size": ("scene_size", int),
    "synth.signs_min": ("signs_min", int),
    "synth.signs_max": ("signs_max", int),
    "synth.sign_size_min": ("sign_size_min", int),
    "synth.sign_size_max": ("sign_size_max", int),
    "synth.noise": ("noise", float),
    "synth.clutter_min": ("clutter_min", int),
    "synth.clutter_max": ("clutter_max", int),
    "sample.n_pos_per_subclass": ("n_pos_per_subclass", int),
    "sample.n_negatives": ("n_negatives", int),
    "hog.cell": ("hog_cell", int),
    "hog.block_cells": ("hog_block_cells", int),
    "hog.bins": ("hog_bins", int),
    "hog.epsilon": ("hog_epsilon", float),
    "kernel.distance_mode": ("distance_mode", str),
    "smo.c": ("svm_c", float),
    "smo.kkt_tol": ("kkt_tol", float),
    "smo.max_passes": ("max_passes", int),
    "bootstrap.max_rounds": ("max_rounds", int),
    "bootstrap.per_round_fp_cap": ("per_round_fp_cap", int),
    "bootstrap.initial_negatives": ("initial_negatives", int),
    "bootstrap.eta_grid": ("eta_grid", lambda s: tuple(float(v) for v in s.split())),
    "bootstrap.cv_folds": ("cv_folds", int),
    "cluster.start_fraction": ("start_fraction", float),
    "cluster.decay": ("decay", float),
    "cluster.k_min": ("k_min", int),
    "scan.stride": ("stride", int),
    "scan.scale_factor": ("scale_factor", float),
    "scan.min_size": ("min_size", int),
    "scan.max_size": ("max_size", int),
    "scan.min_neighbors": ("min_neighbors", int),
    "scan.dump_annotated": ("dump_annotated", lambda s: bool(int(s))),
    "eval.iou_threshold": ("iou_threshold", float),
}


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        apply_override(cfg, key.strip(), value.strip())
    return cfg


def apply_override(cfg: RunConfig, key: str, value: str) -> None:
    if key not in KEY_MAP:
        raise ConfigError(f"unknown config key {key!r}")
    attr, conv = KEY_MAP[key]
    try:
        setattr(cfg, attr, conv(value))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None


def load_run_config(path: Path | str | None, overrides: list[str] | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        cfg = parse_config_text(p.read_text(encoding="utf-8"), cfg)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        apply_override(cfg, key.strip(), value.strip())
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    """Build every nested config once so all invariants are checked up front."""
    try:
        cfg.synth_config("train")
        cfg.synth_config("test")
        cfg.sampling_config()
        cfg.hog_config()
        cfg.bootstrap_config()
        cfg.kselect_config()
        cfg.scan_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not 0.0 < cfg.iou_threshold < 1.0:
        raise ConfigError("eval.iou_threshold must lie in (0, 1)")
    if cfg.threads < 0:
        raise ConfigError("threads must be >= 0")
