"""Command-line pipeline driver.

Stages: synth (scene generation), train (sampling + bootstrap), cluster
(family folding + representative selection), detect (sliding-window scan),
eval (matching + metrics), and pipeline (all of the above in order).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 training did
not converge (artifacts are still written).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_run_config
from .clustering import select_representatives, write_report
from .dataio import DataError, load_image, load_manifest, save_image, synth_dataset, sample_training_sets
from .detect import Detection, group_detections, render_detections, scan_image
from .evaluation import compute_metrics, format_report, match_dataset
from .family import build_family, load_family, save_family
from .hog import compute_hog_batch
from .trainer import bootstrap_train, load_model, save_model

MODEL_FORMAT_VERSION = 1


class StageFailure(Exception):
    def __init__(self, exit_code: int, message: str) -> None:
        super().__init__(message)
        self.exit_code = exit_code


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="multikernel",
        description="multiplicative-kernel detector family pipeline",
    )
    parser.add_argument(
        "--version", action="store_true", help="print artifact and format versions"
    )
    parser.add_argument("--config", type=Path, default=None, help="run config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )
    parser.add_argument(
        "command",
        nargs="?",
        choices=["synth", "train", "cluster", "detect", "eval", "pipeline"],
        help="pipeline stage to run",
    )
    args = parser.parse_args(argv)

    if args.version:
        print(f"multikernel {__version__} (artifact format v{MODEL_FORMAT_VERSION})")
        return 0
    if args.command is None:
        parser.print_usage()
        return 2

    try:
        cfg = load_run_config(args.config, args.overrides)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2

    if cfg.threads == 0:
        cfg.threads = os.cpu_count() or 1

    stages = {
        "synth": [run_synth],
        "train": [run_train],
        "cluster": [run_cluster],
        "detect": [run_detect],
        "eval": [run_eval],
        "pipeline": [run_synth, run_train, run_cluster, run_detect, run_eval],
    }[args.command]

    exit_code = 0
    try:
        for stage in stages:
            code = stage(cfg)
            exit_code = max(exit_code, code)
    except StageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return 3
    except (FileNotFoundError, ValueError) as exc:
        # Missing or corrupt stage artifacts (model/family files etc.).
        print(f"error: data: {exc}", file=sys.stderr)
        return 3
    return exit_code


def run_synth(cfg: RunConfig) -> int:
    train = synth_dataset(cfg.synth_config("train"), cfg.data_dir / "train")
    test = synth_dataset(cfg.synth_config("test"), cfg.data_dir / "test")
    print(
        f"synth: {len(train.images)} train scenes ({len(train.annotations)} signs), "
        f"{len(test.images)} test scenes ({len(test.annotations)} signs)"
    )
    return 0


def run_train(cfg: RunConfig) -> int:
    manifest = load_manifest(cfg.path("train_manifest"))
    foreground_patches, negative_patches = sample_training_sets(
        manifest, cfg.sampling_config()
    )
    hog_cfg = cfg.hog_config()
    fg_features = compute_hog_batch(
        np.stack([p for p, _ in foreground_patches]), hog_cfg
    )
    neg_features = compute_hog_batch(np.stack(negative_patches), hog_cfg)
    foregrounds = [
        (fg_features[i], v) for i, (_, v) in enumerate(foreground_patches)
    ]
    model = bootstrap_train(foregrounds, list(neg_features), cfg.bootstrap_config())
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    save_model(model, cfg.path("model"))
    print(
        f"train: {len(model.fg_table)} foregrounds, {len(model.support)} support vectors, "
        f"eta={model.eta}, rounds={model.rounds_run}, converged={model.converged}"
    )
    if not (model.converged and model.smo_converged):
        raise StageFailure(4, "training did not converge (model file written)")
    return 0


def run_cluster(cfg: RunConfig) -> int:
    model = load_model(cfg.path("model"))
    family = build_family(model)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    save_family(family, cfg.path("family"))
    reduced, report = select_representatives(family, cfg.kselect_config())
    save_family(reduced, cfg.path("representatives"))
    write_report(report, cfg.path("report"))
    ratio = 100.0 * report.selected_fraction
    print(
        f"cluster: {len(family)} detectors -> k={report.selected_k} "
        f"({ratio:.0f}% of family; reference ratio is ~30%)"
    )
    if report.warning:
        print(f"cluster: warning: {report.warning}")
    return 0


def run_detect(cfg: RunConfig) -> int:
    reps_path = cfg.path("representatives")
    family = load_family(reps_path if reps_path.is_file() else cfg.path("family"))
    manifest = load_manifest(cfg.path("test_manifest"))
    scan_cfg = cfg.scan_config()
    hog_cfg = cfg.hog_config()
    lines = ["image_id,x,y,w,h,score,subclass"]
    total = 0
    annotated_dir = cfg.out_dir / "annotated"
    if cfg.dump_annotated:
        annotated_dir.mkdir(parents=True, exist_ok=True)
    for info in manifest.images:
        image = load_image(info.path)
        dets = scan_image(image, family, scan_cfg, hog_cfg)
        dets = group_detections(dets, scan_cfg.min_neighbors)
        for d in dets:
            x, y, w, h = d.bbox
            lines.append(f"{info.image_id},{x},{y},{w},{h},{d.score!r},{d.subclass}")
        total += len(dets)
        if cfg.dump_annotated:
            save_image(annotated_dir / info.image_id, render_detections(image, dets))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    cfg.path("detections").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"detect: {total} detections over {len(manifest.images)} images")
    return 0


def read_detections_csv(path: Path) -> dict[str, list[Detection]]:
    if not path.is_file():
        raise DataError(f"detections file not found: {path}")
    out: dict[str, list[Detection]] = {}
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "image_id,x,y,w,h,score,subclass":
        raise DataError(f"missing detections header in {path}")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise DataError(f"{path.name}:{lineno}: malformed detection row")
        image_id = parts[0]
        x, y, w, h = (int(v) for v in parts[1:5])
        out.setdefault(image_id, []).append(
            Detection(
                bbox=(x, y, w, h),
                score=float(parts[5]),
                subclass=int(parts[6]),
                detector_fg_index=-1,
            )
        )
    return out


def run_eval(cfg: RunConfig) -> int:
    manifest = load_manifest(cfg.path("test_manifest"))
    dets_by_image = read_detections_csv(cfg.path("detections"))
    truth_by_image: dict[str, list] = {im.image_id: [] for im in manifest.images}
    for ann in manifest.annotations:
        truth_by_image[ann.image_id].append(ann)
    result = match_dataset(dets_by_image, truth_by_image, cfg.iou_threshold)
    n_signs = max(len(manifest.annotations), 1)
    metrics = compute_metrics(result, n_signs=n_signs, n_images=len(manifest.images))
    report = format_report(metrics, name="synthetic")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    cfg.path("metrics").write_text(report + "\n", encoding="utf-8")
    print(report)
    return 0


if __name__ == "__main__":
    sys.exit(main())
