"""Multiclass sliding-window object detection built on a multiplicative
tuple kernel: one SVM jointly learns detection and subclass discrimination,
folds into a family of shared-support linear detectors, and is compressed
to representative medoids for scanning."""

__version__ = "0.1.0"

from .clustering import (
    Clustering,
    KSelectConfig,
    cosine_complement_distance,
    pam,
    select_representatives,
    silhouette,
)
from .dataio import (
    Annotation,
    DataError,
    DatasetManifest,
    SamplingConfig,
    SynthConfig,
    extract_patch,
    load_manifest,
    sample_training_sets,
    synth_dataset,
)
from .detect import Detection, ScanConfig, classify_window, group_detections, scan_image
from .evaluation import Metrics, compute_metrics, match_dataset, match_detections
from .family import DetectorFamily, LinearDetector, build_detector, build_family
from .hog import HogConfig, compute_hog, compute_hog_batch, hog_dim
from .kernels import (
    ForegroundTable,
    KernelParams,
    TrainingTuple,
    between_class_kernel,
    gram_matrix,
    tuple_kernel,
    within_class_kernel,
)
from .svm import DualSolution, SmoConfig, decision, smo_train
from .trainer import (
    BootstrapConfig,
    SvmModel,
    assign_negative_indices,
    bootstrap_train,
    load_model,
    negative_combination_count,
    save_model,
    select_eta,
)
