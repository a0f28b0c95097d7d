"""Cascaded shape regression landmark detection with dynamic domain selection,
fuzzy-weighted domain-specific cascades, context-aware HOG features, and a
2D profile-pose augmentation pipeline."""

from .cascade import (CascadeConfig, DacCsrModel, DetectTrace, TrainingReport,
                      detect, detect_with_trace, train_dac_csr)
from .estimator import DacCsrRegressor
from .evaluation import ErrorNormalization, EvalReport, ced_and_failure, normalized_error
from .features import FeatureConfig, HogConfig, context_features, dense_box_features, hog, \
    sparse_shape_features
from .geometry import (BoundingBox, GrayImage, Sample, Shape, apply_bbox_delta,
                       place_mean_shape, shape_to_bbox)
from .model_io import (DatasetManifest, ManifestEntry, load_dataset, load_manifest,
                       load_model, save_manifest, save_model)
from .subspace import (DomainLayout, FuzzySchedule, ShapeSubspace, fit_shape_subspace,
                       fuzzy_weight, in_ellipse, membership_word, normalize_shape,
                       predict_domain, project, training_memberships)
from .synthetic import SyntheticDataset, SyntheticSpec, generate

__version__ = "0.1.0"

__all__ = [
    "BoundingBox", "CascadeConfig", "DacCsrModel", "DacCsrRegressor", "DatasetManifest",
    "DetectTrace", "DomainLayout", "ErrorNormalization", "EvalReport", "FeatureConfig",
    "FuzzySchedule", "GrayImage", "HogConfig", "ManifestEntry", "Sample", "Shape",
    "ShapeSubspace", "SyntheticDataset", "SyntheticSpec", "TrainingReport",
    "apply_bbox_delta", "ced_and_failure", "context_features", "dense_box_features",
    "detect", "detect_with_trace", "fit_shape_subspace", "fuzzy_weight", "generate",
    "hog", "in_ellipse", "load_dataset", "load_manifest", "load_model",
    "membership_word", "normalize_shape", "normalized_error", "place_mean_shape",
    "predict_domain", "project", "save_manifest", "save_model", "shape_to_bbox",
    "sparse_shape_features", "train_dac_csr", "training_memberships",
]
