"""Error metrics and aggregate reports: normalized point-to-point error,
cumulative error distribution (CED), and failure rate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .geometry import BoundingBox, Shape

CED_MAX_THRESHOLD = 0.10
CED_N_THRESHOLDS = 201
DEFAULT_FAILURE_THRESHOLD = 0.10


@dataclass(frozen=True)
class ErrorNormalization:
    """How to normalize raw pixel errors.

    ``face_size`` divides by sqrt(width * height) of the ground-truth tight
    box; ``inter_ocular`` divides by the distance between two designated
    ground-truth landmarks (0-based index pair).
    """

    mode: str = "face_size"
    eye_indices: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        if self.mode not in ("face_size", "inter_ocular"):
            raise ValueError(f"unknown normalization mode {self.mode!r}")
        if self.mode == "inter_ocular":
            if (self.eye_indices is None or len(self.eye_indices) != 2
                    or self.eye_indices[0] == self.eye_indices[1]):
                raise ValueError("inter_ocular mode needs two distinct landmark indices")


@dataclass(frozen=True)
class EvalReport:
    per_sample_errors: np.ndarray
    mean_error: float
    failure_threshold: float
    failure_rate: float
    ced_thresholds: np.ndarray
    ced_fractions: np.ndarray

    def __post_init__(self):
        for name in ("per_sample_errors", "ced_thresholds", "ced_fractions"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def normalized_error(pred: Shape, gt: Shape, norm: ErrorNormalization,
                     gt_box: BoundingBox) -> float:
    """Mean landmark distance divided by the configured normalizer."""
    if pred.n_landmarks != gt.n_landmarks:
        raise ValueError("prediction and ground truth must have the same landmark count")
    if norm.mode == "face_size":
        scale = float(np.sqrt(gt_box.width * gt_box.height))
    else:
        i, j = norm.eye_indices
        pts = gt.as_points()
        scale = float(np.linalg.norm(pts[i] - pts[j]))
    if scale <= 0:
        raise ValueError("error normalizer is zero")
    dists = np.linalg.norm(pred.as_points() - gt.as_points(), axis=1)
    return float(dists.mean() / scale)


def ced_and_failure(errors, failure_threshold: float = DEFAULT_FAILURE_THRESHOLD) -> EvalReport:
    """Aggregate per-sample errors into mean, failure rate, and the CED curve.

    CED(t) is the fraction of samples with error <= t; the failure rate is
    1 - CED(threshold).  The curve is sampled at uniform thresholds in
    [0, 0.10]; the raw sorted errors stay available for exact re-plotting.
    """
    errs = np.asarray(errors, dtype=np.float64).ravel()
    if errs.size == 0:
        raise ValueError("cannot evaluate an empty error list")
    errs = np.sort(errs)
    n = errs.size
    thresholds = np.linspace(0.0, CED_MAX_THRESHOLD, CED_N_THRESHOLDS)
    fractions = np.searchsorted(errs, thresholds, side="right") / n
    at_threshold = np.searchsorted(errs, failure_threshold, side="right") / n
    return EvalReport(
        per_sample_errors=errs,
        mean_error=float(errs.mean()),
        failure_threshold=float(failure_threshold),
        failure_rate=float(1.0 - at_threshold),
        ced_thresholds=thresholds,
        ced_fractions=fractions,
    )
