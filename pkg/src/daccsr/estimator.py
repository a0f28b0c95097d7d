"""Scikit-learn style estimator wrapping the cascade trainer and detector.

``X`` is a sequence of (image, box) pairs: the image as a 2-D float array in
[0, 1] (or a :class:`GrayImage`), the box as a 4-tuple or
:class:`BoundingBox`.  ``y`` is an (n_samples, 2 * n_landmarks) coordinate
array (or a sequence of :class:`Shape`).  ``predict`` returns coordinates in
the same layout, so the estimator plugs into pipelines, cloning, and
parameter search like any other scikit-learn regressor.
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .cascade import CascadeConfig, detect, train_dac_csr
from .evaluation import ErrorNormalization, normalized_error
from .features import FeatureConfig
from .geometry import BoundingBox, GrayImage, Sample, Shape, shape_to_bbox
from .subspace import FuzzySchedule


def _as_image(value) -> GrayImage:
    if isinstance(value, GrayImage):
        return value
    return GrayImage(np.asarray(value, dtype=np.float64))


def _as_box(value) -> BoundingBox:
    if isinstance(value, BoundingBox):
        return value
    return BoundingBox(*(float(v) for v in value))


def _as_shape(value) -> Shape:
    if isinstance(value, Shape):
        return value
    return Shape(np.asarray(value, dtype=np.float64))


class DacCsrRegressor(BaseEstimator):
    """Landmark regressor with a bounding-box refiner, a shared cascade, and
    dynamically selected domain-specific cascades."""

    def __init__(self, n_bbox_stages: int = 1, n_general_stages: int = 2,
                 n_domain_stages: int = 3, subspace_dim: int = 2,
                 ridge_lambda: float = 10000.0,
                 schedule: Tuple[float, ...] = (0.3, 0.2, 0.1),
                 feature_config: Optional[FeatureConfig] = None,
                 box_jitter: int = 0, jitter_magnitude: float = 0.05,
                 random_state: int = 0):
        self.n_bbox_stages = n_bbox_stages
        self.n_general_stages = n_general_stages
        self.n_domain_stages = n_domain_stages
        self.subspace_dim = subspace_dim
        self.ridge_lambda = ridge_lambda
        self.schedule = schedule
        self.feature_config = feature_config
        self.box_jitter = box_jitter
        self.jitter_magnitude = jitter_magnitude
        self.random_state = random_state

    def _config(self) -> CascadeConfig:
        return CascadeConfig(
            n_bbox_stages=self.n_bbox_stages,
            n_general_stages=self.n_general_stages,
            n_domain_stages=self.n_domain_stages,
            subspace_dim=self.subspace_dim,
            ridge_lambda=self.ridge_lambda,
            schedule=FuzzySchedule(tuple(self.schedule)),
            feature_config=self.feature_config or FeatureConfig(),
        )

    def fit(self, X: Sequence, y: Sequence) -> "DacCsrRegressor":
        if len(X) != len(y):
            raise ValueError(f"X has {len(X)} samples but y has {len(y)}")
        samples = [
            Sample(image=_as_image(img), bbox=_as_box(box), gt_shape=_as_shape(shape))
            for (img, box), shape in zip(X, y)
        ]
        self.model_, self.training_report_ = train_dac_csr(
            samples, self._config(), box_jitter=self.box_jitter,
            jitter_magnitude=self.jitter_magnitude, seed=self.random_state)
        self.n_landmarks_ = self.model_.n_landmarks
        return self

    def predict(self, X: Sequence) -> np.ndarray:
        check_is_fitted(self, "model_")
        out = np.empty((len(X), 2 * self.n_landmarks_))
        for i, (img, box) in enumerate(X):
            out[i] = detect(self.model_, _as_image(img), _as_box(box)).points
        return out

    def score(self, X: Sequence, y: Sequence) -> float:
        """Negative mean face-size-normalized error (higher is better)."""
        preds = self.predict(X)
        norm = ErrorNormalization(mode="face_size")
        errors = [
            normalized_error(Shape(pred), _as_shape(gt), norm,
                             shape_to_bbox(_as_shape(gt)))
            for pred, gt in zip(preds, y)
        ]
        return -float(np.mean(errors))
