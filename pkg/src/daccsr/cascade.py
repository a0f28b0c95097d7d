"""Cascade training and inference.

A trained model chains three regression stages: a bounding-box refiner, a
general cascade shared by all faces, and a bank of domain-specific cascades
selected dynamically from the PCA coefficients of the evolving shape
estimate.  Every domain cascade is trained on all samples with fuzzy weights
(in-domain samples heavier, contrast annealed over stages), which keeps each
regressor sane on out-of-domain shapes and makes mis-selection recoverable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .augmentation import perturb_bbox
from .evaluation import ErrorNormalization, normalized_error
from .features import FeatureConfig, context_features, dense_box_features
from .geometry import (BoundingBox, GrayImage, InvalidBoxError, Sample, Shape,
                       apply_bbox_delta, place_mean_shape, shape_to_bbox)
from .regression import RidgeProblem, WeakRegressor, apply_regressor, solve_weighted_ridge
from .subspace import (FuzzySchedule, ShapeSubspace, fit_shape_subspace, fuzzy_weight,
                       normalize_shape, predict_domain, project, training_memberships)

logger = logging.getLogger(__name__)

_FACE_SIZE_NORM = ErrorNormalization(mode="face_size")


@dataclass(frozen=True)
class CascadeConfig:
    """Stage counts and solver settings; defaults follow the reference setup."""

    n_bbox_stages: int = 1
    n_general_stages: int = 2
    n_domain_stages: int = 3
    subspace_dim: int = 2
    ridge_lambda: float = 10000.0
    schedule: FuzzySchedule = field(default_factory=lambda: FuzzySchedule((0.3, 0.2, 0.1)))
    feature_config: FeatureConfig = field(default_factory=FeatureConfig)

    def __post_init__(self):
        if self.n_bbox_stages not in (0, 1):
            raise ValueError("n_bbox_stages must be 0 or 1")
        if self.n_general_stages < 0 or self.n_domain_stages < 0:
            raise ValueError("stage counts must be nonnegative")
        if self.subspace_dim < 1:
            raise ValueError("subspace_dim must be >= 1")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be nonnegative")
        if self.n_domain_stages > 0 and len(self.schedule) != self.n_domain_stages:
            raise ValueError(
                f"schedule length {len(self.schedule)} must equal "
                f"n_domain_stages {self.n_domain_stages}"
            )

    @property
    def n_domains(self) -> int:
        return 2 ** self.subspace_dim + 1


@dataclass(frozen=True)
class DacCsrModel:
    """All trained stages plus the feature geometry they were trained with."""

    mean_shape: Shape
    bbox_refiner: Optional[WeakRegressor]
    general: Tuple[WeakRegressor, ...]
    subspace: Optional[ShapeSubspace]
    domain_cascades: Tuple[Tuple[WeakRegressor, ...], ...]
    config: CascadeConfig

    def __post_init__(self):
        cfg = self.config
        if len(self.general) != cfg.n_general_stages:
            raise ValueError("general cascade length does not match the configuration")
        if len(self.domain_cascades) != cfg.n_domains:
            raise ValueError(f"expected {cfg.n_domains} domain cascades")
        for cascade in self.domain_cascades:
            if len(cascade) != cfg.n_domain_stages:
                raise ValueError("every domain cascade must have n_domain_stages regressors")
        if cfg.n_domain_stages > 0 and self.subspace is None:
            raise ValueError("domain stages require a fitted shape subspace")
        object.__setattr__(self, "general", tuple(self.general))
        object.__setattr__(self, "domain_cascades",
                           tuple(tuple(c) for c in self.domain_cascades))

    @property
    def n_landmarks(self) -> int:
        return self.mean_shape.n_landmarks


@dataclass(frozen=True)
class TrainingReport:
    """Mean face-size-normalized training error after each stage, per track.

    The general track averages over all training samples.  Each domain track
    averages over that domain's member samples (fuzzy training keeps every
    sample in every problem, but a domain's training error is measured on the
    subset it specializes to); domains with no members fall back to the full
    sample set.
    """

    general_errors: Tuple[float, ...]          # initial placement + one per stage
    domain_errors: Tuple[Tuple[float, ...], ...]  # per domain: start + one per stage
    n_refiner_fallbacks: int


@dataclass(frozen=True)
class DetectTrace:
    """Intermediate state of one detection, for inspection and testing."""

    refined_box: BoundingBox
    used_fallback_box: bool
    general_estimate: Shape
    domain_labels: Tuple[int, ...]
    stage_estimates: Tuple[Shape, ...]


def _tight_box_vector(shape: Shape) -> np.ndarray:
    return shape_to_bbox(shape).as_vector()


def _error_vector(estimates: np.ndarray, samples: Sequence[Sample]) -> np.ndarray:
    return np.array([
        normalized_error(Shape(est), sample.gt_shape, _FACE_SIZE_NORM,
                         shape_to_bbox(sample.gt_shape))
        for est, sample in zip(estimates, samples)
    ])


def _mean_normalized_error(estimates: np.ndarray, samples: Sequence[Sample]) -> float:
    return float(_error_vector(estimates, samples).mean())


def _context_matrix(samples: Sequence[Sample], estimates: np.ndarray,
                    cfg: FeatureConfig) -> np.ndarray:
    rows = [context_features(s.image, Shape(est), cfg) for s, est in zip(samples, estimates)]
    return np.stack(rows)


def compute_mean_shape(samples: Sequence[Sample]) -> Shape:
    """Average of the ground-truth shapes, each normalized to the unit square."""
    vecs = np.stack([normalize_shape(s.gt_shape) for s in samples])
    return Shape(vecs.mean(axis=0))


def expand_with_box_jitter(samples: Sequence[Sample], n_copies: int,
                           magnitude: float, seed: int) -> List[Sample]:
    """Replicate each sample with randomly perturbed initial boxes."""
    out = list(samples)
    for i, sample in enumerate(samples):
        for j in range(n_copies):
            box = perturb_bbox(sample.bbox, rng_seed=seed + 1000003 * i + j,
                               magnitude=magnitude)
            out.append(Sample(image=sample.image, bbox=box, gt_shape=sample.gt_shape))
    return out


def train_bbox_refiner(samples: Sequence[Sample], cfg: CascadeConfig) -> WeakRegressor:
    """Ridge map from dense box features to (tight ground-truth box - box)."""
    feats = []
    targets = []
    for i, sample in enumerate(samples):
        if sample.gt_shape is None:
            raise ValueError(f"sample {i} has no ground-truth shape")
        target = _tight_box_vector(sample.gt_shape) - sample.bbox.as_vector()
        feats.append(dense_box_features(sample.image, sample.bbox, cfg.feature_config))
        targets.append(target)
    problem = RidgeProblem(np.stack(feats), np.stack(targets),
                           np.ones(len(samples)), cfg.ridge_lambda)
    return solve_weighted_ridge(problem)


def refine_box(refiner: Optional[WeakRegressor], image: GrayImage, box: BoundingBox,
               cfg: FeatureConfig) -> Tuple[BoundingBox, bool]:
    """Apply the refiner; fall back to the input box when the result is invalid."""
    if refiner is None:
        return box, False
    delta = apply_regressor(refiner, dense_box_features(image, box, cfg))
    try:
        return apply_bbox_delta(box, delta), False
    except (InvalidBoxError, ValueError):
        logger.warning("box refiner produced an invalid box; falling back to the input box")
        return box, True


def train_general_csr(samples: Sequence[Sample], initial_estimates: np.ndarray,
                      cfg: CascadeConfig) -> Tuple[List[WeakRegressor], np.ndarray, List[float]]:
    """Train the shared cascade; returns regressors, final estimates, error track."""
    estimates = initial_estimates.copy()
    gt = np.stack([s.gt_shape.points for s in samples])
    errors = [_mean_normalized_error(estimates, samples)]
    regressors: List[WeakRegressor] = []
    for _ in range(cfg.n_general_stages):
        feats = _context_matrix(samples, estimates, cfg.feature_config)
        problem = RidgeProblem(feats, gt - estimates, np.ones(len(samples)), cfg.ridge_lambda)
        reg = solve_weighted_ridge(problem)
        regressors.append(reg)
        estimates = estimates + feats @ reg.A.T + reg.e
        errors.append(_mean_normalized_error(estimates, samples))
    return regressors, estimates, errors


def train_domain_csrs(samples: Sequence[Sample], general_estimates: np.ndarray,
                      sub: ShapeSubspace, cfg: CascadeConfig
                      ) -> Tuple[List[List[WeakRegressor]], List[List[float]]]:
    """Train all domain cascades with fuzzy sample weights.

    Memberships are computed once from the general-cascade output and frozen;
    each domain evolves its own copy of the estimates.
    """
    gt = np.stack([s.gt_shape.points for s in samples])
    memberships = [
        training_memberships(project(sub, normalize_shape(Shape(est))), sub)
        for est in general_estimates
    ]
    n_domains = cfg.n_domains
    member_masks = []
    for dom in range(1, n_domains + 1):
        mask = np.array([dom in labels for labels in memberships])
        if not mask.any():
            logger.warning("domain %d has no in-domain training sample", dom)
            mask = np.ones(len(samples), dtype=bool)
        member_masks.append(mask)

    def track_error(est: np.ndarray, dom: int) -> float:
        return float(_error_vector(est, samples)[member_masks[dom - 1]].mean())

    cascades: List[List[WeakRegressor]] = [[] for _ in range(n_domains)]
    estimates = [general_estimates.copy() for _ in range(n_domains)]
    error_tracks = [[track_error(general_estimates, dom)] for dom in range(1, n_domains + 1)]
    for stage in range(1, cfg.n_domain_stages + 1):
        for dom in range(1, n_domains + 1):
            weights = np.array([
                fuzzy_weight(labels, dom, stage, cfg.schedule) for labels in memberships
            ])
            est = estimates[dom - 1]
            feats = _context_matrix(samples, est, cfg.feature_config)
            problem = RidgeProblem(feats, gt - est, weights, cfg.ridge_lambda)
            reg = solve_weighted_ridge(problem)
            cascades[dom - 1].append(reg)
            estimates[dom - 1] = est + feats @ reg.A.T + reg.e
            error_tracks[dom - 1].append(track_error(estimates[dom - 1], dom))
    return cascades, error_tracks


def train_dac_csr(samples: Sequence[Sample], cfg: CascadeConfig = CascadeConfig(),
                  box_jitter: int = 0, jitter_magnitude: float = 0.05,
                  seed: int = 0) -> Tuple[DacCsrModel, TrainingReport]:
    """Full training pipeline: refiner, general cascade, subspace, domain cascades.

    ``box_jitter`` adds that many perturbed-box copies of every training
    sample before any stage is trained.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("training requires at least one sample")
    for i, s in enumerate(samples):
        if s.gt_shape is None:
            raise ValueError(f"sample {i} has no ground-truth shape")
    n_landmarks = samples[0].gt_shape.n_landmarks
    for i, s in enumerate(samples):
        if s.gt_shape.n_landmarks != n_landmarks:
            raise ValueError(f"sample {i} has {s.gt_shape.n_landmarks} landmarks, "
                             f"expected {n_landmarks}")
    if box_jitter > 0:
        samples = expand_with_box_jitter(samples, box_jitter, jitter_magnitude, seed)

    mean_shape = compute_mean_shape(samples)

    refiner = None
    fallbacks = 0
    if cfg.n_bbox_stages == 1:
        refiner = train_bbox_refiner(samples, cfg)
    boxes = []
    for sample in samples:
        box, fell_back = refine_box(refiner, sample.image, sample.bbox, cfg.feature_config)
        boxes.append(box)
        fallbacks += int(fell_back)

    initial = np.stack([place_mean_shape(mean_shape, box).points for box in boxes])
    general, estimates, general_errors = train_general_csr(samples, initial, cfg)

    subspace = None
    domain_cascades: List[List[WeakRegressor]] = [[] for _ in range(cfg.n_domains)]
    domain_errors: List[List[float]] = [[] for _ in range(cfg.n_domains)]
    if len(samples) >= cfg.subspace_dim + 1:
        normalized = np.stack([normalize_shape(Shape(est)) for est in estimates])
        subspace = fit_shape_subspace(normalized, cfg.subspace_dim)
        if cfg.n_domain_stages > 0:
            domain_cascades, domain_errors = train_domain_csrs(
                samples, estimates, subspace, cfg)
    elif cfg.n_domain_stages > 0:
        raise ValueError(
            f"domain training needs at least {cfg.subspace_dim + 1} samples to fit the subspace"
        )

    model = DacCsrModel(
        mean_shape=mean_shape,
        bbox_refiner=refiner,
        general=tuple(general),
        subspace=subspace,
        domain_cascades=tuple(tuple(c) for c in domain_cascades),
        config=cfg,
    )
    report = TrainingReport(
        general_errors=tuple(general_errors),
        domain_errors=tuple(tuple(track) for track in domain_errors),
        n_refiner_fallbacks=fallbacks,
    )
    return model, report


def detect_with_trace(model: DacCsrModel, image: GrayImage,
                      box: BoundingBox) -> Tuple[Shape, DetectTrace]:
    """Run the full cascade on one image, keeping intermediate state.

    The domain label is re-predicted from the current estimate before every
    domain stage, so a sample can migrate between domains as it converges.
    """
    cfg = model.config
    fcfg = cfg.feature_config
    refined, fell_back = refine_box(model.bbox_refiner, image, box, fcfg)
    estimate = place_mean_shape(model.mean_shape, refined).points.copy()

    for reg in model.general:
        estimate = estimate + apply_regressor(reg, context_features(image, Shape(estimate), fcfg))
    general_estimate = Shape(estimate)

    labels: List[int] = []
    stage_estimates: List[Shape] = []
    for stage in range(cfg.n_domain_stages):
        coeffs = project(model.subspace, normalize_shape(Shape(estimate)))
        label = predict_domain(coeffs, model.subspace)
        reg = model.domain_cascades[label - 1][stage]
        estimate = estimate + apply_regressor(reg, context_features(image, Shape(estimate), fcfg))
        labels.append(label)
        stage_estimates.append(Shape(estimate))

    trace = DetectTrace(
        refined_box=refined,
        used_fallback_box=fell_back,
        general_estimate=general_estimate,
        domain_labels=tuple(labels),
        stage_estimates=tuple(stage_estimates),
    )
    return Shape(estimate), trace


def detect(model: DacCsrModel, image: GrayImage, box: BoundingBox) -> Shape:
    """Landmark detection for one image and face box."""
    shape, _ = detect_with_trace(model, image, box)
    return shape
