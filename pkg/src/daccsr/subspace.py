"""PCA shape subspace, sub-domain coding, and fuzzy sample weighting.

Shape estimates are normalized per axis to [0, 1], projected onto the top-K
principal axes of the training estimates, and the coefficient vector is coded
into one of 2^K quadrant labels (one sign bit per axis, relative to the
coefficient mean).  A further label, 2^K + 1, covers the central ellipse of
coefficients within one standard deviation of the mean.  During training the
quadrant and ellipse domains overlap; at inference exactly one label is
predicted, with the ellipse taking precedence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import FrozenSet, Sequence

import numpy as np

from .geometry import DegenerateShapeError, Shape

_MIN_COEFF_STD = 1e-12  # clamp for degenerate training sets


@dataclass(frozen=True)
class ShapeSubspace:
    """Mean shape, orthonormal eigenvector columns, and coefficient statistics."""

    mean_shape: np.ndarray   # (2L,)
    eigvecs: np.ndarray      # (2L, K), orthonormal columns
    coeff_mean: np.ndarray   # (K,)
    coeff_std: np.ndarray    # (K,), strictly positive

    def __post_init__(self):
        mean = np.asarray(self.mean_shape, dtype=np.float64).ravel()
        V = np.asarray(self.eigvecs, dtype=np.float64)
        cm = np.asarray(self.coeff_mean, dtype=np.float64).ravel()
        cs = np.asarray(self.coeff_std, dtype=np.float64).ravel()
        if V.ndim != 2 or V.shape[0] != mean.size:
            raise ValueError(f"eigvecs shape {V.shape} does not match mean length {mean.size}")
        k = V.shape[1]
        if k < 1:
            raise ValueError("subspace needs at least one eigenvector")
        if cm.size != k or cs.size != k:
            raise ValueError("coefficient statistics must have one entry per eigenvector")
        if np.any(cs <= 0):
            raise ValueError("coefficient standard deviations must be strictly positive")
        gram = V.T @ V
        if not np.allclose(gram, np.eye(k), atol=1e-9):
            raise ValueError("eigenvectors must be orthonormal")
        for arr in (mean, V, cm, cs):
            arr.flags.writeable = False
        object.__setattr__(self, "mean_shape", mean)
        object.__setattr__(self, "eigvecs", V)
        object.__setattr__(self, "coeff_mean", cm)
        object.__setattr__(self, "coeff_std", cs)

    @property
    def k(self) -> int:
        return self.eigvecs.shape[1]

    @property
    def dim(self) -> int:
        return self.mean_shape.size


@dataclass(frozen=True)
class DomainLayout:
    """Sub-domain bookkeeping: 2^K quadrant domains plus the central ellipse."""

    k: int
    m: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("subspace dimension must be >= 1")
        if self.m != 2 ** self.k + 1:
            raise ValueError(f"domain count must be 2^{self.k} + 1, got {self.m}")

    @classmethod
    def for_dim(cls, k: int) -> "DomainLayout":
        return cls(k=k, m=2 ** k + 1)


@dataclass(frozen=True)
class FuzzySchedule:
    """Out-of-domain weights h(n) per domain stage, strictly decreasing in (0, 0.5)."""

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) == 0:
            raise ValueError("schedule must not be empty")
        for v in vals:
            if not (0.0 < v < 0.5):
                raise ValueError(f"schedule values must lie strictly in (0, 0.5), got {v}")
        for a, b in zip(vals, vals[1:]):
            if not b < a:
                raise ValueError(f"schedule must be strictly decreasing, got {vals}")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    def h(self, stage: int) -> float:
        """Out-of-domain weight at 1-based stage ``n``."""
        if not 1 <= stage <= len(self.values):
            raise ValueError(f"stage {stage} outside schedule of length {len(self.values)}")
        return self.values[stage - 1]


def normalize_shape(shape: Shape) -> np.ndarray:
    """Map each axis affinely onto [0, 1] using the shape's own tight bounds."""
    xs, ys = shape.xs, shape.ys
    wx = xs.max() - xs.min()
    wy = ys.max() - ys.min()
    if wx <= 0 or wy <= 0:
        raise DegenerateShapeError("cannot normalize a shape with zero extent")
    out = np.empty_like(shape.points)
    out[0::2] = (xs - xs.min()) / wx
    out[1::2] = (ys - ys.min()) / wy
    return out


def fit_shape_subspace(normalized_shapes: np.ndarray, k: int) -> ShapeSubspace:
    """PCA of normalized shape vectors, keeping the top-k axes.

    The sign of each eigenvector is fixed so that its largest-magnitude entry
    is positive, which makes the fit deterministic.  Coefficient means and
    standard deviations are those of the training projections (population
    std, clamped away from zero).
    """
    X = np.asarray(normalized_shapes, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("normalized shapes must form an (n_samples, 2L) matrix")
    n, d = X.shape
    if k < 1 or k > d:
        raise ValueError(f"k must be in [1, {d}], got {k}")
    if n < k + 1:
        raise ValueError(f"need at least {k + 1} samples to fit a {k}-dimensional subspace")
    mean = X.mean(axis=0)
    centered = X - mean
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    V = vt[:k].T
    for j in range(k):
        col = V[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            V[:, j] = -col
    coeffs = centered @ V
    cmean = coeffs.mean(axis=0)
    cstd = np.maximum(coeffs.std(axis=0), _MIN_COEFF_STD)
    return ShapeSubspace(mean_shape=mean, eigvecs=V, coeff_mean=cmean, coeff_std=cstd)


def project(sub: ShapeSubspace, normalized_shape: np.ndarray) -> np.ndarray:
    """Coefficients of a normalized shape in the subspace basis."""
    x = np.asarray(normalized_shape, dtype=np.float64).ravel()
    if x.size != sub.dim:
        raise ValueError(f"expected a length-{sub.dim} vector, got {x.size}")
    return sub.eigvecs.T @ (x - sub.mean_shape)


def reconstruct(sub: ShapeSubspace, coefficients: np.ndarray) -> np.ndarray:
    """Normalized-space shape vector for a coefficient vector."""
    c = np.asarray(coefficients, dtype=np.float64).ravel()
    if c.size != sub.k:
        raise ValueError(f"expected {sub.k} coefficients, got {c.size}")
    return sub.mean_shape + sub.eigvecs @ c


def membership_word(c: np.ndarray, sub: ShapeSubspace) -> int:
    """Quadrant label in [1, 2^K]: bit k is 1 iff c_k >= coeff_mean_k."""
    c = np.asarray(c, dtype=np.float64).ravel()
    if c.size != sub.k:
        raise ValueError(f"expected {sub.k} coefficients, got {c.size}")
    word = 1
    for idx in range(sub.k):
        if c[idx] >= sub.coeff_mean[idx]:
            word += 1 << idx
    return word


def in_ellipse(c: np.ndarray, sub: ShapeSubspace) -> bool:
    """True iff sum_k ((c_k - mean_k) / std_k)^2 <= 1 (boundary inclusive)."""
    c = np.asarray(c, dtype=np.float64).ravel()
    if c.size != sub.k:
        raise ValueError(f"expected {sub.k} coefficients, got {c.size}")
    d = (c - sub.coeff_mean) / sub.coeff_std
    return float(np.sum(d * d)) <= 1.0


def training_memberships(c: np.ndarray, sub: ShapeSubspace) -> FrozenSet[int]:
    """Overlapping training labels: the quadrant word, plus 2^K + 1 inside the ellipse."""
    labels = {membership_word(c, sub)}
    if in_ellipse(c, sub):
        labels.add(2 ** sub.k + 1)
    return frozenset(labels)


def predict_domain(c: np.ndarray, sub: ShapeSubspace) -> int:
    """Single inference-time label: the ellipse domain if inside, else the quadrant."""
    if in_ellipse(c, sub):
        return 2 ** sub.k + 1
    return membership_word(c, sub)


def fuzzy_weight(sample_labels: Sequence[int], domain: int, stage: int,
                 schedule: FuzzySchedule) -> float:
    """Training weight of one sample for a domain's stage-n regressor.

    In-domain samples weigh 1 - h(n), all others h(n); h decreases over
    stages so the contrast sharpens as the cascade deepens.
    """
    h = schedule.h(stage)
    return 1.0 - h if domain in sample_labels else h
