"""Closed-form weighted ridge regression and weak-regressor application.

One cascade stage is a linear map ``delta = A @ features + e``.  Training
minimizes

    sum_i w_i * ||A f_i + e - t_i||^2 + lam * ||A||_F^2

where the offset ``e`` is not penalized.  The optimum is obtained by
weighted centering (``e`` absorbs the weighted means) followed by a
symmetric positive-definite solve of the normal equations.  When the
feature dimension exceeds the sample count and ``lam > 0`` the equivalent
dual system (gram matrix over samples) is solved instead, which is much
cheaper for wide feature matrices and yields the identical minimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class SingularProblemError(np.linalg.LinAlgError):
    """Normal equations are singular and cannot be regularized away."""


@dataclass(frozen=True)
class WeakRegressor:
    """Linear stage: projection matrix ``A`` (out x n_features), offset ``e``."""

    A: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        e = np.asarray(self.e, dtype=np.float64).ravel()
        if A.ndim != 2:
            raise ValueError(f"A must be 2-D, got shape {A.shape}")
        if e.size != A.shape[0]:
            raise ValueError(f"offset length {e.size} does not match {A.shape[0]} output rows")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(e))):
            raise ValueError("regressor entries must be finite")
        A = A.copy()
        e = e.copy()
        A.flags.writeable = False
        e.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "e", e)

    @property
    def n_features(self) -> int:
        return self.A.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class RidgeProblem:
    """Weighted ridge instance: row i couples features[i] to targets[i]."""

    features: np.ndarray
    targets: np.ndarray
    weights: np.ndarray
    lam: float

    def __post_init__(self):
        F = np.asarray(self.features, dtype=np.float64)
        T = np.asarray(self.targets, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if F.ndim != 2 or T.ndim != 2:
            raise ValueError("features and targets must be 2-D matrices")
        if F.shape[0] != T.shape[0] or F.shape[0] != w.size:
            raise ValueError(
                f"row counts disagree: features {F.shape[0]}, targets {T.shape[0]}, weights {w.size}"
            )
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(T)) and np.all(np.isfinite(w))):
            raise ValueError("ridge inputs must be finite")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if not np.any(w > 0):
            raise ValueError("at least one weight must be strictly positive")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lambda must be a finite nonnegative scalar, got {self.lam}")
        object.__setattr__(self, "features", F)
        object.__setattr__(self, "targets", T)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "lam", float(self.lam))


def _spd_solve(gram: np.ndarray, rhs: np.ndarray, lam: float) -> np.ndarray:
    """Cholesky solve of (gram + lam*I) x = rhs with one regularized retry."""
    n = gram.shape[0]
    eye = np.eye(n)
    try:
        cf = scipy.linalg.cho_factor(gram + lam * eye, lower=True)
        return scipy.linalg.cho_solve(cf, rhs)
    except np.linalg.LinAlgError:
        pass
    if lam == 0.0:
        raise SingularProblemError(
            "normal matrix is singular with lambda = 0; use a strictly positive lambda"
        )
    bump = 1e-8 * np.trace(gram + lam * eye)
    try:
        cf = scipy.linalg.cho_factor(gram + (lam + bump) * eye, lower=True)
        return scipy.linalg.cho_solve(cf, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularProblemError(
            "normal matrix is singular even after regularization; increase lambda"
        ) from exc


def solve_weighted_ridge(problem: RidgeProblem) -> WeakRegressor:
    """Exact minimizer of the weighted ridge objective.

    The offset is eliminated first: with weighted means fbar, tbar the
    optimal e is tbar - A fbar and A solves the centered normal equations
    (Fc' W Fc + lam I) A' = Fc' W Tc.  A zero right-hand side short-circuits
    to A = 0 (then any A in the null space is optimal and 0 is the ridge
    limit), which keeps single-sample or constant-target problems exact even
    at lam = 0.
    """
    F, T, w, lam = problem.features, problem.targets, problem.weights, problem.lam
    n_samples, n_features = F.shape
    total = w.sum()
    fbar = (w @ F) / total
    tbar = (w @ T) / total
    Fc = F - fbar
    Tc = T - tbar

    rhs = (Fc * w[:, None]).T @ Tc
    if not rhs.any():
        A = np.zeros((T.shape[1], n_features))
        return WeakRegressor(A, tbar)

    if lam > 0 and n_features > n_samples:
        # dual: A' = X' (X X' + lam I)^-1 Y with X = sqrt(W) Fc, Y = sqrt(W) Tc
        sw = np.sqrt(w)[:, None]
        X = Fc * sw
        Y = Tc * sw
        Z = _spd_solve(X @ X.T, Y, lam)
        A = (X.T @ Z).T
    else:
        gram = (Fc * w[:, None]).T @ Fc
        A = _spd_solve(gram, rhs, lam).T

    e = tbar - A @ fbar
    return WeakRegressor(A, e)


def apply_regressor(regressor: WeakRegressor, features: np.ndarray) -> np.ndarray:
    """Evaluate A @ f + e for a single feature vector."""
    f = np.asarray(features, dtype=np.float64).ravel()
    if f.size != regressor.n_features:
        raise ValueError(
            f"feature length {f.size} does not match regressor width {regressor.n_features}"
        )
    return regressor.A @ f + regressor.e


def apply_regressor_batch(regressor: WeakRegressor, features: np.ndarray) -> np.ndarray:
    """Evaluate the regressor on an (n, n_features) matrix, one row per sample."""
    F = np.asarray(features, dtype=np.float64)
    if F.ndim != 2 or F.shape[1] != regressor.n_features:
        raise ValueError(
            f"feature matrix shape {F.shape} does not match regressor width {regressor.n_features}"
        )
    return F @ regressor.A.T + regressor.e
