import numpy as np
import pytest

from daccsr.regression import (RidgeProblem, SingularProblemError, WeakRegressor,
                               apply_regressor, apply_regressor_batch, solve_weighted_ridge)


def brute_force_ridge(F, T, w, lam):
    """Reference solver: invert the full normal equations over [features, 1].

    The augmented design G = [F | 1] couples A and e in one system; the
    penalty applies to the A block only.
    """
    F = np.asarray(F, float)
    T = np.asarray(T, float)
    w = np.asarray(w, float)
    n, d = F.shape
    G = np.hstack([F, np.ones((n, 1))])
    penalty = np.diag(np.r_[np.full(d, lam), 0.0])
    lhs = G.T @ (G * w[:, None]) + penalty
    rhs = G.T @ (T * w[:, None])
    theta = np.linalg.inv(lhs) @ rhs
    return theta[:d].T, theta[d]


def objective(F, T, w, lam, A, e):
    resid = F @ A.T + e - T
    return float(np.sum(w * np.sum(resid ** 2, axis=1)) + lam * np.sum(A ** 2))


class TestSolveWeightedRidge:
    def test_exact_line_fit(self):
        problem = RidgeProblem(np.array([[1.0], [2.0]]), np.array([[2.0], [4.0]]),
                               np.ones(2), 0.0)
        reg = solve_weighted_ridge(problem)
        np.testing.assert_allclose(reg.A, [[2.0]], atol=1e-12)
        np.testing.assert_allclose(reg.e, [0.0], atol=1e-12)

    def test_huge_lambda_shrinks_to_constant(self):
        rng = np.random.default_rng(0)
        F = rng.normal(size=(12, 4))
        T = np.full((12, 2), 3.5)
        reg = solve_weighted_ridge(RidgeProblem(F, T, np.ones(12), 1e12))
        assert np.linalg.norm(reg.A) < 1e-6
        np.testing.assert_allclose(reg.e, [3.5, 3.5], atol=1e-9)

    def test_matches_full_normal_equation_oracle(self):
        rng = np.random.default_rng(42)
        F = rng.normal(size=(20, 6))
        T = rng.normal(size=(20, 3))
        w = rng.uniform(0.1, 2.0, size=20)
        reg = solve_weighted_ridge(RidgeProblem(F, T, w, 10.0))
        A_ref, e_ref = brute_force_ridge(F, T, w, 10.0)
        np.testing.assert_allclose(reg.A, A_ref, rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(reg.e, e_ref, rtol=1e-8, atol=1e-10)

    def test_dual_path_matches_primal(self):
        # more features than samples triggers the gram-over-samples solve
        rng = np.random.default_rng(3)
        F = rng.normal(size=(8, 40))
        T = rng.normal(size=(8, 2))
        w = rng.uniform(0.5, 1.5, size=8)
        reg = solve_weighted_ridge(RidgeProblem(F, T, w, 5.0))
        A_ref, e_ref = brute_force_ridge(F, T, w, 5.0)
        np.testing.assert_allclose(reg.A, A_ref, rtol=1e-7, atol=1e-10)
        np.testing.assert_allclose(reg.e, e_ref, rtol=1e-7, atol=1e-10)

    def test_single_sample_zero_lambda_interpolates(self):
        F = np.array([[3.0, 1.0]])
        T = np.array([[5.0, -2.0, 0.5]])
        reg = solve_weighted_ridge(RidgeProblem(F, T, np.ones(1), 0.0))
        np.testing.assert_allclose(apply_regressor(reg, F[0]), T[0], atol=1e-12)

    def test_constant_targets_give_zero_matrix(self):
        rng = np.random.default_rng(1)
        F = rng.normal(size=(10, 3))
        T = np.full((10, 2), 7.0)
        reg = solve_weighted_ridge(RidgeProblem(F, T, np.ones(10), 1.0))
        np.testing.assert_allclose(reg.A, 0.0, atol=1e-12)
        np.testing.assert_allclose(reg.e, [7.0, 7.0], atol=1e-12)

    def test_singular_zero_lambda_raises_with_advice(self):
        # duplicated feature columns make the normal matrix singular
        F = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        T = np.array([[1.0], [2.0], [4.0]])
        with pytest.raises(SingularProblemError, match="lambda"):
            solve_weighted_ridge(RidgeProblem(F, T, np.ones(3), 0.0))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            RidgeProblem(np.array([[np.inf]]), np.array([[1.0]]), np.ones(1), 1.0)

    def test_rejects_all_zero_weights(self):
        with pytest.raises(ValueError):
            RidgeProblem(np.ones((2, 1)), np.ones((2, 1)), np.zeros(2), 1.0)


class TestOptimality:
    def test_gradient_vanishes_at_solution(self):
        rng = np.random.default_rng(7)
        F = rng.normal(size=(15, 4))
        T = rng.normal(size=(15, 2))
        w = rng.uniform(0.2, 1.5, size=15)
        lam = 2.5
        reg = solve_weighted_ridge(RidgeProblem(F, T, w, lam))
        base = objective(F, T, w, lam, reg.A, reg.e)
        scale = max(abs(base), 1.0)
        eps = 1e-6
        for arr, setter in ((reg.A, "A"), (reg.e, "e")):
            flat = np.array(arr, copy=True)
            for idx in np.ndindex(flat.shape):
                bumped = flat.copy()
                bumped[idx] += eps
                if setter == "A":
                    val = objective(F, T, w, lam, bumped, reg.e)
                else:
                    val = objective(F, T, w, lam, reg.A, bumped)
                grad = (val - base) / eps
                assert abs(grad) <= 1e-6 * scale + 1e-4

    def test_beats_best_constant_predictor(self):
        rng = np.random.default_rng(11)
        F = rng.normal(size=(25, 5))
        T = rng.normal(size=(25, 3))
        w = rng.uniform(0.1, 2.0, size=25)
        lam = 3.0
        reg = solve_weighted_ridge(RidgeProblem(F, T, w, lam))
        resid = F @ reg.A.T + reg.e - T
        fitted = np.sum(w * np.sum(resid ** 2, axis=1))
        tbar = (w @ T) / w.sum()
        const_resid = T - tbar
        constant = np.sum(w * np.sum(const_resid ** 2, axis=1))
        assert fitted <= constant + 1e-9

    def test_uniform_weights_match_scaled_lambda(self):
        rng = np.random.default_rng(13)
        F = rng.normal(size=(18, 4))
        T = rng.normal(size=(18, 2))
        c = 3.7
        reg_scaled = solve_weighted_ridge(RidgeProblem(F, T, np.full(18, c), 10.0))
        reg_unit = solve_weighted_ridge(RidgeProblem(F, T, np.ones(18), 10.0 / c))
        np.testing.assert_allclose(reg_scaled.A, reg_unit.A, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(reg_scaled.e, reg_unit.e, rtol=1e-9, atol=1e-12)

    def test_joint_weight_and_lambda_scaling_invariance(self):
        rng = np.random.default_rng(17)
        F = rng.normal(size=(18, 4))
        T = rng.normal(size=(18, 2))
        w = rng.uniform(0.2, 1.8, size=18)
        c = 0.31
        reg = solve_weighted_ridge(RidgeProblem(F, T, w, 8.0))
        reg_scaled = solve_weighted_ridge(RidgeProblem(F, T, c * w, c * 8.0))
        np.testing.assert_allclose(reg_scaled.A, reg.A, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(reg_scaled.e, reg.e, rtol=1e-9, atol=1e-12)


class TestApply:
    def test_offset_only(self):
        reg = WeakRegressor(np.zeros((3, 4)), np.array([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(apply_regressor(reg, np.ones(4)), [1.0, 2.0, 3.0])

    def test_identity_matrix(self):
        reg = WeakRegressor(np.eye(4), np.zeros(4))
        f = np.array([1.0, -2.0, 3.0, 0.5])
        np.testing.assert_array_equal(apply_regressor(reg, f), f)

    def test_matches_manual_dot_products(self):
        rng = np.random.default_rng(5)
        A = rng.normal(size=(3, 7))
        e = rng.normal(size=3)
        f = rng.normal(size=7)
        reg = WeakRegressor(A, e)
        expected = np.array([np.dot(A[i], f) + e[i] for i in range(3)])
        np.testing.assert_allclose(apply_regressor(reg, f), expected, atol=1e-12)

    def test_dimension_mismatch_raises(self):
        reg = WeakRegressor(np.zeros((2, 3)), np.zeros(2))
        with pytest.raises(ValueError):
            apply_regressor(reg, np.zeros(4))

    def test_batch_apply_matches_single(self):
        rng = np.random.default_rng(9)
        reg = WeakRegressor(rng.normal(size=(2, 5)), rng.normal(size=2))
        F = rng.normal(size=(6, 5))
        batch = apply_regressor_batch(reg, F)
        singles = np.stack([apply_regressor(reg, row) for row in F])
        np.testing.assert_allclose(batch, singles, atol=1e-12)
