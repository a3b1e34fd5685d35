"""Optimal-design solver: duality oracles, equivariance, and the schedule."""

import numpy as np
import pytest

from fairlin.design import (
    NonSpanningArmSetError,
    SingularDesignError,
    _design_matrix,
    _fw_steps,
    _spanning_init,
    d_optimal_design,
    g_value,
    round_robin_schedule,
)
from fairlin.numerics import logdet


def unit_arms(rng, n, d):
    A = rng.standard_normal((n, d))
    return A / np.linalg.norm(A, axis=1, keepdims=True)


class TestDOptimalDesign:
    def test_basis_arms_uniform(self):
        dw = d_optimal_design(np.eye(3))
        np.testing.assert_allclose(dw.weights, np.full(3, 1.0 / 3.0), atol=1e-12)
        assert dw.g_value == pytest.approx(3.0, abs=1e-9)
        assert dw.converged

    def test_redundant_diagonal_arm_gets_no_weight(self):
        s = 1.0 / np.sqrt(2.0)
        arms = np.array([[1.0, 0.0], [0.0, 1.0], [s, s]])
        dw = d_optimal_design(arms)
        # Grid-search oracle over the 2-simplex: log det is maximized at (1/2, 1/2, 0).
        best, best_w = -np.inf, None
        grid = np.linspace(0.0, 1.0, 201)
        for a in grid:
            for b in grid:
                c = 1.0 - a - b
                if c < -1e-12:
                    continue
                w = np.array([a, b, max(c, 0.0)])
                U = _design_matrix(arms, w)
                det = U[0, 0] * U[1, 1] - U[0, 1] * U[1, 0]
                if det > best:
                    best, best_w = det, w
        np.testing.assert_allclose(best_w, [0.5, 0.5, 0.0], atol=2e-2)
        np.testing.assert_allclose(dw.weights, [0.5, 0.5, 0.0], atol=5e-2)
        assert dw.g_value == pytest.approx(2.0, rel=1e-2)

    def test_non_spanning_raises(self):
        with pytest.raises(NonSpanningArmSetError):
            d_optimal_design(np.array([[1.0, 0.0], [0.5, 0.0]]))

    def test_kw_duality_on_random_sets(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            d = int(rng.integers(2, 9))
            n = int(rng.integers(d + 1, 120))
            dw = d_optimal_design(unit_arms(rng, n, d))
            assert dw.g_value >= d - 1e-6
            assert dw.g_value <= d * 1.01
            assert dw.support.size <= d * (d + 1) // 2
            assert dw.weights.min() >= 0.0
            assert dw.weights.sum() == pytest.approx(1.0, abs=1e-9)

    def test_frank_wolfe_ascent(self):
        # log det(U) is nondecreasing along the solver's step sequence.
        rng = np.random.default_rng(7)
        A = unit_arms(rng, 40, 4)
        init = _spanning_init(A)
        w = np.zeros(40)
        w[init] = 0.25
        U = _design_matrix(A, w)
        prev = logdet(U)
        for _ in range(60):
            w, U, done, _ = _fw_steps(A, w, U, target=4.0, max_iters=1)
            cur = logdet(_design_matrix(A, w))
            assert cur >= prev - 1e-10
            prev = cur
            if done:
                break

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(3)
        A = unit_arms(rng, 25, 3)
        dw = d_optimal_design(A)
        perm = rng.permutation(25)
        dw_p = d_optimal_design(A[perm])
        np.testing.assert_allclose(dw_p.weights, dw.weights[perm], atol=1e-9)

    def test_iteration_budget_flag(self):
        rng = np.random.default_rng(5)
        A = unit_arms(rng, 60, 5)
        dw = d_optimal_design(A, eps=1e-6, max_iters=3)
        assert not dw.converged
        assert dw.iterations_used == 3


class TestGValue:
    def test_uniform_basis(self):
        assert g_value(np.eye(2), [0.5, 0.5]) == pytest.approx(2.0, abs=1e-12)

    def test_skewed_basis(self):
        assert g_value(np.eye(2), [0.75, 0.25]) == pytest.approx(4.0, abs=1e-12)

    def test_singular_design(self):
        with pytest.raises(SingularDesignError):
            g_value(np.eye(2), [1.0, 0.0])

    def test_invalid_distribution(self):
        with pytest.raises(ValueError):
            g_value(np.eye(2), [0.9, 0.2])

    def test_agrees_with_solver(self):
        # Dual route: the standalone evaluator must reproduce the solver's value.
        rng = np.random.default_rng(8)
        A = unit_arms(rng, 30, 4)
        dw = d_optimal_design(A)
        assert g_value(A, dw.weights) == pytest.approx(dw.g_value, rel=1e-9)


class TestRoundRobinSchedule:
    def test_half_half(self):
        assert round_robin_schedule([0.5, 0.5], 12) == [(0, 2), (1, 2)]

    def test_single_arm_minimum(self):
        assert round_robin_schedule([1.0], 1) == [(0, 1)]

    def test_thirds(self):
        assert round_robin_schedule([1 / 3, 1 / 3, 1 / 3], 9) == [(0, 1), (1, 1), (2, 1)]

    def test_skips_zero_weights(self):
        assert round_robin_schedule([0.5, 0.0, 0.5], 12) == [(0, 2), (2, 2)]

    def test_invalid_horizon(self):
        with pytest.raises(ValueError):
            round_robin_schedule([1.0], 0)
