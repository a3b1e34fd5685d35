"""Inscribed-ball center, Caratheodory reduction, and the welfare diagnostic."""

import numpy as np
import pytest

from fairlin.geometry import (
    InfeasiblePointError,
    JohnDistribution,
    caratheodory_distribution,
    chebyshev_center,
    convex_combination,
    john_distribution,
    unit_directions,
    welfare_floor_check,
)
from fairlin.instances import ArmSet, BanditInstance, make_synthetic_instance

SQUARE = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]) / np.sqrt(2.0)
TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


class TestUnitDirections:
    def test_unit_norm_and_deterministic(self):
        d1 = unit_directions(4, 60)
        d2 = unit_directions(4, 60)
        np.testing.assert_array_equal(d1, d2)
        np.testing.assert_allclose(np.linalg.norm(d1, axis=1), 1.0, atol=1e-12)

    def test_nested_prefix(self):
        np.testing.assert_array_equal(unit_directions(3, 50), unit_directions(3, 80)[:50])


class TestChebyshevCenter:
    def test_square_oracle(self):
        c, r = chebyshev_center(SQUARE)
        expected = 1.0 / np.sqrt(2.0)
        np.testing.assert_allclose(c, 0.0, atol=0.02)
        assert abs(r - expected) / expected <= 0.02

    def test_triangle_oracle(self):
        # Exact halfspace solution of the right triangle: c = (r, r) with
        # r = (2 - sqrt(2)) / 2, from the three-constraint LP solved by hand.
        c, r = chebyshev_center(TRIANGLE)
        expected = (2.0 - np.sqrt(2.0)) / 2.0
        assert abs(r - expected) / expected <= 0.02
        np.testing.assert_allclose(c, expected, rtol=0.02)

    def test_repeated_single_arm(self):
        c, r = chebyshev_center(np.array([[0.3, 0.4], [0.3, 0.4]]))
        np.testing.assert_allclose(c, [0.3, 0.4], atol=1e-9)
        assert r == 0.0

    def test_radius_nonincreasing_in_directions(self):
        # Nested direction sets: more membership constraints can only shrink r.
        rng = np.random.default_rng(4)
        A = rng.standard_normal((15, 3))
        A /= np.linalg.norm(A, axis=1, keepdims=True)
        radii = [chebyshev_center(A, n_dirs)[1] for n_dirs in (20, 40, 80)]
        assert radii[0] >= radii[1] - 1e-9
        assert radii[1] >= radii[2] - 1e-9

    def test_center_stays_in_hull(self):
        rng = np.random.default_rng(9)
        for d in (2, 3, 4):
            A = rng.standard_normal((4 * d, d))
            A /= np.linalg.norm(A, axis=1, keepdims=True)
            c, _ = chebyshev_center(A)
            w = convex_combination(A, c)  # feasibility re-check
            np.testing.assert_allclose(w @ A, c, atol=1e-6)


class TestCaratheodory:
    def test_square_center(self):
        rho = caratheodory_distribution(SQUARE, np.zeros(2))
        assert rho.min() >= 0.0
        assert rho.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.count_nonzero(rho) <= 3
        np.testing.assert_allclose(rho @ SQUARE, 0.0, atol=1e-6)

    def test_segment_point(self):
        arms = np.array([[-1.0, 0.0], [1.0, 0.0]])
        rho = caratheodory_distribution(arms, np.array([0.5, 0.0]))
        np.testing.assert_allclose(rho, [0.25, 0.75], atol=1e-9)

    def test_outside_hull(self):
        with pytest.raises(InfeasiblePointError):
            caratheodory_distribution(SQUARE, np.array([2.0, 0.0]))

    def test_random_hulls_support_and_mean(self):
        rng = np.random.default_rng(12)
        for _ in range(25):
            d = int(rng.integers(2, 7))
            n = int(rng.integers(d + 2, 40))
            A = rng.standard_normal((n, d))
            A /= np.linalg.norm(A, axis=1, keepdims=True)
            w = rng.dirichlet(np.ones(n))
            target = w @ A  # interior point by construction
            rho = caratheodory_distribution(A, target)
            assert np.count_nonzero(rho) <= d + 1
            np.testing.assert_allclose(rho @ A, target, atol=1e-6)
            assert rho.min() >= 0.0


class TestWelfareFloor:
    def test_identical_arms(self):
        arms = ArmSet(np.tile(np.array([[0.6, 0.0]]), (3, 1)))
        inst = BanditInstance(arm_set=arms, theta_star=np.array([1.0, 0.0]), sigma=0.0)
        dist = john_distribution(arms)
        assert welfare_floor_check(dist, inst) == pytest.approx(3.0, abs=1e-6)  # d + 1

    def test_symmetric_arms_rejected_upstream(self):
        # The square instance that would break the floor (center at the origin,
        # ratio 0) has negative-mean arms and never constructs.
        with pytest.raises(ValueError):
            BanditInstance(arm_set=ArmSet(SQUARE), theta_star=np.array([1.0, 0.0]), sigma=0.5)

    def test_random_instance_logged_value(self):
        inst = make_synthetic_instance(4, 30, 2, seed=6)
        dist = john_distribution(inst.arm_set)
        ratio = welfare_floor_check(dist, inst)
        assert np.isfinite(ratio)
        center_mean = float(dist.center @ inst.theta_star)
        assert ratio == pytest.approx((inst.dim + 1) * center_mean / inst.mu_star, rel=1e-12)

    def test_zero_optimum_gives_infinity(self):
        arms = ArmSet(np.array([[0.0, 1.0], [0.0, -1.0]]))
        inst = BanditInstance(arm_set=arms, theta_star=np.array([1.0, 0.0]), sigma=0.0)
        dist = JohnDistribution(center=np.zeros(2), radius=1.0, rho=np.array([0.5, 0.5]))
        assert welfare_floor_check(dist, inst) == np.inf
