"""Environment construction: invariants, determinism, and sampling oracles."""

import numpy as np
import pytest

from fairlin.instances import (
    ArmSet,
    BanditInstance,
    best_arm,
    make_synthetic_instance,
    sample_reward,
)


class TestArmSet:
    def test_rejects_oversized_norms(self):
        with pytest.raises(ValueError):
            ArmSet(np.array([[1.5, 0.0]]))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            ArmSet(np.empty((0, 3)))

    def test_order_stable(self):
        vecs = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert ArmSet(vecs).n_arms == 2
        np.testing.assert_array_equal(ArmSet(vecs).vectors, vecs)


class TestBanditInstance:
    def test_rejects_negative_means(self):
        # A symmetric square of arms around the origin violates the
        # nonnegative-mean assumption for any nonzero parameter.
        s = 1.0 / np.sqrt(2.0)
        square = ArmSet(np.array([[s, s], [s, -s], [-s, s], [-s, -s]]))
        with pytest.raises(ValueError):
            BanditInstance(arm_set=square, theta_star=np.array([1.0, 0.0]), sigma=0.5)

    def test_clamps_float_noise(self):
        arms = ArmSet(np.array([[1.0, 0.0], [0.0, 1.0]]))
        inst = BanditInstance(arm_set=arms, theta_star=np.array([1.0, 0.0]), sigma=0.0)
        assert inst.means.min() >= 0.0

    def test_json_roundtrip(self):
        inst = make_synthetic_instance(4, 10, 2, seed=3)
        again = BanditInstance.from_json(inst.to_json())
        np.testing.assert_array_equal(again.arm_set.vectors, inst.arm_set.vectors)
        np.testing.assert_array_equal(again.theta_star, inst.theta_star)
        assert again.sigma == inst.sigma


class TestSyntheticGenerator:
    def test_invariants_hold(self):
        inst = make_synthetic_instance(2, 2, 2, seed=7)
        norms = np.linalg.norm(inst.arm_set.vectors, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-9)
        assert np.all(inst.means >= 0.0)
        assert np.linalg.norm(inst.theta_star) == pytest.approx(1.0, abs=1e-12)

    def test_deterministic_in_seed(self):
        a = make_synthetic_instance(5, 30, 3, seed=7)
        b = make_synthetic_instance(5, 30, 3, seed=7)
        np.testing.assert_array_equal(a.arm_set.vectors, b.arm_set.vectors)
        np.testing.assert_array_equal(a.theta_star, b.theta_star)
        c = make_synthetic_instance(5, 30, 3, seed=8)
        assert not np.array_equal(a.arm_set.vectors, c.arm_set.vectors)

    def test_best_mean_in_unit_interval(self):
        inst = make_synthetic_instance(10, 100, 3, seed=1)
        assert 0.0 < inst.mu_star <= 1.0

    def test_sparsity_respected(self):
        inst = make_synthetic_instance(8, 20, 3, seed=5)
        assert np.count_nonzero(inst.theta_star) == 3

    def test_flipping_preserves_norm_and_sign(self):
        inst = make_synthetic_instance(6, 50, 4, seed=9)
        np.testing.assert_allclose(np.linalg.norm(inst.arm_set.vectors, axis=1), 1.0, atol=1e-9)
        assert np.all(inst.arm_set.vectors @ inst.theta_star >= 0.0)

    @pytest.mark.parametrize(
        "d,n,s",
        [(0, 5, 1), (65, 70, 1), (4, 3, 2), (4, 8, 0), (4, 8, 5)],
    )
    def test_infeasible_parameters(self, d, n, s):
        with pytest.raises(ValueError):
            make_synthetic_instance(d, n, s, seed=0)


class TestSampleReward:
    def test_zero_noise_is_exact(self):
        inst = make_synthetic_instance(3, 10, 2, seed=2, sigma=0.0)
        rng = np.random.default_rng(0)
        for i in range(inst.n_arms):
            assert sample_reward(inst, i, rng) == inst.means[i]

    def test_reproducible_sequence(self):
        inst = make_synthetic_instance(3, 10, 2, seed=2)
        seq1 = [sample_reward(inst, 0, np.random.default_rng(5)) for _ in range(1)]
        rng_a, rng_b = np.random.default_rng(5), np.random.default_rng(5)
        a = [sample_reward(inst, i % 10, rng_a) for i in range(50)]
        b = [sample_reward(inst, i % 10, rng_b) for i in range(50)]
        assert a == b
        assert seq1[0] == a[0]

    def test_index_out_of_range(self):
        inst = make_synthetic_instance(3, 10, 2, seed=2)
        with pytest.raises(IndexError):
            sample_reward(inst, 10, np.random.default_rng(0))

    def test_monte_carlo_mean(self):
        # Empirical mean of 1e5 draws within 4 sigma / sqrt(1e5) of the truth.
        inst = make_synthetic_instance(3, 10, 2, seed=2, sigma=0.5)
        rng = np.random.default_rng(11)
        n = 100_000
        draws = np.array([sample_reward(inst, 4, rng) for _ in range(n)])
        assert abs(draws.mean() - inst.means[4]) <= 4 * inst.sigma / np.sqrt(n)


class TestBestArm:
    def test_basis_arms(self):
        arms = ArmSet(np.array([[1.0, 0.0], [0.0, 1.0]]))
        inst = BanditInstance(arm_set=arms, theta_star=np.array([1.0, 0.0]), sigma=0.0)
        assert best_arm(inst) == (0, 1.0)

    def test_tie_breaks_to_lowest_index(self):
        arms = ArmSet(np.array([[0.0, 1.0], [1.0, 0.0], [0.0, 1.0]]))
        inst = BanditInstance(arm_set=arms, theta_star=np.array([0.0, 1.0]), sigma=0.0)
        idx, mean = best_arm(inst)
        assert idx == 0 and mean == 1.0

    def test_matches_exhaustive_scan(self):
        for seed in range(5):
            inst = make_synthetic_instance(6, 40, 3, seed=seed)
            idx, mean = best_arm(inst)
            means = inst.arm_set.vectors @ inst.theta_star
            assert idx == int(np.argmax(means))
            assert mean == pytest.approx(float(means.max()), abs=1e-12)
