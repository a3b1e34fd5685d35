"""Fairness-aware stochastic linear bandit simulator.

A two-phase meta-algorithm for Nash- and p-mean-regret minimization over
finite arm sets, with the geometric subroutines it needs (D-optimal design
via Frank-Wolfe, inscribed-ball center with a small-support sampling
distribution) and a reproducible benchmark harness.
"""

from .design import DesignWeights, d_optimal_design, g_value, round_robin_schedule
from .geometry import JohnDistribution, caratheodory_distribution, chebyshev_center, john_distribution, welfare_floor_check
from .instances import ArmSet, BanditInstance, best_arm, make_synthetic_instance, sample_reward
from .metrics import (
    ExpectedRewardTrace,
    RegretReport,
    aggregate_runs,
    avg_regret,
    compute_report,
    nash_regret,
    p_mean,
    p_regret,
)
from .policies import (
    PolicyConfig,
    RunTrace,
    StoppingRuleParams,
    SufficientStats,
    beta_t,
    lin_ucb_step,
    p_normalize,
    phase1_should_stop,
    pull_arms_epoch,
    run_fair_lin_bandit,
    run_lin_pe,
    run_lin_ucb,
    run_phase1,
    run_plain_lin_ucb_baseline,
    surviving_set,
)
from .harness import ExperimentConfig, compare, parse_config, run_experiment

__version__ = "0.1.0"
