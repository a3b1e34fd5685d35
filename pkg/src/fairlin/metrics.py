"""Nash, p-mean, and average regret over expected-reward traces.

Regret at horizon t is mu_star minus a power mean of the per-round expected
rewards up to t: the arithmetic mean at p=1, the geometric mean at p=0, and
harder fairness penalties as p decreases.  Geometric and negative-p means
are accumulated in the log domain so traces of millions of rounds with
rewards in (0, 1] neither underflow nor overflow.  A zero expected reward
with p <= 0 collapses the mean to 0 (regret = mu_star), the limit behavior
of the power mean.
"""

import math
from dataclasses import dataclass, field

import numpy as np

VALUE_TOL = 1e-12
MU_TOL = 1e-9


@dataclass(frozen=True)
class ExpectedRewardTrace:
    """Per-round estimates of the expected reward, with the optimum attached."""

    mu_star: float
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("values must be a nonempty 1-D array")
        if np.any(vals < -VALUE_TOL):
            raise ValueError(f"expected rewards must be nonnegative, min {vals.min():.3g}")
        vals = np.where(vals < 0.0, 0.0, vals)
        if self.mu_star < float(vals.max()) - MU_TOL:
            raise ValueError("mu_star is below the largest traced value")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class RegretReport:
    """Regret curves sampled at increasing checkpoints.

    ``p_regret`` maps each requested p to its curve; ``mean_expected_reward``
    is the running arithmetic mean of the trace (so avg_regret is exactly
    mu_star minus it).
    """

    checkpoints: np.ndarray
    mean_expected_reward: np.ndarray
    avg_regret: np.ndarray
    nash_regret: np.ndarray
    p_regret: dict[float, np.ndarray]
    p_list: tuple[float, ...] = field(default=())

    def final(self, p: float | None = None) -> float:
        """Regret at the last checkpoint: Nash when p is None, else at p."""
        if p is None:
            return float(self.nash_regret[-1])
        return float(self.p_regret[p][-1])


def p_mean(values: np.ndarray, p: float) -> float:
    """Power mean of order p of nonnegative values (p=0: geometric mean).

    Computed in the log domain; any zero value makes the result 0 for
    p <= 0.  p=1 is routed to the plain arithmetic mean so it matches
    avg-regret bit-for-bit.
    """
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim != 1 or vals.size == 0:
        raise ValueError("values must be a nonempty 1-D array")
    if np.any(vals < 0.0):
        raise ValueError("values must be nonnegative")
    if p == 1.0:
        return float(np.mean(vals))
    if p == 0.0:
        if np.any(vals == 0.0):
            return 0.0
        return float(np.exp(np.mean(np.log(vals))))
    if p < 0.0 and np.any(vals == 0.0):
        return 0.0
    with np.errstate(divide="ignore"):  # log(0) -> -inf is the intended limit for p > 0
        scaled = p * np.log(vals)
    m = float(np.max(scaled))
    if m == -np.inf:  # all values zero with p > 0
        return 0.0
    lse = m + math.log(float(np.sum(np.exp(scaled - m))))
    return math.exp((lse - math.log(vals.size)) / p)


def avg_regret(trace: ExpectedRewardTrace, upto: int) -> float:
    """mu_star minus the arithmetic mean of the first ``upto`` values."""
    _check_upto(trace, upto)
    return trace.mu_star - float(np.mean(trace.values[:upto]))


def nash_regret(trace: ExpectedRewardTrace, upto: int) -> float:
    """mu_star minus the geometric mean of the first ``upto`` values."""
    _check_upto(trace, upto)
    return trace.mu_star - p_mean(trace.values[:upto], 0.0)


def p_regret(trace: ExpectedRewardTrace, p: float, upto: int) -> float:
    """mu_star minus the order-p power mean of the first ``upto`` values.

    p=0 routes to :func:`nash_regret` and p=1 to :func:`avg_regret`,
    bit-identically.
    """
    _check_upto(trace, upto)
    if p == 0.0:
        return nash_regret(trace, upto)
    if p == 1.0:
        return avg_regret(trace, upto)
    return trace.mu_star - p_mean(trace.values[:upto], p)


def _check_upto(trace: ExpectedRewardTrace, upto: int) -> None:
    if not (1 <= upto <= len(trace)):
        raise ValueError(f"upto must be in [1, {len(trace)}], got {upto}")


def aggregate_runs(run_traces, mu_star: float) -> ExpectedRewardTrace:
    """Average per-round true means across runs (average first, then regret)."""
    arrays = [np.asarray(a, dtype=np.float64) for a in run_traces]
    if not arrays:
        raise ValueError("need at least one run")
    T = arrays[0].size
    if any(a.size != T for a in arrays):
        raise ValueError("all runs must have the same length")
    return ExpectedRewardTrace(mu_star=mu_star, values=np.mean(arrays, axis=0))


def log_spaced_checkpoints(T: int, count: int = 64) -> np.ndarray:
    """Increasing round indices, log-spaced from max(1, T/1e4) to T inclusive."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    lo = max(1.0, T / 1e4)
    pts = np.geomspace(lo, T, max(1, count))
    cps = np.unique(np.clip(np.rint(pts).astype(np.int64), 1, T))
    return cps


def compute_report(
    trace: ExpectedRewardTrace,
    p_list,
    checkpoints: np.ndarray | None = None,
    n_checkpoints: int = 64,
) -> RegretReport:
    """Evaluate all regret curves at the checkpoints via prefix accumulators.

    Prefix sums (plain, log, and log-sum-exp per p) make every checkpoint
    exact without storing per-round regret.
    """
    p_list = tuple(float(p) for p in p_list)
    if not p_list:
        raise ValueError("p_list must be nonempty")
    vals = trace.values
    T = vals.size
    if checkpoints is None:
        checkpoints = log_spaced_checkpoints(T, n_checkpoints)
    cps = np.asarray(checkpoints, dtype=np.int64)
    if cps.size == 0 or cps[0] < 1 or cps[-1] > T or np.any(np.diff(cps) <= 0):
        raise ValueError("checkpoints must be increasing indices in [1, T]")
    idx = cps - 1
    counts = cps.astype(np.float64)

    run_mean = np.cumsum(vals)[idx] / counts
    avg = trace.mu_star - run_mean

    with np.errstate(divide="ignore"):
        logs = np.log(vals)  # -inf where the value is 0; propagates as intended
    gm = np.exp(np.cumsum(logs)[idx] / counts)
    nash = trace.mu_star - gm

    p_curves: dict[float, np.ndarray] = {}
    for p in p_list:
        if p == 0.0:
            p_curves[p] = nash.copy()
        elif p == 1.0:
            p_curves[p] = avg.copy()
        else:
            with np.errstate(invalid="ignore"):
                lse = np.logaddexp.accumulate(p * logs)[idx]
            pm = np.exp((lse - np.log(counts)) / p)
            p_curves[p] = trace.mu_star - pm
    return RegretReport(
        checkpoints=cps,
        mean_expected_reward=run_mean,
        avg_regret=avg,
        nash_regret=nash,
        p_regret=p_curves,
        p_list=p_list,
    )
