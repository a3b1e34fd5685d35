"""Two-phase fairness-aware linear bandit runners.

Phase I explores with a fair coin between a D-optimal round-robin schedule
(information) and samples from the inscribed-ball distribution (welfare),
in epochs of doubling length, until a data-adaptive stopping rule fires:
the largest estimated reward must clear its confidence width w and the
elapsed rounds must exceed an upper threshold scaled by the fairness
parameter.  Phase II hands the accumulated statistics to an optimistic
policy: either per-round UCB over the full arm set, or episodic phased
elimination that re-solves the design on a shrinking surviving set.

All runners are strictly sequential in one random stream; independent runs
with distinct streams can execute in parallel.  Every argmax tie breaks to
the lowest arm index.
"""

import math
from dataclasses import dataclass

import numpy as np

from .design import DesignWeights, NonSpanningArmSetError, d_optimal_design, round_robin_schedule
from .geometry import JohnDistribution, john_distribution, welfare_floor_check
from .instances import BanditInstance
from .numerics import solve_spd

PHASE_ONE = 1
PHASE_TWO = 2

FIRST_EPOCH_FACTOR = 72.0
ELIMINATION_FACTOR = 8.0


@dataclass
class SufficientStats:
    """Running design matrix V = sum w x x^T, response vector s = sum r x, round count."""

    V: np.ndarray
    s: np.ndarray
    n: int = 0

    @classmethod
    def zeros(cls, d: int) -> "SufficientStats":
        return cls(V=np.zeros((d, d)), s=np.zeros(d), n=0)

    def update(self, x: np.ndarray, r: float, w: float = 1.0) -> None:
        self.V += w * np.outer(x, x)
        self.s += (w * r) * x
        self.n += int(w)

    def copy(self) -> "SufficientStats":
        return SufficientStats(V=self.V.copy(), s=self.s.copy(), n=self.n)


@dataclass(frozen=True)
class StoppingRuleParams:
    """Constants of the exploration stopping rule.

    The defaults (48, 900, width exponent 2) are the analysis constants for
    the general infinite-arm rule; variant rules (e.g. the finite-arm one
    with width scaling as sqrt(d)) are expressed by overriding them, so the
    reduction to other optimistic policies needs no code changes.
    """

    sigma: float
    d: int
    T: int
    p_a: float = 1.0
    c_lower: float = 48.0
    c_upper: float = 900.0
    width_exponent: float = 2.0

    def __post_init__(self):
        if self.c_lower <= 0 or self.c_upper <= 0:
            raise ValueError("stopping-rule constants must be positive")


@dataclass(frozen=True)
class EpisodeBoundary:
    """Elimination bookkeeping: the surviving set computed at round ``t``."""

    t: int
    threshold: float
    surviving: np.ndarray


@dataclass(frozen=True)
class RunTrace:
    """Per-round record of one run plus phase diagnostics.

    ``true_mean`` holds <x_t, theta_star> (simulator-side), ``reward`` the
    realized observation, ``phase`` 1 or 2.  ``tau_reported`` is the value
    handed to Phase II (half the final nominal epoch length) while
    ``t_phase1`` counts actually elapsed exploration rounds.
    """

    arm_idx: np.ndarray
    true_mean: np.ndarray
    reward: np.ndarray
    phase: np.ndarray
    t_phase1: int
    tau_reported: int
    floor_ratio: float | None = None
    episodes: tuple[EpisodeBoundary, ...] | None = None

    def __len__(self) -> int:
        return self.arm_idx.size


class TraceBuilder:
    """Preallocated per-round storage filled as a run advances."""

    def __init__(self, T: int):
        self.T = T
        self.arm_idx = np.empty(T, dtype=np.int32)
        self.true_mean = np.empty(T, dtype=np.float64)
        self.reward = np.empty(T, dtype=np.float64)
        self.phase = np.empty(T, dtype=np.uint8)
        self.t = 0

    def record(self, arm: int, mean: float, reward: float, phase: int) -> None:
        i = self.t
        self.arm_idx[i] = arm
        self.true_mean[i] = mean
        self.reward[i] = reward
        self.phase[i] = phase
        self.t = i + 1

    def record_block(self, arm: int, mean: float, rewards: np.ndarray, phase: int) -> None:
        i, j = self.t, self.t + rewards.size
        self.arm_idx[i:j] = arm
        self.true_mean[i:j] = mean
        self.reward[i:j] = rewards
        self.phase[i:j] = phase
        self.t = j

    def finalize(self, t_phase1, tau_reported, floor_ratio=None, episodes=None) -> RunTrace:
        if self.t != self.T:
            raise AssertionError(f"trace has {self.t} rounds, expected {self.T}")
        return RunTrace(
            arm_idx=self.arm_idx,
            true_mean=self.true_mean,
            reward=self.reward,
            phase=self.phase,
            t_phase1=int(t_phase1),
            tau_reported=int(tau_reported),
            floor_ratio=floor_ratio,
            episodes=None if episodes is None else tuple(episodes),
        )


@dataclass(frozen=True)
class PolicyConfig:
    """Knobs of a single algorithm run.

    ``sigma`` is the scale the *algorithm* assumes; None means trust the
    environment's.  ``p`` is the fairness order the run optimizes for (the
    stopping rule normalizes it).  Stopping-rule overrides select variant
    termination rules; defaults are the general-rule constants.
    """

    T: int
    p: float = 1.0
    alpha: float = 1.0
    sigma: float | None = None
    phase2: str = "lin_ucb"
    c_lower: float = 48.0
    c_upper: float = 900.0
    width_exponent: float = 2.0
    design_eps: float = 0.01
    design_max_iters: int | None = None
    n_dirs: int | None = None

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.phase2 not in ("lin_ucb", "lin_pe"):
            raise ValueError(f"unknown phase2 policy {self.phase2!r}")

    def algorithm_sigma(self, env: BanditInstance) -> float:
        return env.sigma if self.sigma is None else self.sigma


@dataclass(frozen=True)
class Precomputed:
    """Arm-set-only quantities shared across runs of one experiment."""

    design: DesignWeights
    john: JohnDistribution


@dataclass
class Phase1Result:
    stats: SufficientStats
    t_phase1: int
    tau_reported: int
    design: DesignWeights
    john: JohnDistribution


def p_normalize(p: float) -> float:
    """Fairness-order normalization: 1 whenever p >= -1, else p itself."""
    if not math.isfinite(p):
        raise ValueError("p must be finite")
    return 1.0 if p >= -1.0 else p


def phase1_should_stop(t: int, max_est: float, params: StoppingRuleParams) -> bool:
    """Data-adaptive exploration stop test, checked at epoch boundaries.

    With w = sqrt(c_lower sigma^2 d^we lnT / t), stop once max_est clears w
    AND t (max_est - w)^2 exceeds c_upper p_a^2 sigma^2 d^we lnT.  While the
    estimate is still below its width (including max_est <= 0) exploration
    continues.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    scale = params.sigma**2 * params.d**params.width_exponent * math.log(params.T)
    w = math.sqrt(params.c_lower * scale / t)
    gap = max_est - w
    if gap <= 0.0:
        return False
    return t * gap * gap > params.c_upper * params.p_a**2 * scale


def beta_t(t: int, d: int, alpha: float, sigma: float, T: int) -> float:
    """Confidence radius sigma*sqrt(d ln(1+(t-1)/(d alpha)) + 2 lnT) + sqrt(alpha)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if t < 1:
        raise ValueError("t must be >= 1")
    return sigma * math.sqrt(d * math.log1p((t - 1) / (d * alpha)) + 2.0 * math.log(T)) + math.sqrt(alpha)


def _ucb_argmax(V_bar: np.ndarray, rhs: np.ndarray, A: np.ndarray, beta: float) -> int:
    """Lowest index maximizing <x, theta_hat> + beta ||x||_{V_bar^{-1}}.

    ``rhs`` is the (d, 1+n) block [s | A^T]; one factorized solve yields the
    estimate and every arm's width.
    """
    B = np.linalg.solve(V_bar, rhs)
    q = np.einsum("nd,dn->n", A, B[:, 1:])
    np.maximum(q, 0.0, out=q)
    scores = A @ B[:, 0]
    scores += beta * np.sqrt(q)
    return int(np.argmax(scores))


def lin_ucb_step(stats: SufficientStats, arms, beta: float) -> int:
    """One optimistic selection from regularized statistics (V already includes alpha*I)."""
    A = arms.vectors if hasattr(arms, "vectors") else np.asarray(arms, dtype=np.float64)
    rhs = np.empty((A.shape[1], A.shape[0] + 1))
    rhs[:, 0] = stats.s
    rhs[:, 1:] = A.T
    return _ucb_argmax(stats.V, rhs, A, beta)


def surviving_set(arms, theta_hat: np.ndarray, threshold: float) -> np.ndarray:
    """Indices of arms within ``threshold`` of the empirical leader (never empty)."""
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    A = arms.vectors if hasattr(arms, "vectors") else np.asarray(arms, dtype=np.float64)
    est = A @ theta_hat
    return np.nonzero(est >= est.max() - threshold)[0]


def pull_arms_epoch(
    stats: SufficientStats,
    rho: JohnDistribution,
    design: DesignWeights,
    T_tilde: int,
    env: BanditInstance,
    rng: np.random.Generator,
    trace: TraceBuilder,
    coin_fn=None,
) -> None:
    """One exploration epoch of exactly ``T_tilde`` rounds.

    Each round flips a fair coin: welfare branch samples an arm from rho;
    design branch takes the next round-robin arm of this epoch's schedule
    (each support arm ceil(lambda_z T_tilde / 3) times).  Once the schedule
    is exhausted every round samples from rho.  Statistics accumulate across
    epochs; nothing restarts.  ``coin_fn`` is a test hook replacing the coin
    (must return True for the welfare branch).
    """
    A = env.arm_set.vectors
    schedule = round_robin_schedule(design.weights, T_tilde)
    sched_arms = [idx for idx, _ in schedule]
    sched_left = [cnt for _, cnt in schedule]
    cursor = 0

    support = rho.support
    cdf = np.cumsum(rho.rho[support])
    top = support.size - 1

    for _ in range(T_tilde):
        welfare = (rng.random() < 0.5) if coin_fn is None else coin_fn()
        if welfare or not sched_arms:
            u = rng.random()
            i = int(support[min(int(np.searchsorted(cdf, u, side="right")), top)])
        else:
            pos = cursor % len(sched_arms)
            i = sched_arms[pos]
            sched_left[pos] -= 1
            if sched_left[pos] == 0:
                del sched_arms[pos]
                del sched_left[pos]
                cursor = pos
            else:
                cursor = pos + 1
        mean = env.means[i]
        r = mean + env.sigma * rng.standard_normal()
        stats.update(A[i], r)
        trace.record(i, mean, r, PHASE_ONE)


def run_phase1(
    env: BanditInstance,
    config: PolicyConfig,
    rng: np.random.Generator,
    trace: TraceBuilder,
    precomputed: Precomputed | None = None,
    coin_fn=None,
) -> Phase1Result:
    """Exploration phase: doubling epochs until the stopping rule fires.

    The design and the welfare distribution are computed once on the full
    arm set.  Epochs start at ceil(72 lnT) rounds and double; the stop test
    runs only at epoch boundaries on theta_hat = V^{-1} s.  If the next
    epoch would overrun the horizon it is truncated and the run ends with
    Phase II skipped.  ``tau_reported`` is half the final nominal epoch
    length -- roughly half the elapsed rounds, which ``t_phase1`` tracks
    exactly.
    """
    T = config.T
    d = env.dim
    sigma = config.algorithm_sigma(env)
    if precomputed is None:
        design = d_optimal_design(env.arm_set, config.design_eps, config.design_max_iters)
        john = john_distribution(env.arm_set, config.n_dirs)
    else:
        design, john = precomputed.design, precomputed.john
    params = StoppingRuleParams(
        sigma=sigma,
        d=d,
        T=T,
        p_a=p_normalize(config.p),
        c_lower=config.c_lower,
        c_upper=config.c_upper,
        width_exponent=config.width_exponent,
    )
    stats = SufficientStats.zeros(d)
    A = env.arm_set.vectors
    T_tilde = max(1, math.ceil(FIRST_EPOCH_FACTOR * math.log(T)))
    t = 0
    last_nominal = T_tilde
    while True:
        run_len = min(T_tilde, T - t)
        pull_arms_epoch(stats, john, design, run_len, env, rng, trace, coin_fn)
        t += run_len
        last_nominal = T_tilde
        T_tilde *= 2
        if t >= T:
            break
        theta = solve_spd(stats.V, stats.s).x
        max_est = float(np.max(A @ theta))
        if phase1_should_stop(t, max_est, params):
            break
    # After the loop the nominal length has already doubled, so "half the
    # final length" is exactly the last executed epoch's nominal length.
    return Phase1Result(
        stats=stats,
        t_phase1=t,
        tau_reported=last_nominal,
        design=design,
        john=john,
    )


def run_lin_ucb(
    stats: SufficientStats,
    tau_reported: int,
    env: BanditInstance,
    config: PolicyConfig,
    rng: np.random.Generator,
    trace: TraceBuilder,
) -> None:
    """Optimistic phase: per-round UCB selection until the horizon.

    Folds the regularizer into V once, then each round recomputes the
    estimate, picks the highest-UCB arm, observes, and rank-1 updates.
    ``stats`` keeps accumulating the raw (unregularized) sums so a trace
    replay reproduces them bit-exactly.
    """
    T = config.T
    d = env.dim
    sigma = config.algorithm_sigma(env)
    A = env.arm_set.vectors
    means = env.means
    env_sigma = env.sigma

    V_bar = stats.V + config.alpha * np.eye(d)
    rhs = np.empty((d, A.shape[0] + 1))
    rhs[:, 1:] = A.T
    alpha = config.alpha

    t = trace.t
    while t < T:
        t += 1
        beta = beta_t(t, d, alpha, sigma, T)
        rhs[:, 0] = stats.s
        i = _ucb_argmax(V_bar, rhs, A, beta)
        x = A[i]
        mean = means[i]
        r = mean + env_sigma * rng.standard_normal()
        outer = np.outer(x, x)
        V_bar += outer
        stats.V += outer
        stats.s += r * x
        stats.n += 1
        trace.record(i, mean, r, PHASE_TWO)


def _design_on_survivors(sub: np.ndarray, eps: float, max_iters: int | None) -> np.ndarray:
    """Design weights over the surviving arms, within their span if degenerate."""
    try:
        return d_optimal_design(sub, eps, max_iters).weights
    except NonSpanningArmSetError:
        _, svals, Vt = np.linalg.svd(sub, full_matrices=False)
        tol = max(sub.shape) * np.finfo(np.float64).eps * (svals[0] if svals.size else 0.0)
        rank = int(np.sum(svals > tol))
        if rank == 0:  # all-zero arms; no information anywhere
            return np.full(sub.shape[0], 1.0 / sub.shape[0])
        basis = Vt[:rank].T
        return d_optimal_design(sub @ basis, eps, max_iters).weights


def run_lin_pe(
    stats: SufficientStats,
    tau_reported: int,
    env: BanditInstance,
    config: PolicyConfig,
    rng: np.random.Generator,
    trace: TraceBuilder,
) -> list[EpisodeBoundary]:
    """Elimination phase: episodic designs over a shrinking surviving set.

    Thresholds the arms against the empirical leader, then per episode:
    reset V and s, solve a fresh design on the survivors (projected to
    their span when degenerate), pull each support arm ceil(lambda_a T')
    times, re-estimate from this episode only, re-threshold over the full
    arm set with the T'-based width, and double T'.  Episode lengths floor
    at max(2 tau / 3, d(d+1)); the final episode truncates at the horizon.
    """
    T = config.T
    d = env.dim
    sigma = config.algorithm_sigma(env)
    A = env.arm_set.vectors
    means = env.means
    env_sigma = env.sigma
    log_T = math.log(T)

    theta = solve_spd(stats.V, stats.s).x
    thr = ELIMINATION_FACTOR * math.sqrt(d * d * sigma * sigma * log_T / tau_reported)
    surv = surviving_set(A, theta, thr)
    boundaries = [EpisodeBoundary(t=trace.t, threshold=thr, surviving=surv)]

    T_prime = max(2.0 * tau_reported / 3.0, float(d * (d + 1)))
    t = trace.t
    while t < T:
        sub = A[surv]
        weights = _design_on_survivors(sub, config.design_eps, config.design_max_iters)
        V_ep = np.zeros((d, d))
        s_ep = np.zeros(d)
        for local in np.nonzero(weights > 0.0)[0]:
            count = max(1, math.ceil(weights[local] * T_prime - 1e-9))
            take = min(count, T - t)
            if take <= 0:
                break
            g = int(surv[local])
            x = A[g]
            draws = means[g] + env_sigma * rng.standard_normal(take)
            V_ep += take * np.outer(x, x)
            s_ep += draws.sum() * x
            trace.record_block(g, means[g], draws, PHASE_TWO)
            t += take
        if t >= T:
            break
        theta = solve_spd(V_ep, s_ep).x
        thr = ELIMINATION_FACTOR * math.sqrt(d * d * sigma * sigma * log_T / T_prime)
        surv = surviving_set(A, theta, thr)
        boundaries.append(EpisodeBoundary(t=t, threshold=thr, surviving=surv))
        T_prime *= 2.0
    return boundaries


def run_fair_lin_bandit(
    env: BanditInstance,
    config: PolicyConfig,
    rng: np.random.Generator,
    precomputed: Precomputed | None = None,
) -> RunTrace:
    """The full two-phase run: exploration, then the configured optimistic policy."""
    trace = TraceBuilder(config.T)
    ph1 = run_phase1(env, config, rng, trace, precomputed)
    episodes = None
    if ph1.t_phase1 < config.T:
        if config.phase2 == "lin_ucb":
            run_lin_ucb(ph1.stats, ph1.tau_reported, env, config, rng, trace)
        else:
            episodes = run_lin_pe(ph1.stats, ph1.tau_reported, env, config, rng, trace)
    return trace.finalize(
        t_phase1=ph1.t_phase1,
        tau_reported=ph1.tau_reported,
        floor_ratio=welfare_floor_check(ph1.john, env),
        episodes=episodes,
    )


def run_plain_lin_ucb_baseline(
    env: BanditInstance,
    config: PolicyConfig,
    rng: np.random.Generator,
    precomputed: Precomputed | None = None,
) -> RunTrace:
    """UCB from round 1 with empty statistics: the no-exploration comparison arm."""
    trace = TraceBuilder(config.T)
    stats = SufficientStats.zeros(env.dim)
    run_lin_ucb(stats, 0, env, config, rng, trace)
    return trace.finalize(t_phase1=0, tau_reported=0)


def replay_sufficient_stats(env: BanditInstance, trace: RunTrace, upto: int | None = None) -> SufficientStats:
    """Re-accumulate V, s from a trace in round order (bit-exact replay)."""
    A = env.arm_set.vectors
    stats = SufficientStats.zeros(env.dim)
    n = len(trace) if upto is None else upto
    for i in range(n):
        stats.update(A[trace.arm_idx[i]], trace.reward[i])
    return stats
