"""D-optimal design over a finite arm set, solved with Frank-Wolfe.

The design is a probability distribution over arms maximizing
log det(U(lambda)) with U(lambda) = sum_x lambda_x x x^T.  At the optimum
the G-value g(lambda) = max_x x^T U(lambda)^{-1} x equals d (Kiefer-Wolfowitz
duality), which the solver's stopping test and the tests check.  The
support is brought under d(d+1)/2 arms by a Caratheodory reduction on the
second-moment vectors, which preserves U(lambda) -- and hence the G-value
-- exactly.  The solver also converts a design into the round-robin pull
schedule used by the exploration phase.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .instances import ArmSet
from .numerics import mahalanobis_sq_rows

PRUNE_THRESHOLD = 1e-6
DEFAULT_EPS = 0.01


class NonSpanningArmSetError(ValueError):
    """The arms do not span R^d, so no nonsingular design exists."""


class SingularDesignError(ValueError):
    """The design matrix U(lambda) is singular."""


@dataclass(frozen=True)
class DesignWeights:
    """A design: per-arm weights, its G-value, and solver bookkeeping.

    ``converged`` is False when the iteration budget ran out before the
    target tolerance; the weights are then the best iterate found.
    """

    weights: np.ndarray
    g_value: float
    iterations_used: int
    converged: bool = True

    @property
    def support(self) -> np.ndarray:
        """Indices of arms with positive weight, in ascending order."""
        return np.nonzero(self.weights > 0.0)[0]


def _arm_matrix(arms) -> np.ndarray:
    if isinstance(arms, ArmSet):
        return arms.vectors
    A = np.asarray(arms, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] == 0:
        raise ValueError(f"expected a nonempty (n, d) arm matrix, got shape {A.shape}")
    return A


def _design_matrix(A: np.ndarray, w: np.ndarray) -> np.ndarray:
    return (A * w[:, None]).T @ A


def _spanning_init(A: np.ndarray) -> np.ndarray:
    """Greedy (pivoted-QR) selection of d arms spanning R^d."""
    n, d = A.shape
    _, R, piv = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(n, d) * np.finfo(np.float64).eps * (diag[0] if diag.size else 0.0)
    if diag.size < d or np.any(diag <= tol):
        raise NonSpanningArmSetError("arms do not span R^d")
    return piv[:d]


def _fw_steps(A, w, U, target, max_iters, support=None):
    """Frank-Wolfe ascent steps; restricted to ``support`` when given.

    Each step moves mass gamma = (g/d - 1)/(g - 1) onto the arm of largest
    predictive variance, a rank-1 update of U.  Returns the iterate, the
    updated U, whether the target was reached, and the steps taken.
    """
    d = A.shape[1]
    probe = A if support is None else A[support]
    for k in range(max_iters):
        q = mahalanobis_sq_rows(U, probe)
        j = int(np.argmax(q))
        g = float(q[j])
        if g <= target:
            return w, U, True, k
        tgt = j if support is None else int(support[j])
        gamma = (g / d - 1.0) / (g - 1.0)
        w *= 1.0 - gamma
        w[tgt] += gamma
        U = (1.0 - gamma) * U + gamma * np.outer(A[tgt], A[tgt])
    return w, U, False, max_iters


def _moment_reduce(A: np.ndarray, w: np.ndarray, cap: int) -> np.ndarray:
    """Caratheodory reduction of the design support in second-moment space.

    The vectors (svec(x x^T), 1) of the support atoms become linearly
    dependent whenever the support exceeds d(d+1)/2 + 1 -- and already at
    d(d+1)/2 + 1 for unit-norm arms, whose moment vectors share the trace
    identity.  Pivoting along a null direction zeroes one weight per step
    while preserving U(lambda) and the total mass exactly.
    """
    d = A.shape[1]
    iu = np.triu_indices(d)
    support = np.nonzero(w)[0]
    while support.size > cap:
        M = np.empty((iu[0].size + 1, support.size))
        for col, i in enumerate(support):
            M[:-1, col] = np.outer(A[i], A[i])[iu]
            M[-1, col] = 1.0
        _, svals, Vt = np.linalg.svd(M)
        if M.shape[1] <= M.shape[0] and svals[-1] > 1e-9 * max(svals[0], 1.0):
            break  # columns genuinely independent; exact reduction impossible
        nu = Vt[-1]
        if np.max(nu) < np.max(-nu):
            nu = -nu
        pos = np.nonzero(nu > 1e-14)[0]
        steps = w[support[pos]] / nu[pos]
        k = int(np.argmin(steps))
        ws = w[support] - float(steps[k]) * nu
        ws[pos[k]] = 0.0
        ws[ws < 0.0] = 0.0
        w[support] = ws
        w /= w.sum()
        support = np.nonzero(w)[0]
    return w


def _force_support_cap(A, w, cap, target, max_repair=300):
    """Last-resort cap enforcement for non-unit-norm arm sets.

    Drops a low-weight atom, rebalances the remaining support with
    restricted Frank-Wolfe, and accepts the first candidate whose full-set
    G-value stays within tolerance.  Gives up (keeping the larger support)
    when no candidate survives.
    """
    d = A.shape[1]
    support = np.nonzero(w)[0]
    while support.size > cap:
        accepted = False
        for victim in support[np.argsort(w[support])]:
            trial = w.copy()
            trial[victim] = 0.0
            trial /= trial.sum()
            U = _design_matrix(A, trial)
            try:
                np.linalg.cholesky(U)
            except np.linalg.LinAlgError:
                continue
            sup = np.nonzero(trial)[0]
            trial, U, _, _ = _fw_steps(A, trial, U, target - (target - d) * 0.2, max_repair, support=sup)
            if float(np.max(mahalanobis_sq_rows(U, A))) <= target:
                w = trial
                accepted = True
                break
        if not accepted:
            break
        w = _moment_reduce(A, w, cap)
        support = np.nonzero(w)[0]
    return w


def d_optimal_design(arms, eps: float = DEFAULT_EPS, max_iters: int | None = None) -> DesignWeights:
    """Frank-Wolfe solver for the D-optimal design over a finite arm set.

    Starts uniform on a greedily chosen spanning subset of d arms, runs
    Frank-Wolfe until the G-value drops to d*(1+eps) (with a small margin
    so post-processing cannot push it back over), prunes weights below
    1e-6, and reduces the support to at most d(d+1)/2 arms.

    Deterministic given the input arm order.  Raises
    :class:`NonSpanningArmSetError` when no nonsingular design exists; a
    blown iteration budget returns the best iterate with ``converged=False``.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    A = _arm_matrix(arms)
    n, d = A.shape
    if max_iters is None:
        max_iters = 1000 * d

    init = _spanning_init(A)
    w = np.zeros(n)
    w[init] = 1.0 / d
    U = _design_matrix(A, w)

    target = d * (1.0 + eps)
    inner = d * (1.0 + 0.95 * eps)
    w, U, fw_converged, iterations = _fw_steps(A, w, U, inner, max_iters)

    w = np.where(w >= PRUNE_THRESHOLD, w, 0.0)
    w /= w.sum()
    cap = d * (d + 1) // 2
    w = _moment_reduce(A, w, cap)
    if np.count_nonzero(w) > cap:
        w = _force_support_cap(A, w, cap, target)
    g = float(np.max(mahalanobis_sq_rows(_design_matrix(A, w), A)))
    return DesignWeights(
        weights=w,
        g_value=g,
        iterations_used=iterations,
        converged=fw_converged and g <= target,
    )


def g_value(arms, weights) -> float:
    """G-optimal value max_x x^T U(lambda)^{-1} x of an arbitrary design.

    Independent of the Frank-Wolfe path: builds U from scratch and fails
    with :class:`SingularDesignError` when the weighted arms do not span.
    """
    A = _arm_matrix(arms)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (A.shape[0],):
        raise ValueError(f"weights shape {w.shape} does not match {A.shape[0]} arms")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be a probability distribution over arms")
    U = _design_matrix(A, w)
    try:
        L = np.linalg.cholesky(U)
    except np.linalg.LinAlgError:
        raise SingularDesignError("design matrix U(lambda) is singular") from None
    Z = scipy.linalg.solve_triangular(L, A.T, lower=True)
    return float(np.max(np.einsum("ij,ij->j", Z, Z)))


def round_robin_schedule(weights, T_tilde: int) -> list[tuple[int, int]]:
    """Per-arm pull counts ceil(lambda_z * T_tilde / 3) for the support arms.

    Entries are (arm_index, count) ordered by arm index; the exploration
    phase consumes them one pull at a time in round-robin order.  The 1/3
    factor leaves the remaining pulls (in expectation) to the welfare
    distribution.
    """
    if T_tilde < 1:
        raise ValueError(f"T_tilde must be >= 1, got {T_tilde}")
    w = np.asarray(weights, dtype=np.float64)
    schedule = []
    for idx in np.nonzero(w > 0.0)[0]:
        # Guard against float noise pushing an exact integer over the ceiling.
        count = math.ceil(w[idx] * T_tilde / 3.0 - 1e-9)
        schedule.append((int(idx), max(1, count)))
    return schedule
