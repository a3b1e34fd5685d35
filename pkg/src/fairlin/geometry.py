"""Convex-hull geometry: an inscribed-ball center and small-support sampling.

The welfare anchor of the exploration phase is the center of the largest
Euclidean ball inscribed in conv(arms).  A vertex representation makes the
exact halfspace LP impractical, so the center is computed from a sampled
set of probe directions: maximize r such that c + r*u_j stays a convex
combination of the arms for every probe direction u_j.  The center is then
expressed as a convex combination of at most d+1 arms (Caratheodory
reduction), giving the sampling distribution used during exploration.
"""

from dataclasses import dataclass

import numpy as np
import scipy.optimize
import scipy.sparse
import scipy.stats

from .instances import ArmSet, BanditInstance

MEAN_TOL = 1e-6


class LpInfeasibleError(RuntimeError):
    """The LP solver failed; cannot happen for well-formed nonempty arm sets."""


class InfeasiblePointError(ValueError):
    """The requested point lies outside the convex hull beyond tolerance."""


@dataclass(frozen=True)
class JohnDistribution:
    """Approximate inscribed-ball center with a small-support distribution.

    ``rho`` is a probability vector over arm indices whose mean is ``center``
    (within 1e-6) with support of at most d+1 arms; ``radius`` is the sampled
    inscribed-ball radius.
    """

    center: np.ndarray
    radius: float
    rho: np.ndarray

    @property
    def support(self) -> np.ndarray:
        return np.nonzero(self.rho > 0.0)[0]


def _arm_matrix(arms) -> np.ndarray:
    if isinstance(arms, ArmSet):
        return arms.vectors
    A = np.asarray(arms, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] == 0:
        raise ValueError(f"expected a nonempty (n, d) arm matrix, got shape {A.shape}")
    return A


def default_n_dirs(d: int) -> int:
    return max(50, 10 * d)


def unit_directions(d: int, n_dirs: int) -> np.ndarray:
    """Deterministic quasi-uniform unit directions (low-discrepancy construction).

    Sobol points mapped through the Gaussian inverse CDF and normalized.
    The sequence is nested: the first k rows for any k < n_dirs are exactly
    ``unit_directions(d, k)``.
    """
    if d == 1:
        out = np.empty((n_dirs, 1))
        out[0::2] = 1.0
        out[1::2] = -1.0
        return out
    sobol = scipy.stats.qmc.Sobol(d, scramble=False)
    m = 2
    while (1 << m) < n_dirs + 4:
        m += 1
    g = scipy.stats.norm.ppf(sobol.random_base2(m))
    norms = np.linalg.norm(g, axis=1)
    ok = np.isfinite(norms) & (norms > 1e-12)  # drops the 0 and (0.5, ..., 0.5) points
    g, norms = g[ok], norms[ok]
    if g.shape[0] < n_dirs:  # cannot happen for sane n_dirs, but stay total
        raise ValueError(f"could not build {n_dirs} directions in dimension {d}")
    return g[:n_dirs] / norms[:n_dirs, None]


def chebyshev_center(arms, n_dirs: int | None = None) -> tuple[np.ndarray, float]:
    """Center and radius of the largest sampled-direction inscribed ball.

    Solves: maximize r over (c, r, lambda^(j)) subject to
    sum_i lambda^(j)_i x_i = c + r*u_j with each lambda^(j) on the simplex,
    for a fixed deterministic direction set.  Membership is certified only
    along the probed directions, so the radius is an upper bound on the true
    inscribed radius that tightens as n_dirs grows.  On a non-spanning arm
    set the optimum degenerates to r = 0 with c a feasible point.
    """
    A = _arm_matrix(arms)
    n, d = A.shape
    if n_dirs is None:
        n_dirs = default_n_dirs(d)
    U = unit_directions(d, n_dirs)

    # Variables: [c (d), r (1), lambda^(1) (n), ..., lambda^(J) (n)]
    n_var = d + 1 + n_dirs * n
    cost = np.zeros(n_var)
    cost[d] = -1.0  # maximize r

    rows, cols, vals = [], [], []
    rhs = []
    row = 0
    for j in range(n_dirs):
        lam0 = d + 1 + j * n
        # sum_i lambda_i x_i - c - r u_j = 0   (d rows)
        for k in range(d):
            rows.extend([row] * (n + 2))
            cols.extend([lam0 + i for i in range(n)] + [k, d])
            vals.extend(list(A[:, k]) + [-1.0, -U[j, k]])
            rhs.append(0.0)
            row += 1
        # sum_i lambda_i = 1
        rows.extend([row] * n)
        cols.extend(lam0 + i for i in range(n))
        vals.extend([1.0] * n)
        rhs.append(1.0)
        row += 1
    A_eq = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(row, n_var)).tocsr()
    bounds = [(None, None)] * d + [(0.0, None)] + [(0.0, None)] * (n_dirs * n)

    res = scipy.optimize.linprog(cost, A_eq=A_eq, b_eq=rhs, bounds=bounds, method="highs")
    if not res.success:
        raise LpInfeasibleError(f"inscribed-ball LP failed: {res.message}")
    return res.x[:d].copy(), max(float(res.x[d]), 0.0)


def convex_combination(arms, target: np.ndarray, tol: float = MEAN_TOL) -> np.ndarray:
    """Nonnegative weights summing to 1 with sum_i w_i x_i = target.

    The feasibility program behind membership checks: solved as a
    nonnegative least-squares on the arms augmented with the simplex row.
    Raises :class:`InfeasiblePointError` when the residual exceeds ``tol``.
    """
    A = _arm_matrix(arms)
    target = np.asarray(target, dtype=np.float64)
    M = np.vstack([A.T, np.ones(A.shape[0])])
    b = np.concatenate([target, [1.0]])
    w, resid = scipy.optimize.nnls(M, b)
    if resid > tol * max(1.0, float(np.linalg.norm(b))):
        raise InfeasiblePointError(
            f"point is outside the convex hull (residual {resid:.3g})"
        )
    return w / w.sum()


def caratheodory_distribution(arms, c: np.ndarray) -> np.ndarray:
    """Distribution over arms with mean c and support at most d+1.

    Starts from any feasible convex combination and repeatedly removes an
    affine dependence among the active atoms (a null-space direction of the
    stacked [arms; 1] matrix), zeroing one weight per step while preserving
    the mean, until the support is affinely independent.
    """
    A = _arm_matrix(arms)
    n, d = A.shape
    w = convex_combination(A, c)
    support = np.nonzero(w > 0.0)[0]
    while support.size > d + 1:
        Xs = A[support]
        M = np.vstack([Xs.T, np.ones(support.size)])  # (d+1, m) with m > d+1
        _, _, Vt = np.linalg.svd(M)
        nu = Vt[-1]
        if np.max(nu) < np.max(-nu):
            nu = -nu
        pos = nu > 1e-14
        steps = w[support][pos] / nu[pos]
        t = float(np.min(steps))
        w_s = w[support] - t * nu
        w_s[w_s < 1e-15] = 0.0
        w[support] = w_s
        w /= w.sum()
        support = np.nonzero(w > 0.0)[0]
    drift = np.linalg.norm(w @ A - np.asarray(c, dtype=np.float64))
    if drift > MEAN_TOL:
        raise InfeasiblePointError(f"reduction drifted off the target mean ({drift:.3g})")
    return w


def john_distribution(arms, n_dirs: int | None = None) -> JohnDistribution:
    """Inscribed-ball center plus its small-support sampling distribution."""
    c, r = chebyshev_center(arms, n_dirs)
    rho = caratheodory_distribution(arms, c)
    return JohnDistribution(center=c, radius=r, rho=rho)


def welfare_floor_check(dist: JohnDistribution, inst: BanditInstance) -> float:
    """Diagnostic ratio (d+1) * <c, theta_star> / mu_star.

    A value >= 1 certifies that sampling with mean at the center keeps the
    expected reward above mu_star/(d+1) on this instance.  Simulator-side
    only (uses the hidden parameter); the algorithms never see it and no
    fallback triggers when it is below 1.
    """
    if inst.mu_star <= 0.0:
        return float("inf")
    center_mean = float(dist.center @ inst.theta_star)
    return (inst.dim + 1) * center_mean / inst.mu_star
