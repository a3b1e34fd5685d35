"""Small dense symmetric linear algebra used throughout the simulator.

Everything here works on plain float64 numpy arrays.  Solves go through
factorizations (Cholesky) rather than explicit inverses; near-singular
matrices get a small diagonal jitter which is reported back to the caller.
All logarithms are natural logs.
"""

from typing import NamedTuple

import numpy as np
import scipy.linalg


class NonPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a matrix required to be positive-definite fails to factor."""


class SpdSolution(NamedTuple):
    """Solution of an SPD system plus the diagonal jitter that was applied (0.0 if none)."""

    x: np.ndarray
    jitter: float


def _as_square(V: np.ndarray) -> np.ndarray:
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2 or V.shape[0] != V.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {V.shape}")
    return V


def jitter_for(V: np.ndarray) -> float:
    """Diagonal jitter used when a factorization fails: 1e-10*trace(V)/d + 1e-12."""
    V = _as_square(V)
    d = V.shape[0]
    return 1e-10 * float(np.trace(V)) / d + 1e-12


def rank1_update(V: np.ndarray, x: np.ndarray, w: float = 1.0) -> np.ndarray:
    """Return V + w * x x^T.  Symmetry is preserved bit-exactly.

    ``w`` covers both single pulls (w=1) and repeated pulls of the same arm
    (w = number of pulls).
    """
    V = _as_square(V)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (V.shape[0],):
        raise ValueError(f"dimension mismatch: V is {V.shape}, x is {x.shape}")
    if w < 0:
        raise ValueError(f"weight must be nonnegative, got {w}")
    # outer(x, x) is symmetric bit-exactly (float multiply commutes), so the sum is too.
    return V + w * np.outer(x, x)


def _factor(V: np.ndarray) -> np.ndarray:
    """Cholesky factor, treating a numerically rank-deficient success as failure.

    An exactly singular matrix can still factor when rounding noise makes a
    pivot slightly positive; the resulting solves explode along the null
    direction.  A tiny pivot ratio flags that case.
    """
    L = np.linalg.cholesky(V)
    dg = np.diag(L)
    if (dg.min() / dg.max()) ** 2 <= 1e-12:
        raise np.linalg.LinAlgError("numerically rank-deficient")
    return L


def _cholesky(V: np.ndarray, allow_jitter: bool) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of V, retrying once with jitter when allowed."""
    if not np.all(np.isfinite(V)):
        raise ValueError("matrix has non-finite entries")
    try:
        return _factor(V), 0.0
    except np.linalg.LinAlgError:
        if not allow_jitter:
            raise NonPositiveDefiniteError("matrix is not positive-definite") from None
    jit = jitter_for(V)
    Vj = V + jit * np.eye(V.shape[0])
    try:
        return np.linalg.cholesky(Vj), jit
    except np.linalg.LinAlgError:
        raise NonPositiveDefiniteError(
            "matrix is not positive-definite even after jitter"
        ) from None


def solve_spd(V: np.ndarray, b: np.ndarray) -> SpdSolution:
    """Solve V y = b for symmetric positive-(semi)definite V via Cholesky.

    When the factorization fails (singular or near-singular V), a diagonal
    jitter is added and the solve is retried; the jitter used is reported in
    the result so callers can surface it in diagnostics.
    """
    V = _as_square(V)
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != V.shape[0]:
        raise ValueError(f"dimension mismatch: V is {V.shape}, b is {b.shape}")
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side has non-finite entries")
    L, jit = _cholesky(V, allow_jitter=True)
    y = scipy.linalg.solve_triangular(L, b, lower=True)
    x = scipy.linalg.solve_triangular(L.T, y, lower=False)
    return SpdSolution(x, jit)


def mahalanobis_sq(V: np.ndarray, x: np.ndarray) -> float:
    """x^T V^{-1} x for positive-definite V (jitter applied if needed)."""
    V = _as_square(V)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (V.shape[0],):
        raise ValueError(f"dimension mismatch: V is {V.shape}, x is {x.shape}")
    L, _ = _cholesky(V, allow_jitter=True)
    z = scipy.linalg.solve_triangular(L, x, lower=True)
    return float(z @ z)


def mahalanobis_sq_rows(V: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Row-wise x_i^T V^{-1} x_i for a stack of vectors X (shape (n, d)).

    Vectorized companion of :func:`mahalanobis_sq`; one factorization serves
    every row.
    """
    V = _as_square(V)
    X = np.asarray(X, dtype=np.float64)
    L, _ = _cholesky(V, allow_jitter=True)
    Z = scipy.linalg.solve_triangular(L, X.T, lower=True)
    return np.einsum("ij,ij->j", Z, Z)


def logdet(V: np.ndarray) -> float:
    """Natural-log determinant of positive-definite V.

    Raises :class:`NonPositiveDefiniteError` when the factorization fails;
    no jitter is applied here.
    """
    V = _as_square(V)
    L, _ = _cholesky(V, allow_jitter=False)
    return 2.0 * float(np.sum(np.log(np.diag(L))))
