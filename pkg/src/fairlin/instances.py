"""Finite linear-bandit environments.

An environment is a finite set of arms in the unit ball of R^d, a hidden
parameter theta_star with nonnegative mean reward for every arm, and
Gaussian reward noise of scale sigma.  The synthetic generator draws arms
on the unit sphere, draws a sparse unit-norm theta_star, and negates
("flips") any arm whose mean would be negative.
"""

import json
from dataclasses import dataclass, field

import numpy as np

NORM_TOL = 1e-9
MEAN_TOL = 1e-12


@dataclass(frozen=True)
class ArmSet:
    """An ordered, finite collection of arm vectors in R^d, all with ||x||_2 <= 1."""

    vectors: np.ndarray  # shape (n_arms, d)

    def __post_init__(self):
        vecs = np.asarray(self.vectors, dtype=np.float64)
        if vecs.ndim != 2 or vecs.shape[0] == 0:
            raise ValueError(f"arm set must be a nonempty (n, d) array, got shape {vecs.shape}")
        norms = np.linalg.norm(vecs, axis=1)
        if np.any(norms > 1.0 + NORM_TOL):
            raise ValueError(f"arm norms must be <= 1, max is {norms.max():.12g}")
        object.__setattr__(self, "vectors", vecs)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def n_arms(self) -> int:
        return self.vectors.shape[0]

    def __len__(self) -> int:
        return self.n_arms


@dataclass(frozen=True)
class BanditInstance:
    """A simulated environment: arms, hidden parameter, and noise scale.

    ``means`` caches the expected reward of every arm (tiny negative float
    noise, above -1e-12, is clamped to zero) and ``mu_star``/``best_index``
    cache the optimum.
    """

    arm_set: ArmSet
    theta_star: np.ndarray
    sigma: float
    means: np.ndarray = field(init=False)
    mu_star: float = field(init=False)
    best_index: int = field(init=False)

    def __post_init__(self):
        theta = np.asarray(self.theta_star, dtype=np.float64)
        if theta.shape != (self.arm_set.dim,):
            raise ValueError(
                f"theta_star has shape {theta.shape}, expected ({self.arm_set.dim},)"
            )
        if np.linalg.norm(theta) > 1.0 + NORM_TOL:
            raise ValueError("theta_star must have norm <= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        means = self.arm_set.vectors @ theta
        if np.any(means < -MEAN_TOL):
            raise ValueError(
                f"every arm must have nonnegative expected reward, min is {means.min():.6g}"
            )
        means = np.where(means < 0.0, 0.0, means)
        best = int(np.argmax(means))  # lowest index on ties
        object.__setattr__(self, "theta_star", theta)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "mu_star", float(means[best]))
        object.__setattr__(self, "best_index", best)

    @property
    def dim(self) -> int:
        return self.arm_set.dim

    @property
    def n_arms(self) -> int:
        return self.arm_set.n_arms

    def to_json(self) -> str:
        """Serialize to the experiment-bundle document {d, arms, theta_star, sigma}."""
        doc = {
            "d": self.dim,
            "arms": self.arm_set.vectors.tolist(),
            "theta_star": self.theta_star.tolist(),
            "sigma": self.sigma,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BanditInstance":
        doc = json.loads(text)
        arms = np.asarray(doc["arms"], dtype=np.float64)
        if arms.ndim != 2 or arms.shape[1] != int(doc["d"]):
            raise ValueError("instance document: arms shape does not match d")
        return cls(
            arm_set=ArmSet(arms),
            theta_star=np.asarray(doc["theta_star"], dtype=np.float64),
            sigma=float(doc["sigma"]),
        )


def make_synthetic_instance(
    d: int, n_arms: int, sparsity: int, seed: int, sigma: float = 0.5
) -> BanditInstance:
    """Synthetic environment: sphere arms, sparse unit theta_star, flipped signs.

    Arms are standard normal draws normalized to the unit sphere.  theta_star
    has exactly ``sparsity`` nonzero coordinates (support chosen at random)
    and unit norm.  Any arm with a negative mean is negated, which preserves
    its norm and makes the mean nonnegative.  Deterministic in ``seed``;
    ``sigma`` only sets the noise scale and does not touch the stream.
    """
    if not (1 <= d <= 64):
        raise ValueError(f"d must be in [1, 64], got {d}")
    if n_arms < d:
        raise ValueError(f"n_arms must be >= d, got {n_arms} < {d}")
    if not (1 <= sparsity <= d):
        raise ValueError(f"sparsity must be in [1, d], got {sparsity}")
    rng = np.random.default_rng(seed)
    arms = rng.standard_normal((n_arms, d))
    arms /= np.linalg.norm(arms, axis=1, keepdims=True)
    theta = np.zeros(d)
    support = rng.choice(d, size=sparsity, replace=False)
    vals = rng.standard_normal(sparsity)
    while np.linalg.norm(vals) == 0.0:  # essentially impossible, but keep the contract total
        vals = rng.standard_normal(sparsity)
    theta[support] = vals
    theta /= np.linalg.norm(theta)
    flip = arms @ theta < 0.0
    arms[flip] = -arms[flip]
    return BanditInstance(arm_set=ArmSet(arms), theta_star=theta, sigma=sigma)


def sample_reward(inst: BanditInstance, arm_idx: int, rng: np.random.Generator) -> float:
    """Observed reward of one pull: <x, theta_star> + N(0, sigma^2) from ``rng``."""
    if not (0 <= arm_idx < inst.n_arms):
        raise IndexError(f"arm index {arm_idx} out of range [0, {inst.n_arms})")
    return float(inst.means[arm_idx] + inst.sigma * rng.standard_normal())


def best_arm(inst: BanditInstance) -> tuple[int, float]:
    """Index (lowest on ties) and mean of the best arm."""
    return inst.best_index, inst.mu_star
