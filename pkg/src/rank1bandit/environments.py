"""Reward processes: Bernoulli, Gaussian and point-mass rank-1 models, the
spike instance family and a misspecified low-rank Bernoulli model.

Only the pulled coordinate pair is sampled on each step. Every environment
owns its random stream, and batched draws consume that stream in exactly the
same order as the equivalent sequence of single draws, so block-wise and
step-wise simulations see identical rewards.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Arm, Noise, Rank1Instance, optimal_arm

BERNOULLI, GAUSSIAN, POINTMASS = 0, 1, 2

_EMPTY = np.zeros(0)


class Environment:
    """Base class; subclasses set ``kind`` and ``noise_width``."""

    kind: int
    noise_width: int

    def __init__(self, means: np.ndarray, rng=None, best: Arm | None = None):
        self.means = np.asarray(means, dtype=np.float64)
        self.means.flags.writeable = False
        self.rng = np.random.default_rng(rng)
        if best is None:
            flat = int(np.argmax(self.means))
            best = divmod(flat, self.means.shape[1])
        self.optimal_arm: Arm = (int(best[0]), int(best[1]))
        self.best_mean = float(self.means[self.optimal_arm])
        self.gaps = self.best_mean - self.means
        self.gaps.flags.writeable = False

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @property
    def L(self) -> int:
        return self.means.shape[1]

    def draw_noise(self, m: int) -> np.ndarray:
        """Raw randomness for ``m`` consecutive pulls, shape ``(m, noise_width)``."""
        raise NotImplementedError

    def sample(self, arm: Arm) -> float:
        raise NotImplementedError

    def sample_batch(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def kernel_args(self):
        """``(kind, means, u, v, sigma)`` as consumed by the compiled loops."""
        return self.kind, self.means, _EMPTY, _EMPTY, 0.0


class BernoulliEnvironment(Environment):
    """Reward is 1 with probability ``means[i, j]``, else 0.

    For a rank-1 instance this is the product of independent row and column
    Bernoulli draws.
    """

    kind, noise_width = BERNOULLI, 1

    def draw_noise(self, m):
        return self.rng.random(m).reshape(m, 1)

    def sample(self, arm):
        i, j = arm
        return 1.0 if self.rng.random() < self.means[i, j] else 0.0

    def sample_batch(self, rows, cols):
        return (self.rng.random(len(rows)) < self.means[rows, cols]).astype(np.float64)


class GaussianEnvironment(Environment):
    """Reward ``x * y`` with ``x ~ N(u[i], sigma^2)``, ``y ~ N(v[j], sigma^2)``.

    Rewards are not clipped, so Rank1Elim's Hoeffding intervals are only
    heuristic here.
    """

    kind, noise_width = GAUSSIAN, 2

    def __init__(self, u, v, sigma: float, rng=None, best: Arm | None = None):
        self.u = np.asarray(u, dtype=np.float64)
        self.v = np.asarray(v, dtype=np.float64)
        self.sigma = float(sigma)
        super().__init__(np.outer(self.u, self.v), rng, best)

    def draw_noise(self, m):
        return self.rng.standard_normal((m, 2))

    def sample(self, arm):
        i, j = arm
        z = self.rng.standard_normal(2)
        return float((self.u[i] + self.sigma * z[0]) * (self.v[j] + self.sigma * z[1]))

    def sample_batch(self, rows, cols):
        z = self.rng.standard_normal((len(rows), 2))
        return (self.u[rows] + self.sigma * z[:, 0]) * (self.v[cols] + self.sigma * z[:, 1])

    def kernel_args(self):
        return self.kind, self.means, self.u, self.v, self.sigma


class PointMassEnvironment(Environment):
    """Deterministic reward equal to the mean; consumes no randomness."""

    kind, noise_width = POINTMASS, 0

    def draw_noise(self, m):
        return np.zeros((m, 0))

    def sample(self, arm):
        return float(self.means[arm])

    def sample_batch(self, rows, cols):
        return self.means[rows, cols].copy()


def make_environment(instance: Rank1Instance, rng=None) -> Environment:
    best = optimal_arm(instance).arm
    kind = instance.noise.kind
    if kind == "bernoulli":
        return BernoulliEnvironment(instance.means, rng, best)
    if kind == "gaussian":
        return GaussianEnvironment(instance.u, instance.v, instance.noise.sigma, rng, best)
    return PointMassEnvironment(instance.means, rng, best)


def sample_reward(env: Environment, arm: Arm) -> float:
    return env.sample(arm)


@dataclass(frozen=True)
class SpikeSpec:
    K: int
    L: int
    p_u: float
    p_v: float
    delta_u: float
    delta_v: float

    def __post_init__(self):
        if self.K < 1 or self.L < 1:
            raise ValueError("K and L must be positive")
        for p, d, side in ((self.p_u, self.delta_u, "u"), (self.p_v, self.delta_v, "v")):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"p_{side}={p} outside [0, 1]")
            if not d > 0:
                raise ValueError(f"delta_{side} must be positive")
            if p + d > 1.0 + 1e-12:
                raise ValueError(f"p_{side} + delta_{side} = {p + d} exceeds 1")


def make_spike(spec: SpikeSpec, noise: Noise | None = None) -> Rank1Instance:
    """One elevated row and column: ``u = p_u + delta_u * [i == 0]``."""
    u = np.full(spec.K, float(spec.p_u))
    v = np.full(spec.L, float(spec.p_v))
    u[0] = min(1.0, spec.p_u + spec.delta_u)
    v[0] = min(1.0, spec.p_v + spec.delta_v)
    return Rank1Instance(u, v, noise or Noise("bernoulli"))


def spike(K, L, p_u, p_v, delta_u, delta_v) -> Rank1Instance:
    return make_spike(SpikeSpec(K, L, p_u, p_v, delta_u, delta_v))


class InfeasibleSpectrumError(ValueError):
    """The requested low-rank shape cannot be realised with means in [0, 1]."""


@dataclass(frozen=True)
class LowRankSpec:
    K: int
    L: int
    rank: int
    leading_weight: float
    seed: int
    max_mean: float = 0.95

    def __post_init__(self):
        if self.K < 1 or self.L < 1:
            raise ValueError("K and L must be positive")
        if not 1 <= self.rank <= min(self.K, self.L):
            raise ValueError(f"rank must be in [1, min(K, L)], got {self.rank}")
        if self.rank > 1 and not self.leading_weight > 1:
            raise ValueError("leading_weight must exceed 1")
        if not 0 < self.max_mean <= 1:
            raise ValueError("max_mean must be in (0, 1]")


class LowRankEnvironment(BernoulliEnvironment):
    """Bernoulli rewards with a rank-r mean matrix (a misspecified model)."""

    def __init__(self, spec: LowRankSpec, means: np.ndarray, factors=None, rng=None):
        self.spec = spec
        self.factors = factors
        super().__init__(means, rng)
        self.singular_values = np.linalg.svd(self.means, compute_uv=False)

    def as_rank1(self) -> Rank1Instance:
        if self.factors is None:
            raise ValueError("only rank-1 environments reduce to a Rank1Instance")
        return Rank1Instance(*self.factors, Noise("bernoulli"))

    def to_csv(self, path) -> None:
        np.savetxt(Path(path), self.means, delimiter=",", fmt="%.17g")


_MAX_ATTEMPTS = 64


def _lowrank_attempt(spec: LowRankSpec, rng: np.random.Generator):
    if spec.rank == 1:
        a, b = rng.random(spec.K), rng.random(spec.L)
        root = math.sqrt(spec.max_mean)
        u, v = a / a.max() * root, b / b.max() * root
        return np.outer(u, v), (u, v)
    r = spec.rank
    A = rng.random((spec.K, r))
    B = rng.random((spec.L, r))
    P, s, Qt = np.linalg.svd(A @ B.T, full_matrices=False)
    P, s, Qt = P[:, :r], s[:r], Qt[:r]
    new_s = s.copy()
    new_s[1:] = s[0] / spec.leading_weight * (s[1:] / s[1])
    M = (P * new_s) @ Qt
    M *= spec.max_mean / M.max()
    if M.min() < 0:
        return None, None
    return np.clip(M, 0.0, 1.0), None


def make_lowrank(spec: LowRankSpec, rng=None) -> LowRankEnvironment:
    """Draw uniform factors, reshape the spectrum so that the first singular
    value is ``leading_weight`` times the second, and scale the largest mean
    to ``spec.max_mean``.

    Construction depends only on ``spec.seed``; ``rng`` drives the rewards.
    Draws that would need clipping are rejected and redrawn from the next
    child seed; :class:`InfeasibleSpectrumError` is raised if none succeed.
    """
    children = np.random.SeedSequence(spec.seed).spawn(_MAX_ATTEMPTS)
    for child in children:
        M, factors = _lowrank_attempt(spec, np.random.default_rng(child))
        if M is None:
            continue
        s = np.linalg.svd(M, compute_uv=False)
        if spec.rank > 1:
            ratio = s[0] / s[1]
            if not abs(ratio - spec.leading_weight) <= 0.1 * spec.leading_weight:
                continue
            if np.linalg.matrix_rank(M) != spec.rank:
                continue
        return LowRankEnvironment(spec, M, factors, rng)
    raise InfeasibleSpectrumError(
        f"no feasible rank-{spec.rank} matrix with weight {spec.leading_weight} "
        f"after {_MAX_ATTEMPTS} draws")
