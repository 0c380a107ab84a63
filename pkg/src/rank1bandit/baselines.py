"""Comparison policies that ignore or only loosely exploit the rank-1
structure: UCB1 over all ``K * L`` arms, LinUCB on log rewards, and GLM-UCB
with an exponential link fitted by online EM.

Each policy supports step-wise ``choose``/``observe`` and a compiled
``run_chunk`` that plays many steps against an environment's pre-drawn
noise. Both paths share state and give identical arm sequences.
"""
from __future__ import annotations

import math

import numpy as np

from . import _kernels as kern
from .core import Arm

DEFAULT_EPS = 1e-2
# Exact re-inversion period for the design matrix inverse.
REFRESH_EVERY = 4096


def feature_vector(i: int, j: int, K: int, L: int) -> np.ndarray:
    """Indicator features of arm ``(i, j)``: ones at ``i`` and ``K + j``."""
    if not (0 <= i < K and 0 <= j < L):
        raise IndexError(f"arm {(i, j)} outside {K}x{L}")
    x = np.zeros(K + L)
    x[i] = 1.0
    x[K + j] = 1.0
    return x


def em_posterior(w: float, p: float, q: float) -> tuple[float, float]:
    """E[u | w] and E[v | w] for ``w = u * v`` with independent Bernoulli
    ``u ~ B(p)``, ``v ~ B(q)``."""
    if w not in (0, 1):
        raise ValueError("w must be 0 or 1")
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise ValueError("p and q must be probabilities")
    if w == 1:
        return 1.0, 1.0
    if p * q >= 1.0:
        raise ValueError("w = 0 is impossible when p * q = 1")
    eu, ev = kern.em_step(0.0, p, q)
    return float(eu), float(ev)


class _ChunkedPolicy:
    K: int
    L: int

    def _split(self, a: int) -> Arm:
        return divmod(int(a), self.L)

    def _check(self, arm: Arm):
        i, j = arm
        if not (0 <= i < self.K and 0 <= j < self.L):
            raise IndexError(f"arm {arm} outside {self.K}x{self.L}")


class UCB1(_ChunkedPolicy):
    """UCB1 with index ``mean + sqrt(2 ln N / T)``, ``N`` the total number of
    pulls so far. Every arm is pulled once first, in row-major order."""

    def __init__(self, K: int, L: int):
        self.K, self.L = K, L
        self.sums = np.zeros(K * L)
        self.counts = np.zeros(K * L)
        self.total = 0

    def index(self) -> np.ndarray:
        s2 = 2.0 * math.log(self.total)
        return self.sums / self.counts + np.sqrt(s2 / self.counts)

    def choose(self, t: int | None = None) -> Arm:
        if self.total < self.counts.size:
            return self._split(np.flatnonzero(self.counts == 0)[0])
        return self._split(np.argmax(self.index()))

    def observe(self, arm: Arm, reward: float) -> None:
        self._check(arm)
        a = arm[0] * self.L + arm[1]
        self.sums[a] += reward
        self.counts[a] += 1
        self.total += 1

    def run_chunk(self, env, noise: np.ndarray) -> np.ndarray:
        if self.total < self.counts.size and np.any(self.counts[self.total:]):
            raise RuntimeError("compiled UCB1 needs the row-major initial sweep")
        arms = np.empty(noise.shape[0], dtype=np.int64)
        self.total = kern.ucb1_run(self.sums, self.counts, self.total, noise,
                                   *env.kernel_args(), arms)
        return arms


class LinUCB(_ChunkedPolicy):
    """Optimistic ridge regression on ``log(max(w, eps))`` with indicator
    features.

    The radius follows the self-normalised bound
    ``R sqrt(d ln((1 + t * 2 / lam) / delta)) + sqrt(lam) * S`` where the
    transformed reward lies in ``[ln eps, 0]`` (so ``R = ln(1/eps) / 2``)
    and ``S = sqrt(d) ln(1/eps)`` bounds the true parameter norm. ``scale``
    multiplies the whole radius.
    """

    def __init__(self, K: int, L: int, n: int, lam: float = 1.0, delta: float | None = None,
                 eps: float = DEFAULT_EPS, scale: float = 1.0):
        if not 0 < eps < 1:
            raise ValueError("eps must be in (0, 1)")
        if lam <= 0:
            raise ValueError("lambda must be positive")
        self.K, self.L, self.n = K, L, n
        d = K + L
        self.lam, self.eps, self.scale = lam, eps, scale
        self.delta = 1.0 / n if delta is None else delta
        self.V = lam * np.eye(d)
        self.Vinv = np.eye(d) / lam
        self.b = np.zeros(d)
        self.theta = np.zeros(d)
        self.state = np.zeros(1, dtype=np.int64)
        log_eps = math.log(1.0 / eps)
        self.params = np.array([lam, self.delta, 0.5 * log_eps, math.sqrt(d) * log_eps,
                                scale, eps, REFRESH_EVERY])

    @property
    def count(self) -> int:
        return int(self.state[0])

    def transform(self, w: float) -> float:
        return math.log(max(w, self.eps))

    def beta(self) -> float:
        p = self.params
        return kern.linucb_beta(self.count, self.K + self.L, p[0], p[1], p[2], p[3], p[4])

    def choose(self, t: int | None = None) -> Arm:
        return self._split(kern.linucb_select(self.theta, self.Vinv, self.beta(), self.K, self.L))

    def observe(self, arm: Arm, reward: float) -> None:
        self._check(arm)
        self.state[0] += 1
        kern.linucb_update(self.V, self.Vinv, self.b, self.theta, arm[0], self.K + arm[1],
                           self.transform(reward), self.count, REFRESH_EVERY)

    def run_chunk(self, env, noise):
        arms = np.empty(noise.shape[0], dtype=np.int64)
        kern.linucb_run(self.V, self.Vinv, self.b, self.theta, self.state, self.params,
                        noise, *env.kernel_args(), arms)
        return arms


class GLMUCB(_ChunkedPolicy):
    """GLM-UCB with mean ``exp(theta_i + theta_{K+j})``.

    Row and column means are estimated by online EM: each reward updates the
    pulled row and column with their posterior factor means under the
    current estimates, and the estimate is the running average of those
    responsibilities (one pseudo-observation at 0.5 to start). The radius is
    ``(2 kappa / c_mu) sqrt(2 d ln t ln(2 d n / delta))`` times ``scale``,
    with ``kappa = sqrt(3 + 2 ln(1 + 2 * 2 / lam))`` and ``c_mu`` the
    smallest estimated mean (floored at ``eps**2``).
    """

    def __init__(self, K: int, L: int, n: int, eps: float = DEFAULT_EPS,
                 delta: float | None = None, scale: float = 1.0, lam: float = 1.0,
                 prior: float = 0.5):
        if not 0 < eps < 1:
            raise ValueError("eps must be in (0, 1)")
        self.K, self.L, self.n = K, L, n
        self.eps, self.scale, self.lam = eps, scale, lam
        self.delta = 1.0 / n if delta is None else delta
        self.su = np.full(K, prior)
        self.nu = np.ones(K)
        self.sv = np.full(L, prior)
        self.nv = np.ones(L)
        d = K + L
        self.V = lam * np.eye(d)
        self.Vinv = np.eye(d) / lam
        self.state = np.zeros(1, dtype=np.int64)
        kappa = math.sqrt(3.0 + 2.0 * math.log(1.0 + 2.0 * 2.0 / lam))
        self.params = np.array([eps, self.delta, float(n), kappa, scale, REFRESH_EVERY])

    @property
    def count(self) -> int:
        return int(self.state[0])

    @property
    def u_hat(self) -> np.ndarray:
        return np.clip(self.su / self.nu, self.eps, 1.0)

    @property
    def v_hat(self) -> np.ndarray:
        return np.clip(self.sv / self.nv, self.eps, 1.0)

    @property
    def c_mu(self) -> float:
        return max(float(self.u_hat.min() * self.v_hat.min()), self.eps ** 2)

    def choose(self, t: int | None = None) -> Arm:
        a = kern.glmucb_select(self.su, self.nu, self.sv, self.nv, self.Vinv,
                               self.count + 1, self.params)
        return self._split(a)

    def observe(self, arm: Arm, reward: float) -> None:
        self._check(arm)
        self.state[0] += 1
        kern.glmucb_update(self.su, self.nu, self.sv, self.nv, self.V, self.Vinv,
                           arm[0], arm[1], float(reward), self.count, self.params)

    def run_chunk(self, env, noise):
        arms = np.empty(noise.shape[0], dtype=np.int64)
        kern.glmucb_run(self.su, self.nu, self.sv, self.nv, self.V, self.Vinv, self.state,
                        self.params, noise, *env.kernel_args(), arms)
        return arms
