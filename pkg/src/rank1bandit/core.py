"""Rank-1 problem instances, gap statistics and the policy protocol.

Arms are 0-based ``(row, col)`` pairs throughout the package. Ties in any
argmax are broken toward the lowest index.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Protocol

import numpy as np

Arm = tuple[int, int]

NOISE_KINDS = ("bernoulli", "gaussian", "pointmass")


class DegenerateInstanceError(ValueError):
    """Raised when every row and column has the same mean."""


@dataclass(frozen=True)
class Noise:
    kind: str = "bernoulli"
    sigma: float | None = None

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "gaussian":
            if self.sigma is None or not self.sigma > 0:
                raise ValueError("gaussian noise needs sigma > 0")
        elif self.sigma is not None:
            raise ValueError(f"{self.kind} noise takes no sigma")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.sigma is not None:
            d["sigma"] = self.sigma
        return d


def _as_means(x, name: str) -> np.ndarray:
    arr = np.array(x, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all((arr >= 0.0) & (arr <= 1.0)):
        raise ValueError(f"entries of {name} must lie in [0, 1]")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Rank1Instance:
    """Row means ``u``, column means ``v`` and the reward noise model.

    The expected reward of arm ``(i, j)`` is ``u[i] * v[j]``.
    """

    u: np.ndarray
    v: np.ndarray
    noise: Noise = Noise()

    def __post_init__(self):
        object.__setattr__(self, "u", _as_means(self.u, "u"))
        object.__setattr__(self, "v", _as_means(self.v, "v"))
        if isinstance(self.noise, str):
            object.__setattr__(self, "noise", Noise(self.noise))

    @property
    def K(self) -> int:
        return self.u.size

    @property
    def L(self) -> int:
        return self.v.size

    @cached_property
    def means(self) -> np.ndarray:
        m = np.outer(self.u, self.v)
        m.flags.writeable = False
        return m

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "L": self.L,
            "u": self.u.tolist(),
            "v": self.v.tolist(),
            "noise": self.noise.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Rank1Instance":
        noise = d.get("noise", {"kind": "bernoulli"})
        inst = cls(d["u"], d["v"], Noise(noise["kind"], noise.get("sigma")))
        if "K" in d and d["K"] != inst.K:
            raise ValueError(f"K={d['K']} does not match len(u)={inst.K}")
        if "L" in d and d["L"] != inst.L:
            raise ValueError(f"L={d['L']} does not match len(v)={inst.L}")
        return inst

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "Rank1Instance":
        return cls.from_dict(json.loads(Path(path).read_text()))


class OptimalArm(NamedTuple):
    row: int
    col: int
    unique: bool

    @property
    def arm(self) -> Arm:
        return (self.row, self.col)


def optimal_arm(instance: Rank1Instance) -> OptimalArm:
    """Best row and column; ``unique`` is False if either argmax is tied."""
    i = int(np.argmax(instance.u))
    j = int(np.argmax(instance.v))
    unique = (np.count_nonzero(instance.u == instance.u[i]) == 1
              and np.count_nonzero(instance.v == instance.v[j]) == 1)
    return OptimalArm(i, j, unique)


@dataclass(frozen=True, eq=False)
class GapSummary:
    row_gaps: np.ndarray
    col_gaps: np.ndarray
    min_row_gap: float | None
    min_col_gap: float | None
    mu: float
    modified_row_gaps: np.ndarray
    modified_col_gaps: np.ndarray
    optimal_arm: Arm


def _min_positive(gaps: np.ndarray) -> float | None:
    pos = gaps[gaps > 0]
    return float(pos.min()) if pos.size else None


def compute_gaps(instance: Rank1Instance) -> GapSummary:
    """Row/column gaps, their positive minima, ``mu`` and the modified gaps.

    A zero gap on one side is replaced by the minimum positive gap of the
    other side. If the other side has no positive gap either the modified
    gap is infinite (exploring that row or column costs nothing).
    """
    opt = optimal_arm(instance)
    row_gaps = instance.u[opt.row] - instance.u
    col_gaps = instance.v[opt.col] - instance.v
    min_row, min_col = _min_positive(row_gaps), _min_positive(col_gaps)
    if min_row is None and min_col is None:
        raise DegenerateInstanceError("degenerate instance: all gaps are zero")
    mod_row = np.where(row_gaps > 0, row_gaps, math.inf if min_col is None else min_col)
    mod_col = np.where(col_gaps > 0, col_gaps, math.inf if min_row is None else min_row)
    mu = min(float(instance.u.mean()), float(instance.v.mean()))
    return GapSummary(row_gaps, col_gaps, min_row, min_col, mu, mod_row, mod_col, opt.arm)


def pseudo_regret(instance: Rank1Instance, arm: Arm) -> float:
    """Expected reward of the best arm minus that of ``arm``."""
    i, j = arm
    if not (0 <= i < instance.K and 0 <= j < instance.L):
        raise IndexError(f"arm {arm} outside {instance.K}x{instance.L}")
    opt = optimal_arm(instance)
    return float(instance.means[opt.row, opt.col] - instance.means[i, j])


class Policy(Protocol):
    """Interaction contract shared by Rank1Elim and the baselines.

    ``choose(t)`` is called with the 1-based step index and must be followed
    by exactly one ``observe`` call for the arm it returned.
    """

    def choose(self, t: int) -> Arm: ...

    def observe(self, arm: Arm, reward: float) -> None: ...
