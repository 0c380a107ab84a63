"""Rank1Elim: staged row/column elimination for stochastic rank-1 bandits.

Stage ``l`` targets precision ``2**-l`` and ends once every remaining row
has been explored ``n_l = ceil(4 * 4**l * log n)`` times in total. One
exploration round pulls every remaining row against a single random column
(mapped through the column substitution table ``hv``), then every remaining
column against a single random row (mapped through ``hu``). Row estimates
come only from the row-exploration accumulator ``Cu`` and column estimates
only from ``Cv``. At the end of the stage each row whose upper bound is at
most the leading row's lower bound is remapped to the leader, and likewise
for columns.

The policy can be driven one pull at a time (``choose``/``observe``) or one
block at a time (``plan_block``/``observe_block``); both use the same
schedule and random draws.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import Arm

_INT_LIMIT = 2 ** 62


def stage_length(stage: int, n: int) -> int:
    """Cumulative per-row exploration count ``ceil(4 * 4**stage * ln n)``."""
    if stage < 0:
        raise ValueError("stage must be non-negative")
    if n < 2:
        raise ValueError("horizon must be at least 2")
    value = 4.0 * 4.0 ** stage * math.log(n)
    if not value < _INT_LIMIT:
        raise OverflowError(f"stage length overflows at stage {stage}")
    return math.ceil(value)


@dataclass(frozen=True, eq=False)
class ConfidenceBounds:
    rows: np.ndarray
    row_lower: np.ndarray
    row_upper: np.ndarray
    cols: np.ndarray
    col_lower: np.ndarray
    col_upper: np.ndarray
    radius: float
    row_leader: int
    col_leader: int


@dataclass
class StageRecord:
    stage: int
    n_stage: int
    rows_remaining: int
    cols_remaining: int
    row_leader: int
    col_leader: int
    rows_eliminated: list[int]
    cols_eliminated: list[int]


def eliminate(h: np.ndarray, active: np.ndarray, lower: np.ndarray,
              upper: np.ndarray) -> tuple[np.ndarray, int]:
    """Remap every entry of ``h`` whose representative is dominated.

    ``lower``/``upper`` are indexed like ``active``. Returns the new map and
    the leader (largest lower bound, lowest index on ties).
    """
    leader_pos = int(np.argmax(lower))
    leader = int(active[leader_pos])
    upper_full = np.full(h.size, np.inf)
    upper_full[active] = upper
    new_h = h.copy()
    new_h[upper_full[h] <= lower[leader_pos]] = leader
    return new_h, leader


class Rank1Elim:
    """Rank1Elim as a policy over a ``K x L`` grid with horizon ``n``.

    ``log`` is an optional callable receiving one dict per finished stage.
    """

    def __init__(self, K: int, L: int, n: int, rng=None, log=None):
        if K < 1 or L < 1:
            raise ValueError("K and L must be positive")
        if n < 3:
            raise ValueError("horizon n must be at least 3")
        self.K, self.L, self.n = K, L, n
        self.rng = np.random.default_rng(rng)
        self.log = log
        self.log_n = math.log(n)
        self.stage = 0
        self.n_prev = 0
        self.n_stage = stage_length(0, n)
        self.hu = np.arange(K)
        self.hv = np.arange(L)
        self.Cu = np.zeros((K, L))
        self.Cv = np.zeros((K, L))
        self.t = 0
        self.bounds: ConfidenceBounds | None = None
        self.history: list[StageRecord] = []
        self.stage_pulls: list[int] = []
        self._pulls_this_stage = 0
        self._plan = None
        self._cursor = 0
        self._new_stage()

    @property
    def tilde_gap(self) -> float:
        return 2.0 ** -self.stage

    @property
    def rows(self) -> np.ndarray:
        return np.unique(self.hu)

    @property
    def cols(self) -> np.ndarray:
        return np.unique(self.hv)

    @property
    def converged(self) -> bool:
        return self.rows.size == 1 and self.cols.size == 1

    def _new_stage(self):
        self._cursor = 0
        self._pulls_this_stage = 0
        if self.converged:
            self._plan = None
            return
        rows, cols = self.rows, self.cols
        nI, nJ = rows.size, cols.size
        rounds = self.n_stage - self.n_prev
        remaining = self.n - self.t
        rounds = min(rounds, -(-remaining // (nI + nJ)))
        self._full_stage = rounds == self.n_stage - self.n_prev
        jr = self.rng.integers(self.L, size=rounds)
        ir = self.rng.integers(self.K, size=rounds)
        R = np.empty((rounds, nI + nJ), dtype=np.int64)
        C = np.empty((rounds, nI + nJ), dtype=np.int64)
        R[:, :nI] = rows
        C[:, :nI] = self.hv[jr][:, None]
        R[:, nI:] = self.hu[ir][:, None]
        C[:, nI:] = cols
        row_block = np.zeros(nI + nJ, dtype=bool)
        row_block[:nI] = True
        self._plan = (R.ravel(), C.ravel(), np.tile(row_block, rounds))

    def plan_block(self, max_pulls: int) -> tuple[np.ndarray, np.ndarray]:
        """The next ``<= max_pulls`` pulls, up to the end of the current stage."""
        max_pulls = min(max_pulls, self.n - self.t)
        if self._plan is None:
            i, j = int(self.hu[0]), int(self.hv[0])
            return np.full(max_pulls, i), np.full(max_pulls, j)
        R, C, _ = self._plan
        stop = min(self._cursor + max_pulls, R.size)
        return R[self._cursor:stop], C[self._cursor:stop]

    def choose(self, t: int | None = None) -> Arm:
        if self.t >= self.n:
            raise RuntimeError("horizon exhausted")
        if self._plan is None:
            return int(self.hu[0]), int(self.hv[0])
        R, C, _ = self._plan
        return int(R[self._cursor]), int(C[self._cursor])

    def observe(self, arm: Arm, reward: float) -> None:
        self.observe_block(np.array([arm[0]]), np.array([arm[1]]), np.array([reward]))

    def observe_block(self, rows, cols, rewards) -> None:
        m = len(rows)
        self.t += m
        if self._plan is None:
            return
        R, C, row_block = self._plan
        stop = self._cursor + m
        if (stop > R.size or not np.array_equal(rows, R[self._cursor:stop])
                or not np.array_equal(cols, C[self._cursor:stop])):
            raise ValueError("observed arms differ from the scheduled pulls")
        rb = row_block[self._cursor:stop]
        rewards = np.asarray(rewards, dtype=np.float64)
        np.add.at(self.Cu, (rows[rb], cols[rb]), rewards[rb])
        np.add.at(self.Cv, (rows[~rb], cols[~rb]), rewards[~rb])
        self._cursor = stop
        self._pulls_this_stage += m
        if self._cursor == R.size and self._full_stage:
            self.end_of_stage()

    def end_of_stage(self) -> ConfidenceBounds:
        """Compute bounds, eliminate, and advance to the next stage."""
        rows, cols = self.rows, self.cols
        radius = math.sqrt(self.log_n / self.n_stage)
        row_est = self.Cu.sum(axis=1)[rows] / self.n_stage
        col_est = self.Cv.sum(axis=0)[cols] / self.n_stage
        row_lo, row_hi = row_est - radius, row_est + radius
        col_lo, col_hi = col_est - radius, col_est + radius
        new_hu, i_lead = eliminate(self.hu, rows, row_lo, row_hi)
        new_hv, j_lead = eliminate(self.hv, cols, col_lo, col_hi)
        bounds = ConfidenceBounds(rows, row_lo, row_hi, cols, col_lo, col_hi,
                                  radius, i_lead, j_lead)
        self.hu, self.hv = new_hu, new_hv
        record = StageRecord(
            self.stage, self.n_stage, int(rows.size), int(cols.size), i_lead, j_lead,
            sorted(set(rows.tolist()) - set(self.rows.tolist())),
            sorted(set(cols.tolist()) - set(self.cols.tolist())))
        self.history.append(record)
        self.stage_pulls.append(self._pulls_this_stage)
        if self.log is not None:
            self.log(asdict(record))
        self.bounds = bounds
        self.stage += 1
        self.n_prev = self.n_stage
        self.n_stage = stage_length(self.stage, self.n)
        self._new_stage()
        return bounds


def jsonl_logger(fh):
    """Stage logger writing one JSON object per line to ``fh``."""
    def write(record: dict):
        fh.write(json.dumps(record) + "\n")
    return write
