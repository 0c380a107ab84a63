"""Asymptotic regret lower bounds for rank-1 bandits.

The Bernoulli bound charges every suboptimal row for being learned while
the best column is played, and every suboptimal column while the best row
is played. Each is weighted by the inverse KL divergence to the optimal
mean. The matching allocation ``c*`` explores only the optimal row and the
optimal column. Its optimality for the relaxed linear program is checked
numerically by :func:`verify_cstar_optimality`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.special import xlogy

from .core import Rank1Instance, optimal_arm


class NonIdentifiableError(ValueError):
    """The instance violates the identifiability assumption (0 < d < inf)."""


def kl_bernoulli(p, q):
    """KL divergence ``d(p, q)`` between Bernoulli(p) and Bernoulli(q).

    Uses ``0 log 0 = 0``. ``q`` must lie strictly inside (0, 1). Works
    elementwise on arrays.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if np.any((q <= 0.0) | (q >= 1.0)):
        raise NonIdentifiableError("q must lie in the open interval (0, 1)")
    if np.any((p < 0.0) | (p > 1.0)):
        raise ValueError("p must lie in [0, 1]")
    d = xlogy(p, p / q) + xlogy(1.0 - p, (1.0 - p) / (1.0 - q))
    return float(d) if d.ndim == 0 else d


@dataclass(frozen=True, eq=False)
class LowerBoundReport:
    rows: np.ndarray
    row_terms: np.ndarray
    cols: np.ndarray
    col_terms: np.ndarray
    total: float
    allocation: np.ndarray

    def to_dict(self) -> dict:
        return {
            "rows": self.rows.tolist(),
            "row_terms": self.row_terms.tolist(),
            "cols": self.cols.tolist(),
            "col_terms": self.col_terms.tolist(),
            "total": self.total,
            "allocation": self.allocation.tolist(),
        }


def _unique_optimum(instance: Rank1Instance):
    opt = optimal_arm(instance)
    if not opt.unique:
        raise ValueError("lower bound needs a unique optimal arm")
    return opt.row, opt.col


def _report(instance, i_star, j_star, row_alloc, col_alloc) -> LowerBoundReport:
    u, v = instance.u, instance.v
    w_star = u[i_star] * v[j_star]
    rows = np.delete(np.arange(instance.K), i_star)
    cols = np.delete(np.arange(instance.L), j_star)
    c = np.zeros((instance.K, instance.L))
    c[rows, j_star] = row_alloc
    c[i_star, cols] = col_alloc
    row_terms = (w_star - u[rows] * v[j_star]) * row_alloc
    col_terms = (w_star - u[i_star] * v[cols]) * col_alloc
    total = float(row_terms.sum() + col_terms.sum())
    return LowerBoundReport(rows, row_terms, cols, col_terms, total, c)


def regret_lower_bound(instance: Rank1Instance) -> LowerBoundReport:
    """Coefficient of ``log n`` in the Bernoulli lower bound, with ``c*``."""
    if instance.noise.kind != "bernoulli":
        raise ValueError("the KL lower bound is for Bernoulli rewards")
    i_star, j_star = _unique_optimum(instance)
    u, v = instance.u, instance.v
    w_star = u[i_star] * v[j_star]
    rows = np.delete(np.arange(instance.K), i_star)
    cols = np.delete(np.arange(instance.L), j_star)
    d_rows = np.atleast_1d(kl_bernoulli(u[rows] * v[j_star], w_star))
    d_cols = np.atleast_1d(kl_bernoulli(u[i_star] * v[cols], w_star))
    if np.any(d_rows <= 0) or np.any(d_cols <= 0):
        raise NonIdentifiableError("a suboptimal arm has the optimal mean")
    return _report(instance, i_star, j_star, 1.0 / d_rows, 1.0 / d_cols)


def gaussian_lower_bound(instance: Rank1Instance, sigma: float) -> LowerBoundReport:
    """Lower bound when row and column rewards are Gaussian with variance
    ``sigma**2``; uses ``d(p, q) = (p - q)**2 / (2 sigma**2)``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    i_star, j_star = _unique_optimum(instance)
    u, v = instance.u, instance.v
    if u[i_star] <= 0 or v[j_star] <= 0:
        raise NonIdentifiableError("optimal mean is zero")
    rows = np.delete(np.arange(instance.K), i_star)
    cols = np.delete(np.arange(instance.L), j_star)
    gap_u = u[i_star] - u[rows]
    gap_v = v[j_star] - v[cols]
    if np.any(gap_u <= 0) or np.any(gap_v <= 0):
        raise ValueError("all off-optimum gaps must be positive")
    s2 = 2.0 * sigma ** 2
    return _report(instance, i_star, j_star,
                   s2 / (v[j_star] * gap_u) ** 2, s2 / (u[i_star] * gap_v) ** 2)


def _kl_or_zero(p, q):
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    out = np.zeros(np.broadcast(p, q).shape)
    diff = p != q
    if np.any(diff):
        out[diff] = kl_bernoulli(np.broadcast_to(p, out.shape)[diff],
                                 np.broadcast_to(q, out.shape)[diff])
    return out


def relaxed_constraints(instance: Rank1Instance):
    """Objective and constraint matrices of the relaxed allocation problem.

    Returns ``(cost, A, i_star, j_star)`` where ``cost`` is ``K x L`` and each
    row of ``A`` (flattened over cells) must satisfy ``A @ c >= 1``.
    """
    i_star, j_star = _unique_optimum(instance)
    u, v = instance.u, instance.v
    means = instance.means
    cost = means[i_star, j_star] - means
    A = []
    for i in range(instance.K):
        if i == i_star:
            continue
        row = np.zeros((instance.K, instance.L))
        row[i] = _kl_or_zero(u[i] * v, u[i_star] * v)
        A.append(row.ravel())
    for j in range(instance.L):
        if j == j_star:
            continue
        col = np.zeros((instance.K, instance.L))
        col[:, j] = _kl_or_zero(u * v[j], u * v[j_star])
        A.append(col.ravel())
    return cost, np.array(A).reshape(-1, instance.K * instance.L), i_star, j_star


def solve_relaxed_lp(instance: Rank1Instance) -> tuple[float, np.ndarray]:
    """Solve the relaxed problem with a general LP solver (HiGHS)."""
    cost, A, _, _ = relaxed_constraints(instance)
    if A.shape[0] == 0:
        return 0.0, np.zeros_like(cost)
    res = linprog(cost.ravel(), A_ub=-A, b_ub=-np.ones(A.shape[0]),
                  bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP oracle failed: {res.message}")
    return float(res.fun), res.x.reshape(cost.shape)


def allocation_objective(instance: Rank1Instance, c: np.ndarray) -> float:
    cost, _, _, _ = relaxed_constraints(instance)
    return float((cost * c).sum())


def is_feasible(instance: Rank1Instance, c: np.ndarray, tol: float = 1e-9) -> bool:
    _, A, _, _ = relaxed_constraints(instance)
    return bool(np.all(c >= -tol) and np.all(A @ c.ravel() >= 1.0 - tol))


def redistribute(instance: Rank1Instance, c: np.ndarray, i0: int, j0: int) -> np.ndarray:
    """Move the mass of an interior cell ``(i0, j0)`` onto the optimal row
    and column while keeping every constraint value unchanged."""
    i_star, j_star = _unique_optimum(instance)
    if i0 == i_star or j0 == j_star:
        raise ValueError("(i0, j0) must be off the optimal row and column")
    u, v = instance.u, instance.v
    m = c[i0, j0]
    out = c.copy()
    out[i0, j0] = 0.0
    out[i0, j_star] += m * (kl_bernoulli(u[i0] * v[j0], u[i_star] * v[j0])
                            / kl_bernoulli(u[i0] * v[j_star], u[i_star] * v[j_star]))
    out[i_star, j0] += m * (kl_bernoulli(u[i0] * v[j0], u[i0] * v[j_star])
                            / kl_bernoulli(u[i_star] * v[j0], u[i_star] * v[j_star]))
    return out


def verify_cstar_optimality(instance: Rank1Instance, rtol: float = 1e-6) -> bool:
    """True if the LP optimum matches the closed-form bound within ``rtol``
    and the closed-form allocation is feasible."""
    report = regret_lower_bound(instance)
    value, _ = solve_relaxed_lp(instance)
    if not is_feasible(instance, report.allocation):
        return False
    return abs(value - report.total) <= rtol * max(abs(report.total), 1e-300)
