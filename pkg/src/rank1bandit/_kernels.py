"""Compiled inner loops for the baselines.

Each ``*_run`` function advances a policy state in place for
``noise.shape[0]`` steps, drawing rewards from pre-drawn environment noise,
and writes the chosen flat arm indices (``i * L + j``) to ``arms_out``.
The per-step helpers are shared with the Python ``choose``/``observe``
methods of the LinUCB and GLM-UCB classes.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

# Rebuild the UCB1 index cache once sqrt(2 ln t) has moved this far.
_UCB1_REFRESH = 1e-4
_FP_MARGIN = 1e-12


@njit(cache=True, nogil=True)
def reward_at(kind, i, j, z, means, u, v, sigma):
    if kind == 0:
        return 1.0 if z[0] < means[i, j] else 0.0
    if kind == 1:
        return (u[i] + sigma * z[0]) * (v[j] + sigma * z[1])
    return means[i, j]


@njit(cache=True, nogil=True)
def _ucb1_leaf(sums, counts, k, s2):
    return sums[k] / counts[k] + math.sqrt(s2 / counts[k])


@njit(cache=True, nogil=True)
def ucb1_run(sums, counts, total, noise, kind, means, u, v, sigma, arms_out):
    """UCB1 with an exact pruned argmax.

    Indices are cached at a reference time ``s2_ref = 2 ln t_ref`` in a max
    segment tree. For ``t >= t_ref`` every true index lies within
    ``sqrt(s2) - sqrt(s2_ref)`` above its cached value, so only arms whose
    cached value is that close to the maximum need an exact evaluation.
    The result equals a full scan with lowest-index tie-breaking.
    """
    A = sums.size
    L = means.shape[1]
    P = 1
    while P < A:
        P *= 2
    tree = np.full(2 * P, -np.inf)
    stack = np.empty(2 * 64, dtype=np.int64)
    s2_ref = 0.0
    stale = True
    for t in range(noise.shape[0]):
        if total < A:
            a = total
        else:
            s2 = 2.0 * math.log(total)
            if stale or math.sqrt(s2) - math.sqrt(s2_ref) > _UCB1_REFRESH:
                s2_ref = s2
                for k in range(A):
                    tree[P + k] = _ucb1_leaf(sums, counts, k, s2_ref)
                for node in range(P - 1, 0, -1):
                    tree[node] = max(tree[2 * node], tree[2 * node + 1])
                stale = False
            thresh = tree[1] - (math.sqrt(s2) - math.sqrt(s2_ref)) - _FP_MARGIN
            best = -np.inf
            a = -1
            top = 0
            stack[0] = 1
            top = 1
            while top > 0:
                top -= 1
                node = stack[top]
                if tree[node] < thresh:
                    continue
                if node >= P:
                    k = node - P
                    val = _ucb1_leaf(sums, counts, k, s2)
                    if val > best:
                        best = val
                        a = k
                else:
                    stack[top] = 2 * node + 1
                    stack[top + 1] = 2 * node
                    top += 2
        i = a // L
        j = a - i * L
        r = reward_at(kind, i, j, noise[t], means, u, v, sigma)
        sums[a] += r
        counts[a] += 1.0
        total += 1
        arms_out[t] = a
        if not stale and total > A:
            node = P + a
            tree[node] = _ucb1_leaf(sums, counts, a, s2_ref)
            node //= 2
            while node >= 1:
                tree[node] = max(tree[2 * node], tree[2 * node + 1])
                node //= 2
        else:
            stale = True
    return total


@njit(cache=True, nogil=True)
def pair_width(Vinv, i, k):
    """``sqrt(x^T Vinv x)`` for ``x = e_i + e_k``."""
    q = Vinv[i, i] + Vinv[k, k] + 2.0 * Vinv[i, k]
    return math.sqrt(q) if q > 0.0 else 0.0


@njit(cache=True, nogil=True)
def design_update(V, Vinv, i, k, count, refresh_every):
    """Add ``x x^T`` (``x = e_i + e_k``) to ``V`` and update ``Vinv``.

    Sherman-Morrison, with an exact re-inversion every ``refresh_every``
    observations to stop round-off drift.
    """
    d = V.shape[0]
    V[i, i] += 1.0
    V[k, k] += 1.0
    V[i, k] += 1.0
    V[k, i] += 1.0
    if refresh_every > 0 and count % refresh_every == 0:
        Vinv[:, :] = np.linalg.inv(V)
        return
    g = Vinv[:, i] + Vinv[:, k]
    denom = 1.0 + g[i] + g[k]
    for r in range(d):
        gr = g[r] / denom
        for c in range(d):
            Vinv[r, c] -= gr * g[c]


@njit(cache=True, nogil=True)
def linucb_beta(count, d, lam, delta, noise_scale, theta_bound, scale):
    return scale * (noise_scale * math.sqrt(d * math.log((1.0 + count * 2.0 / lam) / delta))
                    + math.sqrt(lam) * theta_bound)


@njit(cache=True, nogil=True)
def linucb_select(theta, Vinv, beta, K, L):
    best = -np.inf
    a = 0
    for i in range(K):
        for j in range(L):
            s = theta[i] + theta[K + j] + beta * pair_width(Vinv, i, K + j)
            if s > best:
                best = s
                a = i * L + j
    return a


@njit(cache=True, nogil=True)
def linucb_update(V, Vinv, b, theta, i, k, y, count, refresh_every):
    design_update(V, Vinv, i, k, count, refresh_every)
    b[i] += y
    b[k] += y
    d = b.size
    for r in range(d):
        acc = 0.0
        for c in range(d):
            acc += Vinv[r, c] * b[c]
        theta[r] = acc


@njit(cache=True, nogil=True)
def linucb_run(V, Vinv, b, theta, state, params, noise, kind, means, u, v, sigma, arms_out):
    """``state = [count]``; ``params = [lam, delta, noise_scale, theta_bound,
    scale, eps, refresh_every]``."""
    K = means.shape[0]
    L = means.shape[1]
    d = K + L
    lam, delta, noise_scale, theta_bound, scale, eps = (
        params[0], params[1], params[2], params[3], params[4], params[5])
    refresh_every = np.int64(params[6])
    count = np.int64(state[0])
    for t in range(noise.shape[0]):
        beta = linucb_beta(count, d, lam, delta, noise_scale, theta_bound, scale)
        a = linucb_select(theta, Vinv, beta, K, L)
        i = a // L
        j = a - i * L
        w = reward_at(kind, i, j, noise[t], means, u, v, sigma)
        count += 1
        linucb_update(V, Vinv, b, theta, i, K + j, math.log(max(w, eps)), count, refresh_every)
        arms_out[t] = a
    state[0] = count


@njit(cache=True, nogil=True)
def em_step(w, p, q):
    """Posterior means of the row and column factors given product ``w``.

    ``w`` in [0, 1] is treated as a mixture of the ``w = 1`` and ``w = 0``
    cases, which is exact for binary rewards.
    """
    den = 1.0 - p * q
    pu = p * (1.0 - q) / den
    pv = q * (1.0 - p) / den
    return w + (1.0 - w) * pu, w + (1.0 - w) * pv


@njit(cache=True, nogil=True)
def glmucb_rho(t, c_mu, d, n, delta, kappa, scale):
    lt = math.log(t) if t > 1 else 0.0
    return scale * 2.0 * kappa / c_mu * math.sqrt(2.0 * d * lt * math.log(2.0 * d * n / delta))


@njit(cache=True, nogil=True)
def glmucb_select(su, nu, sv, nv, Vinv, t, params):
    """``params = [eps, delta, n, kappa, scale, refresh_every]``."""
    K = su.size
    L = sv.size
    eps = params[0]
    log_eps = math.log(eps)
    mean_u = np.empty(K)
    mean_v = np.empty(L)
    for i in range(K):
        mean_u[i] = math.exp(min(max(math.log(su[i] / nu[i]), log_eps), 0.0))
    for j in range(L):
        mean_v[j] = math.exp(min(max(math.log(sv[j] / nv[j]), log_eps), 0.0))
    min_u = mean_u.min()
    min_v = mean_v.min()
    c_mu = max(min_u * min_v, eps * eps)
    rho = glmucb_rho(t, c_mu, K + L, params[2], params[1], params[3], params[4])
    best = -np.inf
    a = 0
    for i in range(K):
        for j in range(L):
            s = mean_u[i] * mean_v[j] + rho * pair_width(Vinv, i, K + j)
            if s > best:
                best = s
                a = i * L + j
    return a


@njit(cache=True, nogil=True)
def glmucb_update(su, nu, sv, nv, V, Vinv, i, j, w, count, params):
    eps = params[0]
    K = su.size
    w = min(max(w, 0.0), 1.0)
    p = min(max(su[i] / nu[i], eps), 1.0 - eps)
    q = min(max(sv[j] / nv[j], eps), 1.0 - eps)
    eu, ev = em_step(w, p, q)
    su[i] += eu
    nu[i] += 1.0
    sv[j] += ev
    nv[j] += 1.0
    design_update(V, Vinv, i, K + j, count, np.int64(params[5]))


@njit(cache=True, nogil=True)
def glmucb_run(su, nu, sv, nv, V, Vinv, state, params, noise, kind, means, u, v, sigma,
               arms_out):
    L = means.shape[1]
    count = np.int64(state[0])
    for t in range(noise.shape[0]):
        a = glmucb_select(su, nu, sv, nv, Vinv, count + 1, params)
        i = a // L
        j = a - i * L
        w = reward_at(kind, i, j, noise[t], means, u, v, sigma)
        count += 1
        glmucb_update(su, nu, sv, nv, V, Vinv, i, j, w, count, params)
        arms_out[t] = a
    state[0] = count
