import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rank1bandit.core import Noise, Rank1Instance
from rank1bandit.environments import make_environment, spike
from rank1bandit.harness import simulate
from rank1bandit.rank1elim import Rank1Elim, eliminate, jsonl_logger, stage_length


class ScriptedRng:
    """Stands in for a Generator: successive ``integers`` calls return the
    queued column draws, then the queued row draws."""

    def __init__(self, cols, rows):
        self.calls = [cols, rows]

    def integers(self, high, size):
        vals = self.calls.pop(0)
        return np.resize(np.array(vals, dtype=np.int64), size)


def run_stepwise(elim, env, steps):
    for _ in range(steps):
        arm = elim.choose()
        elim.observe(arm, env.sample(arm))


def test_init():
    e = Rank1Elim(2, 3, 2 * 10 ** 6)
    np.testing.assert_array_equal(e.hu, [0, 1])
    np.testing.assert_array_equal(e.hv, [0, 1, 2])
    assert e.tilde_gap == 1.0
    assert e.n_prev == 0
    assert e.n_stage == 59
    e = Rank1Elim(1, 1, 100)
    assert e.rows.tolist() == [0] and e.cols.tolist() == [0]
    with pytest.raises(ValueError):
        Rank1Elim(2, 2, 2)


def test_stage_length_values():
    assert stage_length(0, 2 * 10 ** 6) == 59
    assert stage_length(1, 2 * 10 ** 6) == 233
    assert stage_length(0, 3) == 5
    with pytest.raises(ValueError):
        stage_length(-1, 100)
    with pytest.raises(OverflowError):
        stage_length(40, 2 * 10 ** 6)


def test_stage_length_monotone_ratio():
    n = 10 ** 6
    lens = [stage_length(s, n) for s in range(20)]
    assert all(b > a for a, b in zip(lens, lens[1:]))
    assert lens[-1] / lens[-2] == pytest.approx(4, rel=1e-6)


def test_round_order_with_scripted_draws():
    e = Rank1Elim(2, 2, 10 ** 4)
    e.rng = ScriptedRng(cols=[1], rows=[0])
    e._new_stage()
    # column draw 1, row draw 0: rows against column 1, then columns against row 0
    assert [e.choose() for _ in range(1)] == [(0, 1)]
    R, C = e.plan_block(4)
    assert list(zip(R.tolist(), C.tolist())) == [(0, 1), (1, 1), (0, 0), (0, 1)]


def test_singleton_pulls_only_survivor():
    env = make_environment(Rank1Instance([1.0, 0.0], [1.0, 0.0], Noise("pointmass")))
    e = Rank1Elim(2, 2, 10 ** 4, rng=0)
    run_stepwise(e, env, 5000)
    assert e.converged
    assert all(e.choose() == (0, 0) for _ in range(3))
    rows, cols = e.plan_block(50)
    assert set(rows.tolist()) == {0} and set(cols.tolist()) == {0}


def test_accumulators_split_by_block():
    env = make_environment(Rank1Instance([1.0, 0.5], [1.0, 0.5], Noise("pointmass")))
    e = Rank1Elim(2, 2, 10 ** 4, rng=1)
    arm = e.choose()
    e.observe(arm, 1.0)
    assert e.Cu[arm] == 1.0 and e.Cv.sum() == 0
    # finish the row block of the first round; next pull is column exploration
    e.observe(e.choose(), 1.0)
    arm = e.choose()
    cu = e.Cu.copy()
    e.observe(arm, 1.0)
    assert e.Cv[arm] == 1.0
    np.testing.assert_array_equal(e.Cu, cu)
    with pytest.raises(ValueError):
        e.observe((1, 1) if e.choose() != (1, 1) else (0, 0), 1.0)


def test_accumulators_carry_over():
    inst = spike(3, 3, 0.5, 0.5, 0.1, 0.1)
    env = make_environment(inst, rng=2)
    e = Rank1Elim(3, 3, 10 ** 5, rng=3)
    while e.stage == 0:
        arm = e.choose()
        e.observe(arm, env.sample(arm))
    after0 = e.Cu.copy()
    while e.stage == 1:
        arm = e.choose()
        e.observe(arm, env.sample(arm))
    assert np.all(e.Cu >= after0)
    assert e.Cu.sum() >= after0.sum()


def test_pointmass_row_sum_after_stage0():
    # a 1x1 grid is a singleton from the start, so use a flat 2x2 grid
    env = make_environment(Rank1Instance([1.0, 1.0], [1.0, 1.0], Noise("pointmass")))
    e = Rank1Elim(2, 2, 1000, rng=0)
    n0 = stage_length(0, 1000)
    run_stepwise(e, env, 4 * n0)
    assert e.stage == 1
    np.testing.assert_allclose(e.Cu.sum(axis=1), [n0, n0])


def test_overlapping_bounds_keep_maps():
    h = np.arange(4)
    new, leader = eliminate(h, np.arange(4), np.array([0.1, 0.2, 0.15, 0.0]),
                            np.array([0.9, 1.0, 0.95, 0.8]))
    np.testing.assert_array_equal(new, h)
    assert leader == 1


def test_dominated_row_remapped_to_leader():
    h = np.arange(2)
    width = 0.05
    est = np.array([0.1, 0.9])
    new, leader = eliminate(h, np.arange(2), est - width, est + width)
    assert leader == 1
    np.testing.assert_array_equal(new, [1, 1])


def test_elimination_uses_leq():
    new, _ = eliminate(np.arange(2), np.arange(2), np.array([0.5, 0.2]), np.array([0.7, 0.5]))
    np.testing.assert_array_equal(new, [0, 0])


def test_pointmass_eliminates_in_first_separating_stage():
    env = make_environment(Rank1Instance([1.0, 0.0], [1.0, 0.0], Noise("pointmass")))
    n = 10 ** 4
    e = Rank1Elim(2, 2, n, rng=5)
    run_stepwise(e, env, n)
    # rows: exploring row 0 against a random column gives mean 0.5, row 1 gives 0
    gap = 0.5
    first = next(s for s in range(20) if 2 * math.sqrt(math.log(n) / stage_length(s, n)) < gap)
    row_stage = next(r.stage for r in e.history if 1 in r.rows_eliminated)
    col_stage = next(r.stage for r in e.history if 1 in r.cols_eliminated)
    assert row_stage <= first and col_stage <= first


@pytest.mark.parametrize("seed", range(10))
def test_pointmass_elimination_timing(seed):
    rng = np.random.default_rng(seed)
    K, L, n = 4, 5, 10 ** 6
    u, v = rng.uniform(0.2, 1, K), rng.uniform(0.2, 1, L)
    inst = Rank1Instance(u, v, Noise("pointmass"))
    mu = min(u.mean(), v.mean())
    e = Rank1Elim(K, L, n, rng=seed)
    simulate(e, make_environment(inst), n)
    for side, gaps, key in (("row", u.max() - u, "rows_eliminated"),
                            ("col", v.max() - v, "cols_eliminated")):
        for i in np.flatnonzero(gaps > 0):
            m = next(s for s in range(60) if 2.0 ** -s < mu * gaps[i] / 2)
            if m >= len(e.history):
                continue
            gone = {x for r in e.history[:m + 1] for x in getattr(r, key)}
            assert i in gone, (side, i, m)


def test_horizon_truncation_exact_pulls():
    env = make_environment(spike(8, 8, 0.7, 0.7, 0.2, 0.2), rng=0)
    e = Rank1Elim(8, 8, 10, rng=0)
    run_stepwise(e, env, 10)
    assert e.t == 10
    with pytest.raises(RuntimeError):
        e.choose()
    assert e.stage == 0


def test_total_pulls_match_stage_counts():
    inst = spike(4, 4, 0.5, 0.5, 0.25, 0.25)
    n = 30000
    e = Rank1Elim(4, 4, n, rng=9)
    env = make_environment(inst, rng=9)
    regret, counts = simulate(e, env, n)
    assert counts.sum() == n
    cumulative, prev = 0, 0
    for rec, pulls in zip(e.history, e.stage_pulls):
        assert pulls == (rec.rows_remaining + rec.cols_remaining) * (rec.n_stage - prev)
        prev = rec.n_stage
        cumulative += pulls
    assert cumulative <= n


def test_same_seed_same_pulls():
    inst = spike(4, 4, 0.5, 0.5, 0.25, 0.25)
    a = simulate(Rank1Elim(4, 4, 5000, rng=1), make_environment(inst, rng=2), 5000)
    b = simulate(Rank1Elim(4, 4, 5000, rng=1), make_environment(inst, rng=2), 5000)
    np.testing.assert_array_equal(a[1], b[1])
    np.testing.assert_array_equal(a[0], b[0])


def test_block_and_stepwise_identical():
    inst = spike(5, 3, 0.5, 0.4, 0.3, 0.2)
    n = 40000
    a = Rank1Elim(5, 3, n, rng=4)
    b = Rank1Elim(5, 3, n, rng=4)
    ra, ca = simulate(a, make_environment(inst, rng=6), n)
    rb, cb = simulate(b, make_environment(inst, rng=6), n, stepwise=True)
    np.testing.assert_array_equal(ca, cb)
    np.testing.assert_allclose(ra, rb, rtol=1e-12)
    np.testing.assert_array_equal(a.Cu, b.Cu)
    np.testing.assert_array_equal(a.hu, b.hu)


def test_jsonl_log():
    fh = io.StringIO()
    e = Rank1Elim(3, 3, 10 ** 4, rng=0, log=jsonl_logger(fh))
    simulate(e, make_environment(spike(3, 3, 0.5, 0.5, 0.3, 0.3), rng=0), 10 ** 4)
    lines = [json.loads(x) for x in fh.getvalue().splitlines()]
    assert len(lines) == len(e.history) > 0
    assert set(lines[0]) == {"stage", "n_stage", "rows_remaining", "cols_remaining",
                             "row_leader", "col_leader", "rows_eliminated", "cols_eliminated"}


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
def test_structural_invariants(K, L, seed):
    rng = np.random.default_rng(seed)
    inst = Rank1Instance(rng.random(K), rng.random(L))
    env = make_environment(inst, rng=seed)
    n = 20000
    e = Rank1Elim(K, L, n, rng=seed)
    prev_rows, prev_cols = set(range(K)), set(range(L))
    while e.t < n:
        rows, cols = e.plan_block(n - e.t)
        stage = e.stage
        e.observe_block(rows, cols, env.sample_batch(rows, cols))
        if e.stage != stage:
            b = e.bounds
            w = 2 * math.sqrt(math.log(n) / e.history[-1].n_stage)
            np.testing.assert_allclose(b.row_upper - b.row_lower, w, rtol=1e-12)
            np.testing.assert_allclose(b.col_upper - b.col_lower, w, rtol=1e-12)
            np.testing.assert_array_equal(e.hu[e.hu], e.hu)
            np.testing.assert_array_equal(e.hv[e.hv], e.hv)
            assert set(e.rows.tolist()) <= prev_rows and set(e.cols.tolist()) <= prev_cols
            assert b.row_leader in e.rows and b.col_leader in e.cols
            assert e.tilde_gap == 2.0 ** -e.stage
            prev_rows, prev_cols = set(e.rows.tolist()), set(e.cols.tolist())
    assert e.t == n
