import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rank1bandit.core import (DegenerateInstanceError, Noise, Rank1Instance, compute_gaps,
                              optimal_arm, pseudo_regret)
from rank1bandit.environments import spike

means = st.floats(0.0, 1.0, allow_nan=False)


def vec(max_size=6):
    return arrays(np.float64, st.integers(1, max_size), elements=means)


def test_instance_validation():
    with pytest.raises(ValueError):
        Rank1Instance([1.2], [0.5])
    with pytest.raises(ValueError):
        Rank1Instance([], [0.5])
    with pytest.raises(ValueError):
        Noise("gaussian")
    with pytest.raises(ValueError):
        Noise("gaussian", sigma=0.0)
    with pytest.raises(ValueError):
        Noise("bernoulli", sigma=1.0)
    inst = Rank1Instance([0.2, 0.4], [0.5, 1.0, 0.0])
    assert (inst.K, inst.L) == (2, 3)
    np.testing.assert_array_equal(inst.means, np.outer([0.2, 0.4], [0.5, 1.0, 0.0]))
    with pytest.raises(ValueError):
        inst.u[0] = 0.3


def test_instance_json_roundtrip(tmp_path):
    inst = Rank1Instance([0.9, 0.1], [0.3], Noise("gaussian", 0.5))
    d = inst.to_dict()
    assert d == {"K": 2, "L": 1, "u": [0.9, 0.1], "v": [0.3],
                 "noise": {"kind": "gaussian", "sigma": 0.5}}
    inst.dump(tmp_path / "i.json")
    back = Rank1Instance.load(tmp_path / "i.json")
    np.testing.assert_array_equal(back.u, inst.u)
    assert back.noise == inst.noise


def test_optimal_arm_examples():
    # the top row and column are index 0
    assert optimal_arm(Rank1Instance([0.9, 0.5], [0.7, 0.7, 0.2])) == (0, 0, False)
    assert optimal_arm(Rank1Instance([0.5], [0.5])) == (0, 0, True)
    assert optimal_arm(spike(8, 8, 0.7, 0.7, 0.2, 0.2)) == (0, 0, True)


def test_gaps_spike_2x2():
    g = compute_gaps(spike(2, 2, 0.5, 0.5, 0.25, 0.25))
    np.testing.assert_allclose(g.row_gaps, [0, 0.25])
    np.testing.assert_allclose(g.col_gaps, [0, 0.25])
    assert g.mu == pytest.approx(0.625)
    np.testing.assert_allclose(g.modified_row_gaps, [0.25, 0.25])
    assert g.optimal_arm == (0, 0)


def test_gaps_flat_rows_use_column_gap():
    g = compute_gaps(Rank1Instance([0.7, 0.7], [0.9, 0.5]))
    np.testing.assert_array_equal(g.row_gaps, [0, 0])
    assert g.min_row_gap is None
    assert g.min_col_gap == pytest.approx(0.4)
    np.testing.assert_allclose(g.modified_row_gaps, [0.4, 0.4])
    # columns: zero gap replaced by the (absent) row minimum
    assert g.modified_col_gaps[0] == math.inf


def test_mu_spike_8x8():
    assert compute_gaps(spike(8, 8, 0.7, 0.7, 0.2, 0.2)).mu == pytest.approx(0.725)


def test_degenerate_instance():
    with pytest.raises(DegenerateInstanceError):
        compute_gaps(Rank1Instance([0.4, 0.4], [0.3, 0.3]))


def test_pseudo_regret_examples():
    inst = spike(8, 8, 0.7, 0.7, 0.2, 0.2)
    assert pseudo_regret(inst, (0, 0)) == 0
    assert pseudo_regret(inst, (1, 0)) == pytest.approx(0.18)
    assert pseudo_regret(Rank1Instance([1, 0.5], [1, 0.5]), (1, 1)) == pytest.approx(0.75)
    with pytest.raises(IndexError):
        pseudo_regret(inst, (8, 0))


@settings(max_examples=200, deadline=None)
@given(vec(), vec(), st.data())
def test_pseudo_regret_nonnegative_and_componentwise(u, v, data):
    inst = Rank1Instance(u, v)
    i = data.draw(st.integers(0, inst.K - 1))
    j = data.draw(st.integers(0, inst.L - 1))
    r = pseudo_regret(inst, (i, j))
    assert r >= 0
    assert (r == 0) == (inst.means[i, j] == inst.means.max())
    du = u.max() - u[i]
    dv = v.max() - v[j]
    assert r <= du + dv + 1e-12


@settings(max_examples=200, deadline=None)
@given(vec(), vec(), st.floats(0.01, 1.0))
def test_gaps_scale_consistent(u, v, c):
    inst = Rank1Instance(u, v)
    scaled = Rank1Instance(u, v * c)
    assert optimal_arm(scaled).row == optimal_arm(inst).row
    try:
        g1, g2 = compute_gaps(inst), compute_gaps(scaled)
    except DegenerateInstanceError:
        return
    np.testing.assert_array_equal(g1.row_gaps, g2.row_gaps)


@settings(max_examples=200, deadline=None)
@given(vec(), vec())
def test_gap_invariants(u, v):
    try:
        g = compute_gaps(Rank1Instance(u, v))
    except DegenerateInstanceError:
        return
    i, j = g.optimal_arm
    assert g.row_gaps[i] == 0 and g.col_gaps[j] == 0
    assert np.all(g.row_gaps >= 0) and np.all(g.col_gaps >= 0)
    pos = g.row_gaps[g.row_gaps > 0]
    assert g.min_row_gap == (pos.min() if pos.size else None)
    assert g.mu == min(u.mean(), v.mean())
    pos_rows = g.row_gaps > 0
    np.testing.assert_array_equal(g.modified_row_gaps[pos_rows], g.row_gaps[pos_rows])
    if g.min_col_gap is not None:
        assert np.all(g.modified_row_gaps[~pos_rows] == g.min_col_gap)
