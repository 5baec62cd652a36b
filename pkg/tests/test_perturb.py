"""Perturbation contracts: reversal, playback-rate sampling, seeded draws."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stlg.perturb import (
    Perturbation,
    random_augment_pair,
    random_perturbation,
    scaling_indices,
    time_lagging,
    time_scaling,
)


def test_lagging_single_element_is_identity():
    v = np.arange(12.0).reshape(6, 2)
    assert np.array_equal(time_lagging(v, 3, 3), v)


def test_lagging_reverses_span():
    v = np.arange(5.0)[:, None] + 1  # rows v1..v5
    out = time_lagging(v, 2, 4)
    assert out[:, 0].tolist() == [1, 4, 3, 2, 5]


def test_lagging_is_involution():
    rng = np.random.default_rng(3)
    v = rng.normal(size=(17, 4))
    twice = time_lagging(time_lagging(v, 5, 11), 5, 11)
    assert np.array_equal(twice, v)


def test_lagging_bounds():
    v = np.zeros((5, 2))
    with pytest.raises(ValueError):
        time_lagging(v, 0, 3)
    with pytest.raises(ValueError):
        time_lagging(v, 4, 2)
    with pytest.raises(ValueError):
        time_lagging(v, 1, 6)


@given(st.integers(1, 30), st.data())
def test_lagging_preserves_row_multiset(T, data):
    r_s = data.draw(st.integers(1, T))
    r_e = data.draw(st.integers(r_s, T))
    v = np.arange(T, dtype=float)[:, None]
    out = time_lagging(v, r_s, r_e)
    assert sorted(out[:, 0].tolist()) == sorted(v[:, 0].tolist())
    untouched = list(range(0, r_s - 1)) + list(range(r_e, T))
    assert np.array_equal(out[untouched], v[untouched])


def test_scaling_identity_at_theta_one():
    v = np.random.default_rng(0).normal(size=(7, 3))
    assert np.array_equal(time_scaling(v, 1.0), v)


def test_scaling_half_duplicates_rows():
    assert scaling_indices(4, 0.5).tolist() == [0, 0, 1, 1, 2, 2, 3, 3]


def test_scaling_three_quarters():
    # T'=round(4/0.75)=5, rows floor(t'*0.75) = 0,0,1,2,3
    assert scaling_indices(4, 0.75).tolist() == [0, 0, 1, 2, 3]


def test_scaling_validation():
    v = np.zeros((4, 2))
    with pytest.raises(ValueError):
        time_scaling(v, 0.0)
    with pytest.raises(ValueError):
        time_scaling(v, -0.5)
    with pytest.raises(ValueError):
        time_scaling(v, 1.5)


@given(st.integers(1, 40), st.sampled_from([0.25, 0.5, 0.75, 1.0]))
def test_scaling_length_and_index_bounds(T, theta):
    idx = scaling_indices(T, theta)
    assert len(idx) == int(np.floor(T / theta + 0.5))
    assert idx.min() >= 0 and idx.max() <= T - 1
    assert np.all(np.diff(idx) >= 0)  # playback never rewinds


@given(st.integers(2, 20), st.integers(1, 4))
def test_scaling_integer_rate_repeats_each_row(T, m):
    idx = scaling_indices(T, 1.0 / m)
    counts = np.bincount(idx, minlength=T)
    assert np.all(counts == m)


@given(st.integers(2, 16))
def test_perturbations_commute_with_rowwise_maps(T):
    rng = np.random.default_rng(T)
    v = rng.normal(size=(T, 3))
    rowmap = lambda x: np.tanh(x) * 2.0 + 1.0
    for p in (
        Perturbation("lag", lag_span=(1, T)),
        Perturbation("scale", theta=0.5),
        Perturbation("identity"),
    ):
        assert np.allclose(p.apply(rowmap(v)), rowmap(p.apply(v)))


def test_augment_pair_reproducible():
    v = np.random.default_rng(5).normal(size=(20, 4))
    a1, b1 = random_augment_pair(v, np.random.default_rng(123))
    a2, b2 = random_augment_pair(v, np.random.default_rng(123))
    assert np.array_equal(a1, a2) and np.array_equal(b1, b2)


def test_augment_pair_identity_draws_copy_input():
    v = np.random.default_rng(6).normal(size=(10, 2))
    p = Perturbation("identity")
    out = p.apply(v)
    assert np.array_equal(out, v) and out is not v


def test_augment_type_frequencies():
    rng = np.random.default_rng(99)
    counts = {"lag": 0, "scale": 0, "identity": 0}
    n = 10000
    for _ in range(n):
        counts[random_perturbation(64, rng).kind] += 1
    for kind, c in counts.items():
        assert abs(c / n - 1 / 3) < 0.02, (kind, c)


def test_lag_span_fraction_range():
    rng = np.random.default_rng(11)
    T = 100
    for _ in range(2000):
        p = random_perturbation(T, rng)
        if p.kind != "lag":
            continue
        r_s, r_e = p.lag_span
        span = r_e - r_s + 1
        assert 1 <= r_s <= r_e <= T
        assert 0.05 * T - 1 <= span <= 0.2 * T + 1


def test_mask_transforms_alongside_features():
    v = np.random.default_rng(1).normal(size=(10, 3))
    mask = np.ones(10, dtype=bool)
    mask[7:] = False
    p = Perturbation("scale", theta=0.5)
    vm, mm = p.apply(v), p.apply(mask)
    assert vm.shape[0] == mm.shape[0] == 20
    assert mm.sum() == 14  # each of the 7 valid rows duplicated
