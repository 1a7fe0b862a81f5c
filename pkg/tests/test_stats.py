from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from molesim import stats

import oracles

small_ints = st.lists(st.integers(0, 6), min_size=1, max_size=8)
values = st.lists(st.floats(0, 1e3, allow_nan=False), min_size=1, max_size=40)


def test_cliffs_example():
    assert stats.cliffs_delta([1, 3], [2, 4]) == -0.5


def test_cliffs_empty_raises():
    with pytest.raises(stats.EmptySampleError):
        stats.cliffs_delta([], [1])


@pytest.mark.parametrize(
    "x,y,u",
    [([1, 2, 2], [2, 3], 1.0), ([3, 4], [1, 2], 4.0)],
)
def test_mwu_examples(x, y, u):
    assert stats.mann_whitney_u(x, y).statistic == u


def test_wilcoxon_examples():
    r = stats.wilcoxon_signed_rank([1, 2, 3])
    assert (r.statistic, r.p_value) == (0, 0.25)
    r = stats.wilcoxon_signed_rank([1, -2, 3])
    assert (r.statistic, r.p_value) == (2, 0.75)
    assert stats.wilcoxon_signed_rank([0, 0, 0]).p_value == 1.0


def test_spearman_and_gini_examples():
    assert stats.spearman_rho([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)
    assert math.isnan(stats.spearman_rho([1, 1, 1], [1, 2, 3]))
    assert stats.gini([1, 2, 3, 4]) == pytest.approx(0.25)
    assert stats.gini([0, 0, 0, 1]) == pytest.approx(0.75)


def test_gini_rejects_negative_and_all_zero():
    with pytest.raises(ValueError):
        stats.gini([1, -1])
    with pytest.raises(ValueError):
        stats.gini([0, 0])


def test_magnitude_bands():
    assert [stats.magnitude(d) for d in (0.1, -0.2, 0.4, -0.9)] == ["negligible", "small", "medium", "large"]


def test_lorenz_share_equal_and_concentrated():
    assert stats.lorenz_share([1] * 10, 0.8) == pytest.approx(0.8)
    assert stats.lorenz_share([0] * 9 + [1], 0.8) == pytest.approx(0.0)
    pts = stats.lorenz_points([1, 2, 3])
    assert pts[0] == (0.0, 0.0) and pts[-1] == pytest.approx((1.0, 1.0))


def test_mwu_large_uses_normal():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=150), rng.normal(0.3, size=150)
    r = stats.mann_whitney_u(x, y)
    assert not r.exact and 0 < r.p_value < 1


@given(small_ints, small_ints)
def test_cliffs_antisymmetric_and_tied_to_u(x, y):
    d = stats.cliffs_delta(x, y)
    assert d == -stats.cliffs_delta(y, x)
    u = stats.mann_whitney_u(x, y).statistic
    assert d == pytest.approx(2 * u / (len(x) * len(y)) - 1)


@settings(max_examples=200)
@given(small_ints, small_ints)
def test_exact_mwu_matches_enumeration(x, y):
    r = stats.mann_whitney_u(x, y, exact=True)
    assert r.statistic == oracles.mwu_u(x, y)
    assert r.p_value == oracles.mwu_exact_p(x, y)


@settings(max_examples=200)
@given(st.lists(st.integers(-4, 4), min_size=1, max_size=10))
def test_exact_wilcoxon_matches_enumeration(d):
    r = stats.wilcoxon_signed_rank(d, exact=True)
    assert (r.statistic, r.p_value) == oracles.wilcoxon_exact(d)


@given(values, st.floats(0.01, 100))
def test_gini_scale_invariant(v, c):
    if sum(v) <= 0:
        return
    assert stats.gini(np.asarray(v) * c) == pytest.approx(stats.gini(v), abs=1e-9)


@given(values, st.integers(2, 4))
def test_gini_replication_invariant(v, k):
    if sum(v) <= 0:
        return
    assert stats.gini(v * k) == pytest.approx(stats.gini(v), abs=1e-9)


@pytest.mark.parametrize("n", [2, 10, 100, 1000])
def test_gini_sorted_formula_matches_double_sum(n):
    v = np.random.default_rng(n).exponential(size=n)
    assert abs(stats.gini(v) - oracles.gini(v)) <= 1e-12


@given(st.lists(st.integers(0, 5), min_size=2, max_size=12), st.data())
def test_spearman_matches_oracle(x, data):
    y = data.draw(st.lists(st.integers(0, 5), min_size=len(x), max_size=len(x)))
    mine, ref = stats.spearman_rho(x, y), oracles.spearman(x, y)
    assert (math.isnan(mine) and math.isnan(ref)) or mine == pytest.approx(ref, abs=1e-12)


def test_bca_deterministic_and_contains_point():
    s = np.random.default_rng(3).normal(size=25)
    a = stats.bca_interval(s, np.mean)
    assert a == stats.bca_interval(s, np.mean)
    assert a.ci_low < a.point < a.ci_high
    assert a.bootstrap_seed == 42 and a.resamples == 1000


def test_bca_degenerate_falls_back():
    est = stats.bca_interval(np.ones(10), np.mean)
    assert est.degenerate and est.ci_low == est.ci_high == 1.0


def test_bca_two_sample_delta():
    rng = np.random.default_rng(5)
    x, y = rng.normal(1, size=20), rng.normal(size=20)
    est = stats.bca_interval((x, y), stats.cliffs_delta)
    assert -1 <= est.ci_low <= est.point <= est.ci_high <= 1
