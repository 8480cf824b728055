import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

from fleetsurv.stats import (
    TestResult,
    f_variance_ratio,
    ks_two_sample,
    shapiro_wilk,
    t_test_pooled,
    t_test_welch,
)


def test_result_decision_and_bounds():
    res = TestResult("ks-2sample", 0.3, 0.005, 0.01)
    assert res.significant
    with pytest.raises(ValueError):
        TestResult("ks-2sample", 0.3, 1.5, 0.01)


@pytest.mark.parametrize("n", [3, 4, 5, 7, 11, 12, 25, 100, 1200])
@pytest.mark.parametrize("dist", ["normal", "exponential", "uniform"])
def test_shapiro_matches_scipy(n, dist):
    rng = np.random.default_rng(hash((n, dist)) % 2**32)
    x = getattr(rng, dist)(size=n)
    mine = shapiro_wilk(x)
    ref = scipy.stats.shapiro(x)
    assert mine.statistic == pytest.approx(ref.statistic, abs=1e-6)
    assert mine.p_value == pytest.approx(ref.pvalue, abs=1e-6)


def test_shapiro_rejects_tiny_or_constant():
    with pytest.raises(ValueError):
        shapiro_wilk([1.0, 2.0])
    with pytest.raises(ValueError):
        shapiro_wilk([3.0, 3.0, 3.0])


def test_ks_identical_samples():
    rng = np.random.default_rng(1)
    x = rng.normal(size=500)
    res = ks_two_sample(x, x)
    assert res.statistic == 0.0
    assert res.p_value == 1.0
    assert not res.significant


def test_ks_disjoint_supports():
    res = ks_two_sample([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
    assert res.statistic == 1.0


@pytest.mark.parametrize("sizes", [(10, 15), (200, 180), (1000, 1000)])
def test_ks_statistic_matches_scipy(sizes):
    rng = np.random.default_rng(sizes[0])
    x = rng.normal(size=sizes[0])
    y = rng.normal(0.4, 1.3, size=sizes[1])
    mine = ks_two_sample(x, y)
    ref = scipy.stats.ks_2samp(x, y, method="asymp")
    assert mine.statistic == pytest.approx(ref.statistic, abs=1e-12)


@pytest.mark.parametrize("equal_var", [True, False])
def test_t_tests_match_scipy(equal_var):
    rng = np.random.default_rng(7 if equal_var else 8)
    x = rng.normal(0.84, 1.08, size=50)
    y = rng.normal(0.65, 0.99, size=50)
    mine = (t_test_pooled if equal_var else t_test_welch)(x, y)
    ref = scipy.stats.ttest_ind(x, y, equal_var=equal_var)
    assert mine.statistic == pytest.approx(ref.statistic, abs=1e-6)
    assert mine.p_value == pytest.approx(ref.pvalue, abs=1e-6)


def test_t_identical_samples():
    x = np.arange(10.0)
    res = t_test_pooled(x, x.copy())
    assert res.statistic == 0.0
    assert res.p_value == 1.0


def test_t_degenerate_variance():
    res = t_test_pooled([0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0])
    assert res.p_value == 0.0
    assert res.significant
    same = t_test_welch([2.0, 2.0], [2.0, 2.0])
    assert same.p_value == 1.0


def test_f_ratio_routes():
    rng = np.random.default_rng(11)
    same = f_variance_ratio(rng.normal(size=300), rng.normal(size=300))
    assert not same.significant
    differing = f_variance_ratio(rng.normal(size=300), rng.normal(0, 5, size=300))
    assert differing.significant


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_statistic_ranges(data):
    n = data.draw(st.integers(3, 60))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**31)))
    x = rng.normal(size=n) + rng.exponential(size=n)
    y = rng.normal(size=n)
    w = shapiro_wilk(x).statistic
    d = ks_two_sample(x, y).statistic
    assert 0.0 < w <= 1.0
    assert 0.0 <= d <= 1.0
