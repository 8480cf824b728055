import numpy as np
import pytest
from hypothesis import given, strategies as st

from fleetsurv.curves import (
    SurvivalCurve,
    kaplan_meier,
    point_predict,
    point_predict_flagged,
    restricted_mean_batch,
)


def brute_force_km(durations, events):
    """Risk-set recomputation straight from the product-limit definition."""
    durations = np.asarray(durations, dtype=float)
    events = np.asarray(events, dtype=bool)
    times = np.unique(durations)
    s = 1.0
    values = []
    for t in times:
        at_risk = np.sum(durations >= t)
        deaths = np.sum((durations == t) & events)
        s *= 1.0 - deaths / at_risk
        values.append(s)
    return times, np.array(values)


def test_km_hand_fixture():
    curve = kaplan_meier([1, 2, 3], [1, 1, 0])
    assert curve.at(1) == pytest.approx(2 / 3)
    assert curve.at(2) == pytest.approx(1 / 3)
    assert curve.at(3) == pytest.approx(1 / 3)


def test_km_all_events_same_time():
    curve = kaplan_meier([5, 5, 5, 5], [1, 1, 1, 1])
    assert curve.at(5) == 0.0


def test_km_no_events_constant_one():
    with pytest.warns(UserWarning, match="all rows censored"):
        curve = kaplan_meier([1, 2, 3], [0, 0, 0])
    assert np.all(curve.values == 1.0)


def test_km_rejects_empty_and_nonpositive():
    with pytest.raises(ValueError):
        kaplan_meier([], [])
    with pytest.raises(ValueError):
        kaplan_meier([0, 1], [1, 1])


@given(st.data())
def test_km_matches_brute_force(data):
    n = data.draw(st.integers(1, 30))
    durations = data.draw(
        st.lists(st.integers(1, 15), min_size=n, max_size=n)
    )
    events = data.draw(st.lists(st.booleans(), min_size=n, max_size=n))
    if not any(events):
        events[0] = True
    curve = kaplan_meier(durations, events)
    times, values = brute_force_km(durations, events)
    assert np.allclose(curve.grid, times)
    assert np.max(np.abs(curve.values - values)) < 1e-12


def test_curve_validation():
    with pytest.raises(ValueError):
        SurvivalCurve(np.array([2.0, 1.0]), np.array([1.0, 0.5]))
    with pytest.raises(ValueError):
        SurvivalCurve(np.array([1.0, 2.0]), np.array([0.5, 0.8]))
    with pytest.raises(ValueError):
        SurvivalCurve(np.array([1.0, 2.0]), np.array([1.5, 0.5]))
    with pytest.raises(ValueError):
        SurvivalCurve(np.array([]), np.array([]))


def test_point_predict_step_curve_both_rules():
    tau = 7.0
    grid = np.arange(1.0, 15.0)
    values = np.where(grid < tau, 1.0, 0.0)
    curve = SurvivalCurve(grid, values)
    assert point_predict(curve, "restricted_mean") == pytest.approx(tau)
    assert point_predict(curve, "median") == pytest.approx(tau)


def test_point_predict_flat_curve():
    horizon = 40.0
    curve = SurvivalCurve(np.array([10.0, horizon]), np.array([1.0, 1.0]))
    assert point_predict(curve, "restricted_mean") == pytest.approx(horizon)
    value, defined = point_predict_flagged(curve, "median")
    assert value == horizon
    assert not defined


def test_point_predict_exponential_closed_form():
    lam = 0.01
    grid = np.arange(1.0, 1001.0)
    curve = SurvivalCurve(grid, np.exp(-lam * grid))
    expected = (1 - np.exp(-10)) / lam
    assert point_predict(curve, "restricted_mean") == pytest.approx(expected, rel=0.02)


def test_point_predict_unknown_rule():
    curve = SurvivalCurve(np.array([1.0]), np.array([1.0]))
    with pytest.raises(ValueError):
        point_predict(curve, "mode")


def test_restricted_mean_batch_matches_scalar():
    rng = np.random.default_rng(3)
    grid = np.sort(rng.uniform(0.5, 100, size=12))
    rows = np.sort(rng.uniform(0, 1, size=(5, 12)), axis=1)[:, ::-1]
    batch = restricted_mean_batch(grid, rows)
    for i in range(5):
        scalar = point_predict(SurvivalCurve(grid, rows[i]), "restricted_mean")
        assert batch[i] == pytest.approx(scalar, abs=1e-12)
