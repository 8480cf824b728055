"""Survival curves, the Kaplan-Meier estimator and day-valued point predictions."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SurvivalCurve:
    """Monotone non-increasing step function S(t) on a strictly ascending grid.

    ``grid`` holds times in days, ``values`` the survival probabilities at
    those times. Between grid points the curve is right-continuous (the value
    at ``grid[i]`` holds on ``[grid[i], grid[i+1])``); before the first grid
    point S is 1 unless the grid starts at 0.
    """

    grid: np.ndarray
    values: np.ndarray
    median_defined: bool = field(default=True, compare=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if grid.ndim != 1 or values.shape != grid.shape:
            raise ValueError("grid and values must be 1-d arrays of equal length")
        if grid.size == 0:
            raise ValueError("empty curve grid")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly ascending")
        if np.any(values < -1e-12) or np.any(values > 1 + 1e-12):
            raise ValueError("survival values must lie in [0, 1]")
        if np.any(np.diff(values) > 1e-12):
            raise ValueError("survival values must be non-increasing")

    def __len__(self) -> int:
        return self.grid.size

    def at(self, t: float) -> float:
        """S(t) with step (right-continuous) interpolation; S=1 before the grid."""
        idx = np.searchsorted(self.grid, t, side="right") - 1
        if idx < 0:
            return 1.0
        return float(self.values[idx])


def kaplan_meier(durations, events) -> SurvivalCurve:
    """Product-limit estimator of the survival function.

    Censored rows leave the risk set without contributing a drop. The returned
    grid is the set of distinct observed durations (censored times included so
    the curve is defined there).
    """
    durations = np.asarray(durations, dtype=float)
    events = np.asarray(events, dtype=bool)
    if durations.size == 0:
        raise ValueError("kaplan_meier requires at least one row")
    if durations.shape != events.shape:
        raise ValueError("durations and events must have equal length")
    if np.any(durations <= 0):
        raise ValueError("durations must be positive")
    if not events.any():
        warnings.warn("all rows censored; survival curve is constant 1")

    order = np.argsort(durations, kind="stable")
    t_sorted = durations[order]
    e_sorted = events[order]

    times, start = np.unique(t_sorted, return_index=True)
    # deaths per distinct time, at-risk count just before each time
    boundaries = np.append(start, t_sorted.size)
    deaths = np.add.reduceat(e_sorted.astype(float), start)
    at_risk = durations.size - start.astype(float)

    factors = 1.0 - deaths / at_risk
    values = np.cumprod(factors)
    return SurvivalCurve(times, values)


def point_predict(curve: SurvivalCurve, rule: str = "restricted_mean") -> float:
    """Reduce a survival curve to a day-valued prediction.

    ``restricted_mean`` integrates S over [0, horizon] treating the curve as a
    step function (left endpoint value holds across each interval, S=1 before
    the grid). ``median`` returns the smallest grid time with S <= 0.5; when
    the curve never crosses 0.5 the grid horizon is returned and the curve's
    ``median_defined`` flag on the result is surfaced via the returned tuple
    from :func:`point_predict_flagged`.
    """
    value, _ = point_predict_flagged(curve, rule)
    return value


def point_predict_flagged(curve: SurvivalCurve, rule: str = "restricted_mean"):
    """Like :func:`point_predict` but also returns whether the rule was exact.

    For ``median`` the flag is False when S never reaches 0.5 and the horizon
    was substituted; for ``restricted_mean`` it is always True.
    """
    if not isinstance(curve, SurvivalCurve):
        raise TypeError("expected a SurvivalCurve")
    grid = curve.grid
    values = curve.values
    if rule == "restricted_mean":
        # left-Riemann step integral with implicit (t=0, S=1) start
        prev_t = np.concatenate(([0.0], grid[:-1]))
        prev_s = np.concatenate(([1.0 if grid[0] > 0 else values[0]], values[:-1]))
        return float(np.sum(prev_s * (grid - prev_t))), True
    if rule == "median":
        below = np.nonzero(values <= 0.5)[0]
        if below.size:
            return float(grid[below[0]]), True
        return float(grid[-1]), False
    raise ValueError(f"unknown point-prediction rule {rule!r}")


def restricted_mean_batch(grid: np.ndarray, value_rows: np.ndarray) -> np.ndarray:
    """Restricted-mean reduction for many curves sharing one grid.

    ``value_rows`` is (n_curves, len(grid)). Mirrors
    ``point_predict(..., "restricted_mean")`` row for row.
    """
    grid = np.asarray(grid, dtype=float)
    value_rows = np.atleast_2d(np.asarray(value_rows, dtype=float))
    prev_t = np.concatenate(([0.0], grid[:-1]))
    widths = grid - prev_t
    if grid[0] > 0:
        lead = np.ones((value_rows.shape[0], 1))
    else:
        lead = value_rows[:, :1]
    prev_s = np.hstack([lead, value_rows[:, :-1]])
    return prev_s @ widths
