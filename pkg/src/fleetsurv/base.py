"""Shared estimator surface: batched curve prediction and point reduction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curves import SurvivalCurve, restricted_mean_batch
from .errors import DataError


class SurvivalModel:
    """Common surface of the four estimators.

    Subclasses set ``time_grid`` and ``feature_names`` during fit and
    implement ``predict_values`` returning an (n, len(grid)) matrix of
    survival probabilities.
    """

    time_grid: np.ndarray
    feature_names: list[str]

    def _check_features(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.feature_names):
            raise DataError(
                f"feature dimension mismatch: model expects {len(self.feature_names)}, "
                f"got {X.shape[1]}"
            )
        return X

    def predict_values(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_curve(self, x) -> SurvivalCurve:
        values = self.predict_values(np.atleast_2d(np.asarray(x, dtype=float)))[0]
        return SurvivalCurve(self.time_grid, np.clip(values, 0.0, 1.0))

    def predict_days(self, X, rule: str = "restricted_mean") -> np.ndarray:
        values = np.clip(self.predict_values(X), 0.0, 1.0)
        if rule == "restricted_mean":
            return restricted_mean_batch(self.time_grid, values)
        if rule == "median":
            below = values <= 0.5
            out = np.full(values.shape[0], self.time_grid[-1])
            any_below = below.any(axis=1)
            out[any_below] = self.time_grid[np.argmax(below[any_below], axis=1)]
            return out
        raise ValueError(f"unknown point-prediction rule {rule!r}")


@dataclass
class Standardizer:
    """Train-set mean/std feature scaling (constant columns pass through)."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(mean, std)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std


def prediction_grid(durations: np.ndarray, events: np.ndarray) -> np.ndarray:
    """Unique event times extended to the overall duration horizon."""
    events = np.asarray(events, dtype=bool)
    times = np.unique(np.asarray(durations, dtype=float)[events])
    horizon = float(np.max(durations))
    if times.size == 0:
        return np.array([horizon])
    if times[-1] < horizon:
        times = np.append(times, horizon)
    return times
