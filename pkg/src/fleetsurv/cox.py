"""Cox proportional hazards with Breslow tie handling.

Newton-Raphson maximization of the partial likelihood with step halving,
plus two baseline estimators: the Breslow step-function cumulative hazard and
a piecewise-constant-hazard alternative.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .base import SurvivalModel, prediction_grid
from .errors import DataError, NumericalError
from .mo_units import SurvivalDataset

BETA_DIVERGENCE_LIMIT = 1e8
SEPARATION_RISK_SPREAD = 15.0
RIDGE_FALLBACK = 0.1


@dataclass
class CoxConfig:
    baseline: str = "breslow"
    max_iter: int = 100
    tol: float = 1e-7
    piecewise_segments: int = 8

    def __post_init__(self):
        if self.baseline not in ("breslow", "piecewise"):
            raise DataError(f"baseline must be 'breslow' or 'piecewise', got {self.baseline!r}")


@dataclass
class _PartialLikelihood:
    """Sufficient statistics of the Breslow-tie partial likelihood."""

    t: np.ndarray            # ascending durations
    x: np.ndarray            # centered covariates, same order
    event: np.ndarray
    risk_start: np.ndarray   # first sorted index of each risk set
    death_sums: np.ndarray   # sum of covariates over deaths per event time
    death_counts: np.ndarray
    event_times: np.ndarray

    @classmethod
    def build(cls, durations, events, x_centered):
        order = np.argsort(durations, kind="stable")
        t = durations[order]
        x = x_centered[order]
        e = events[order]
        event_times, first_idx = np.unique(t[e], return_index=True)
        # first sorted index whose duration >= each event time
        risk_start = np.searchsorted(t, event_times, side="left")
        death_counts = np.zeros(event_times.size)
        death_sums = np.zeros((event_times.size, x.shape[1]))
        slot = np.searchsorted(event_times, t[e])
        np.add.at(death_counts, slot, 1.0)
        np.add.at(death_sums, slot, x[e])
        return cls(t, x, e, risk_start, death_sums, death_counts, event_times)

    def _risk_accumulators(self, beta):
        eta = self.x @ beta
        eta = np.clip(eta, -700, 700)
        w = np.exp(eta)
        # reverse cumulative sums: risk-set totals for each event time
        rc_w = np.cumsum(w[::-1])[::-1]
        rc_xw = np.cumsum((self.x * w[:, None])[::-1], axis=0)[::-1]
        sum_w = rc_w[self.risk_start]
        sum_xw = rc_xw[self.risk_start]
        return eta, w, sum_w, sum_xw

    def log_likelihood(self, beta) -> float:
        _, _, sum_w, _ = self._risk_accumulators(beta)
        return float(np.sum(self.death_sums @ beta - self.death_counts * np.log(sum_w)))

    def gradient_hessian(self, beta):
        _, w, sum_w, sum_xw = self._risk_accumulators(beta)
        mean_x = sum_xw / sum_w[:, None]
        grad = self.death_sums.sum(axis=0) - (self.death_counts[:, None] * mean_x).sum(axis=0)

        d = self.x.shape[1]
        xxw = np.einsum("ni,nj,n->nij", self.x, self.x, w)
        rc_xxw = np.cumsum(xxw[::-1], axis=0)[::-1]
        sum_xxw = rc_xxw[self.risk_start]
        cov = sum_xxw / sum_w[:, None, None] - np.einsum("ki,kj->kij", mean_x, mean_x)
        hess = -np.einsum("k,kij->ij", self.death_counts, cov)
        return grad, hess.reshape(d, d)


class CoxModel(SurvivalModel):
    """Fitted proportional-hazards model with a cumulative-hazard baseline."""

    model_type = "cph"

    def __init__(self, beta, feature_means, feature_names, baseline_times,
                 baseline_cumhaz, time_grid, baseline_kind, n_iter, log_likelihood,
                 ridge_used=False):
        self.beta = np.asarray(beta, dtype=float)
        self.feature_means = np.asarray(feature_means, dtype=float)
        self.feature_names = list(feature_names)
        self.baseline_times = np.asarray(baseline_times, dtype=float)
        self.baseline_cumhaz = np.asarray(baseline_cumhaz, dtype=float)
        self.time_grid = np.asarray(time_grid, dtype=float)
        self.baseline_kind = baseline_kind
        self.n_iter = n_iter
        self.log_likelihood = log_likelihood
        self.ridge_used = ridge_used
        self._grid_cumhaz = baseline_cumhaz_at(
            self.baseline_times, self.baseline_cumhaz, self.time_grid, baseline_kind
        )

    def risk_scores(self, X) -> np.ndarray:
        X = self._check_features(X)
        return (X - self.feature_means) @ self.beta

    def predict_values(self, X) -> np.ndarray:
        scores = np.clip(self.risk_scores(X), -700, 700)
        return np.exp(-np.outer(np.exp(scores), self._grid_cumhaz))


def baseline_cumhaz_at(times, cumhaz, query, kind) -> np.ndarray:
    """Evaluate a fitted baseline cumulative hazard at query times.

    Breslow baselines are right-continuous steps at event times; piecewise
    baselines interpolate linearly between segment boundaries.
    """
    query = np.asarray(query, dtype=float)
    if kind == "piecewise":
        return np.interp(query, times, cumhaz)
    idx = np.searchsorted(times, query, side="right") - 1
    out = np.zeros(query.shape)
    inside = idx >= 0
    out[inside] = cumhaz[idx[inside]]
    return out


def breslow_cumulative_hazard(durations, events, risk_scores):
    """Breslow step-function baseline from fitted risk scores.

    Returns (event_times, cumulative_hazard) with
    H0(t) = sum_{event times s <= t} d_s / sum_{j in risk set} exp(score_j).
    """
    durations = np.asarray(durations, dtype=float)
    events = np.asarray(events, dtype=bool)
    order = np.argsort(durations, kind="stable")
    t = durations[order]
    e = events[order]
    w = np.exp(np.clip(np.asarray(risk_scores, dtype=float)[order], -700, 700))
    event_times = np.unique(t[e])
    risk_start = np.searchsorted(t, event_times, side="left")
    rc_w = np.cumsum(w[::-1])[::-1]
    deaths = np.zeros(event_times.size)
    np.add.at(deaths, np.searchsorted(event_times, t[e]), 1.0)
    increments = deaths / rc_w[risk_start]
    return event_times, np.cumsum(increments)


def piecewise_cumulative_hazard(durations, events, risk_scores, n_segments):
    """Piecewise-constant-hazard baseline given risk scores.

    Segment boundaries sit at event-time quantiles; each segment's hazard is
    the event count divided by the score-weighted time at risk inside it.
    Returns (boundaries, cumulative hazard at boundaries), linear in between.
    """
    durations = np.asarray(durations, dtype=float)
    events = np.asarray(events, dtype=bool)
    w = np.exp(np.clip(np.asarray(risk_scores, dtype=float), -700, 700))
    event_times = durations[events]
    qs = np.linspace(0, 1, n_segments + 1)[1:-1]
    inner = np.unique(np.quantile(event_times, qs)) if event_times.size else np.array([])
    bounds = np.unique(np.concatenate([[0.0], inner, [durations.max()]]))
    cumhaz = [0.0]
    total = 0.0
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        exposure = np.clip(np.minimum(durations, hi) - lo, 0.0, None)
        weighted_exposure = float(np.sum(w * exposure))
        deaths = float(np.sum(events & (durations > lo) & (durations <= hi)))
        rate = deaths / weighted_exposure if weighted_exposure > 0 else 0.0
        total += rate * (hi - lo)
        cumhaz.append(total)
    return bounds, np.array(cumhaz)


def fit_cox(dataset: SurvivalDataset, config: CoxConfig | None = None) -> CoxModel:
    """Maximize the Breslow-tie partial likelihood by Newton iterations.

    Stops when the gradient infinity norm drops below ``config.tol``. A
    diverging coefficient (separation) triggers a ridge-penalized refit with
    a warning; non-convergence raises.
    """
    config = config or CoxConfig()
    durations = dataset.durations
    events = dataset.events
    X = dataset.features
    if int(events.sum()) < 2:
        raise DataError("insufficient events: Cox fitting needs at least 2")
    variances = X.var(axis=0)
    flat = np.nonzero(variances == 0)[0]
    if flat.size:
        names = ", ".join(dataset.feature_names[i] for i in flat)
        raise DataError(f"zero-variance feature(s): {names}")

    means = X.mean(axis=0)
    pl = _PartialLikelihood.build(durations, events, X - means)
    # ridge fallback penalizes on the standardized scale so it bites
    # regardless of feature units
    ridge_weights = X.std(axis=0) ** 2

    beta, n_iter, ridge_used = _newton(pl, config, ridge=0.0, ridge_weights=ridge_weights)
    # separation makes the likelihood plateau at an absurd risk-score spread;
    # the gradient then vanishes and Newton "converges" far out
    if beta is not None:
        eta = (X - means) @ beta
        if eta.max() - eta.min() > SEPARATION_RISK_SPREAD:
            beta = None
    if beta is None:
        warnings.warn("separation detected; refitting with ridge penalty")
        beta, n_iter, _ = _newton(
            pl, config, ridge=RIDGE_FALLBACK, ridge_weights=ridge_weights
        )
        ridge_used = True
        if beta is None:
            raise NumericalError("Cox fit failed even with ridge fallback")

    scores = (X - means) @ beta
    if config.baseline == "breslow":
        times, cumhaz = breslow_cumulative_hazard(durations, events, scores)
    else:
        times, cumhaz = piecewise_cumulative_hazard(
            durations, events, scores, config.piecewise_segments
        )
    grid = prediction_grid(durations, events)
    return CoxModel(
        beta,
        means,
        dataset.feature_names,
        times,
        cumhaz,
        grid,
        config.baseline,
        n_iter,
        pl.log_likelihood(beta),
        ridge_used,
    )


def _newton(pl: _PartialLikelihood, config: CoxConfig, ridge: float, ridge_weights):
    d = pl.x.shape[1]
    beta = np.zeros(d)
    rw = ridge * ridge_weights

    def objective(b):
        return pl.log_likelihood(b) - 0.5 * float(rw @ (b * b))

    loglik = objective(beta)
    for iteration in range(1, config.max_iter + 1):
        grad, hess = pl.gradient_hessian(beta)
        grad = grad - rw * beta
        hess = hess - np.diag(rw)
        if np.max(np.abs(grad)) < config.tol:
            return beta, iteration - 1, ridge > 0
        try:
            delta = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            return None, iteration, ridge > 0
        step = 1.0
        for _ in range(40):
            candidate = beta + step * delta
            cand_ll = objective(candidate)
            if np.isfinite(cand_ll) and cand_ll >= loglik - 1e-12:
                break
            step *= 0.5
        else:
            return None, iteration, ridge > 0
        beta, loglik = candidate, cand_ll
        if np.max(np.abs(beta)) > BETA_DIVERGENCE_LIMIT:
            return None, iteration, ridge > 0
    grad, _ = pl.gradient_hessian(beta)
    if np.max(np.abs(grad - rw * beta)) < config.tol:
        return beta, config.max_iter, ridge > 0
    raise NumericalError(
        f"Cox Newton iterations did not converge in {config.max_iter} steps "
        f"(gradient norm {np.max(np.abs(grad)):.3g})"
    )
