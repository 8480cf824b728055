"""Feed-forward Cox regression: an MLP risk score trained on the Breslow-tie
negative partial likelihood, with a Breslow baseline fitted afterwards."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .base import Standardizer, SurvivalModel, prediction_grid
from .cox import breslow_cumulative_hazard
from .errors import DataError, NumericalError, UsageError
from .mo_units import SurvivalDataset
from .optim import INITIALIZERS, init_weights, make_optimizer

BN_EPS = 1e-5
DROPOUT_RATE = 0.5
LR_RANGE = (1e-5, 1e-2)
EPOCH_RANGE = (50, 500)
L2_RANGE = (0.0, 1e-2)


@dataclass
class DeepSurvConfig:
    layers: tuple[int, ...] = (32, 32)
    lr: float = 1e-3
    epochs: int = 200
    l2: float = 0.0
    batchnorm: bool = False
    dropout: bool = False
    init: str = "glorot_uniform"
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        self.layers = tuple(int(v) for v in self.layers)
        if any(v < 1 for v in self.layers):
            raise UsageError("hidden layer sizes must be positive")
        if not LR_RANGE[0] <= self.lr <= LR_RANGE[1]:
            raise UsageError(f"lr must lie in [{LR_RANGE[0]}, {LR_RANGE[1]}]")
        if not EPOCH_RANGE[0] <= self.epochs <= EPOCH_RANGE[1]:
            raise UsageError(f"epochs must lie in [{EPOCH_RANGE[0]}, {EPOCH_RANGE[1]}]")
        if not L2_RANGE[0] <= self.l2 <= L2_RANGE[1]:
            raise UsageError(f"l2 must lie in [{L2_RANGE[0]}, {L2_RANGE[1]}]")
        if self.init not in INITIALIZERS:
            raise UsageError(f"init must be one of {INITIALIZERS}")
        if self.optimizer not in ("sgd", "adam"):
            raise UsageError("optimizer must be 'sgd' or 'adam'")


@dataclass
class NetworkParams:
    """All trainable arrays of the MLP risk network."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    gammas: list[np.ndarray] | None  # batchnorm scale, per hidden layer
    betas: list[np.ndarray] | None   # batchnorm shift
    w_out: np.ndarray
    b_out: np.ndarray

    def flatten(self) -> list[np.ndarray]:
        arrays = [*self.weights, *self.biases]
        if self.gammas is not None:
            arrays += [*self.gammas, *self.betas]
        arrays += [self.w_out, self.b_out]
        return arrays

    @classmethod
    def initialize(cls, d_in, layers, batchnorm, init, rng):
        weights, biases = [], []
        fan_in = d_in
        for width in layers:
            weights.append(init_weights(init, (fan_in, width), rng))
            biases.append(np.zeros(width))
            fan_in = width
        gammas = [np.ones(w) for w in layers] if batchnorm else None
        betas = [np.zeros(w) for w in layers] if batchnorm else None
        w_out = init_weights(init, (fan_in, 1), rng)
        return cls(weights, biases, gammas, betas, w_out, np.zeros(1))


class CoxRiskLoss:
    """Breslow-tie negative partial likelihood of risk scores.

    Precomputes risk-set bookkeeping for a fixed (durations, events) sample;
    ``value_and_gradient`` then maps any score vector to (loss, dloss/dscore),
    normalized by the number of events.
    """

    def __init__(self, durations, events):
        durations = np.asarray(durations, dtype=float)
        events = np.asarray(events, dtype=bool)
        if events.sum() < 2:
            raise DataError("insufficient events: need at least 2")
        self.order = np.argsort(durations, kind="stable")
        self.t = durations[self.order]
        self.e = events[self.order]
        self.n_events = float(events.sum())
        self.event_times = np.unique(self.t[self.e])
        self.risk_start = np.searchsorted(self.t, self.event_times, side="left")
        self.deaths = np.zeros(self.event_times.size)
        np.add.at(self.deaths, np.searchsorted(self.event_times, self.t[self.e]), 1.0)
        # index of the last event time <= each row's duration (-1 if none)
        self.row_slot = np.searchsorted(self.event_times, self.t, side="right") - 1

    def value_and_gradient(self, scores):
        r = np.asarray(scores, dtype=float).reshape(-1)[self.order]
        r = np.clip(r, -700, 700)
        w = np.exp(r)
        risk_sums = np.cumsum(w[::-1])[::-1][self.risk_start]
        loss = -(np.sum(r[self.e]) - np.sum(self.deaths * np.log(risk_sums)))
        loss /= self.n_events
        # cumulative Breslow increments evaluated at each row's duration
        increments = np.concatenate([[0.0], np.cumsum(self.deaths / risk_sums)])
        cum_at_row = increments[self.row_slot + 1]
        grad_sorted = -(self.e.astype(float) - w * cum_at_row) / self.n_events
        grad = np.empty_like(grad_sorted)
        grad[self.order] = grad_sorted
        return float(loss), grad


def forward(params: NetworkParams, X, training, dropout, rng=None, bn_stats=None):
    """Run the network; returns (risk scores, cache for backprop).

    During training batchnorm uses batch statistics; at inference the frozen
    ``bn_stats`` list of (mean, var) is used. Dropout masks are drawn only
    when training.
    """
    h = X
    caches = []
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ W + b
        if params.gammas is not None:
            if training:
                mu = z.mean(axis=0)
                var = z.var(axis=0)
            else:
                mu, var = bn_stats[i]
            zhat = (z - mu) / np.sqrt(var + BN_EPS)
            pre_act = params.gammas[i] * zhat + params.betas[i]
        else:
            zhat = None
            var = None
            pre_act = z
        a = np.maximum(pre_act, 0.0)
        if dropout and training:
            mask = (rng.random(a.shape) >= DROPOUT_RATE).astype(a.dtype)
            mask /= 1.0 - DROPOUT_RATE
            a = a * mask
        else:
            mask = None
        caches.append({"h_in": h, "zhat": zhat, "var": var, "pre_act": pre_act, "mask": mask})
        h = a
    scores = (h @ params.w_out + params.b_out).reshape(-1)
    return scores, {"layers": caches, "h_last": h}


def loss_and_gradients(params: NetworkParams, X, cox: CoxRiskLoss, l2,
                       training=True, dropout=False, rng=None, bn_stats=None):
    """Full forward/backward pass: returns (loss, NetworkParams-shaped grads)."""
    scores, cache = forward(params, X, training, dropout, rng=rng, bn_stats=bn_stats)
    loss, dscores = cox.value_and_gradient(scores)
    penalty = 0.5 * l2 * (
        sum(float(np.sum(W.astype(np.float64) ** 2)) for W in params.weights)
        + float(np.sum(params.w_out.astype(np.float64) ** 2))
    )
    loss += penalty

    dscores = dscores.reshape(-1, 1).astype(X.dtype, copy=False)
    g_w_out = cache["h_last"].T @ dscores + l2 * params.w_out
    g_b_out = dscores.sum(axis=0)
    dh = dscores @ params.w_out.T

    g_weights = [None] * len(params.weights)
    g_biases = [None] * len(params.biases)
    g_gammas = [None] * len(params.weights) if params.gammas is not None else None
    g_betas = [None] * len(params.weights) if params.gammas is not None else None

    for i in reversed(range(len(params.weights))):
        layer = cache["layers"][i]
        if layer["mask"] is not None:
            dh = dh * layer["mask"]
        dpre = dh * (layer["pre_act"] > 0)
        if params.gammas is not None:
            zhat = layer["zhat"]
            g_gammas[i] = np.sum(dpre * zhat, axis=0)
            g_betas[i] = np.sum(dpre, axis=0)
            dzhat = dpre * params.gammas[i]
            n = zhat.shape[0]
            inv_std = 1.0 / np.sqrt(layer["var"] + BN_EPS)
            dz = (inv_std / n) * (
                n * dzhat - dzhat.sum(axis=0) - zhat * np.sum(dzhat * zhat, axis=0)
            )
        else:
            dz = dpre
        g_weights[i] = layer["h_in"].T @ dz + l2 * params.weights[i]
        g_biases[i] = dz.sum(axis=0)
        dh = dz @ params.weights[i].T

    grads = NetworkParams(g_weights, g_biases, g_gammas, g_betas, g_w_out, g_b_out)
    return loss, grads


class DeepSurvModel(SurvivalModel):
    model_type = "deepsurv"

    def __init__(self, params, bn_stats, standardizer, feature_names,
                 baseline_times, baseline_cumhaz, time_grid, config, loss_history):
        self.params = params
        self.bn_stats = bn_stats
        self.standardizer = standardizer
        self.feature_names = list(feature_names)
        self.baseline_times = np.asarray(baseline_times, dtype=float)
        self.baseline_cumhaz = np.asarray(baseline_cumhaz, dtype=float)
        self.time_grid = np.asarray(time_grid, dtype=float)
        self.config = config
        self.loss_history = list(loss_history)
        idx = np.searchsorted(self.baseline_times, self.time_grid, side="right") - 1
        grid_cumhaz = np.zeros(self.time_grid.shape)
        inside = idx >= 0
        grid_cumhaz[inside] = self.baseline_cumhaz[idx[inside]]
        self._grid_cumhaz = grid_cumhaz

    def risk_scores(self, X) -> np.ndarray:
        Xs = self.standardizer.transform(self._check_features(X))
        scores, _ = forward(
            self.params, Xs, training=False, dropout=False, bn_stats=self.bn_stats
        )
        return scores

    def predict_values(self, X) -> np.ndarray:
        scores = np.clip(self.risk_scores(X), -700, 700)
        return np.exp(-np.outer(np.exp(scores), self._grid_cumhaz))

    def linear_coefficients(self) -> np.ndarray:
        """Effective raw-space coefficients; only defined for a linear net."""
        if self.params.weights:
            raise UsageError("linear coefficients only exist without hidden layers")
        return (self.params.w_out.reshape(-1)) / self.standardizer.std


def fit_deepsurv(
    dataset: SurvivalDataset,
    config: DeepSurvConfig | None = None,
    checkpoint_hook=None,
    checkpoint_fractions=(0.25, 0.5, 0.75),
) -> DeepSurvModel:
    """Train the risk network by full-batch gradient descent.

    Dropout is active only while training. The Breslow baseline is fitted on
    the trained network's risk scores; batchnorm inference statistics are
    frozen from a final pass over the training set.
    """
    config = config or DeepSurvConfig()
    if len(dataset) == 0:
        raise DataError("empty dataset")
    standardizer = Standardizer.fit(dataset.features)
    # training runs in float32; the finalized model is float64
    Xs64 = standardizer.transform(dataset.features)
    Xs = Xs64.astype(np.float32)
    cox = CoxRiskLoss(dataset.durations, dataset.events)
    rng = np.random.default_rng(config.seed)
    params = NetworkParams.initialize(
        Xs.shape[1], config.layers, config.batchnorm, config.init, rng
    )
    params = _cast_params(params, np.float32)
    optimizer = make_optimizer(config.optimizer, params.flatten(), config.lr)

    checkpoints = {
        max(1, int(round(f * config.epochs))): f for f in checkpoint_fractions
    }
    halted = False
    loss_history = []
    model_stub = None
    for epoch in range(1, config.epochs + 1):
        loss, grads = loss_and_gradients(
            params, Xs, cox, config.l2, training=True, dropout=config.dropout, rng=rng
        )
        if not np.isfinite(loss):
            raise NumericalError(f"non-finite DeepSurv loss at epoch {epoch}")
        flat_grads = grads.flatten()
        if any(not np.all(np.isfinite(g)) for g in flat_grads):
            raise NumericalError(f"NaN gradient at epoch {epoch}")
        loss_history.append(loss)
        optimizer.step(flat_grads)
        if epoch in checkpoints and checkpoint_hook is not None:
            model_stub = _finalize(params, Xs64, dataset, standardizer, config, loss_history)
            if checkpoint_hook(model_stub, checkpoints[epoch]) is False:
                halted = True
                break

    if halted and model_stub is not None:
        return model_stub
    return _finalize(params, Xs64, dataset, standardizer, config, loss_history)


def _cast_params(params: NetworkParams, dtype) -> NetworkParams:
    return NetworkParams(
        [w.astype(dtype) for w in params.weights],
        [b.astype(dtype) for b in params.biases],
        [g.astype(dtype) for g in params.gammas] if params.gammas is not None else None,
        [b.astype(dtype) for b in params.betas] if params.betas is not None else None,
        params.w_out.astype(dtype),
        params.b_out.astype(dtype),
    )


def _finalize(params, Xs64, dataset, standardizer, config, loss_history):
    params = _cast_params(params, np.float64)
    bn_stats = None
    if config.batchnorm:
        bn_stats = []
        h = Xs64
        for i, (W, b) in enumerate(zip(params.weights, params.biases)):
            z = h @ W + b
            mu, var = z.mean(axis=0), z.var(axis=0)
            bn_stats.append((mu, var))
            zhat = (z - mu) / np.sqrt(var + BN_EPS)
            h = np.maximum(params.gammas[i] * zhat + params.betas[i], 0.0)
    scores, _ = forward(params, Xs64, training=False, dropout=False, bn_stats=bn_stats)
    times, cumhaz = breslow_cumulative_hazard(dataset.durations, dataset.events, scores)
    grid = prediction_grid(dataset.durations, dataset.events)
    return DeepSurvModel(
        params, bn_stats, standardizer, dataset.feature_names,
        times, cumhaz, grid, config, loss_history,
    )
