"""Multi-task logistic regression for survival: per-interval logistic scores
over the m+1 admissible monotone event sequences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import Standardizer, SurvivalModel
from .errors import DataError, NumericalError, UsageError
from .mo_units import SurvivalDataset
from .optim import INITIALIZERS, OPTIMIZERS, init_weights, make_optimizer

MAX_DEFAULT_INTERVALS = 300


@dataclass
class MTLRConfig:
    intervals: int | None = None  # default: min(max duration in days, 300)
    lr: float = 1e-3
    epochs: int = 200
    l2: float = 1e-3
    init: str = "glorot_uniform"
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if self.intervals is not None and self.intervals < 2:
            raise UsageError("intervals must be at least 2")
        if self.lr <= 0:
            raise UsageError("lr must be positive")
        if self.epochs < 0:
            raise UsageError("epochs must be non-negative")
        if self.l2 < 0:
            raise UsageError("l2 must be non-negative")
        if self.init not in INITIALIZERS:
            raise UsageError(f"init must be one of {INITIALIZERS}")
        if self.optimizer not in OPTIMIZERS:
            raise UsageError(f"optimizer must be one of {OPTIMIZERS}")


class MTLRModel(SurvivalModel):
    """Interval boundaries plus one (weight vector, bias) pair per interval."""

    model_type = "mtlr"

    def __init__(self, boundaries, weights, biases, standardizer, feature_names):
        self.boundaries = np.asarray(boundaries, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.biases = np.asarray(biases, dtype=float)
        self.standardizer = standardizer
        self.feature_names = list(feature_names)
        self.time_grid = self.boundaries
        self.final_loss: float | None = None
        self.initial_loss: float | None = None

    @property
    def n_intervals(self) -> int:
        return self.boundaries.size

    def _sequence_scores(self, X) -> np.ndarray:
        """Score of each of the m+1 monotone sequences, shape (n, m+1).

        Sequence j (event inside interval j, j = 0..m) scores the sum of the
        per-interval logits for every interval after the event.
        """
        Xs = self.standardizer.transform(self._check_features(X))
        logits = Xs @ self.weights + self.biases  # (n, m)
        tail_sums = np.cumsum(logits[:, ::-1], axis=1)[:, ::-1]  # (n, m)
        return np.hstack([tail_sums, np.zeros((Xs.shape[0], 1))])

    def sequence_probabilities(self, X) -> np.ndarray:
        scores = self._sequence_scores(X)
        scores -= scores.max(axis=1, keepdims=True)
        expd = np.exp(scores)
        return expd / expd.sum(axis=1, keepdims=True)

    def predict_values(self, X) -> np.ndarray:
        probs = self.sequence_probabilities(X)
        survival = np.cumsum(probs[:, ::-1], axis=1)[:, ::-1]  # tail mass
        return np.clip(survival[:, 1:], 0.0, 1.0)


def default_boundaries(max_duration: float, intervals: int | None) -> np.ndarray:
    if intervals is None:
        intervals = int(min(max(round(max_duration), 2), MAX_DEFAULT_INTERVALS))
    return np.linspace(0.0, float(max_duration), intervals + 1)[1:]


def _admissible_slots(boundaries, durations, events):
    """First admissible sequence index per row.

    Uncensored rows admit exactly the sequence whose interval contains the
    event time; right-censored rows admit the suffix of sequences whose event
    falls after the censoring time.
    """
    m = boundaries.size
    slots = np.where(
        events,
        np.minimum(np.searchsorted(boundaries, durations, side="left"), m),
        np.searchsorted(boundaries, durations, side="right"),
    )
    return slots.astype(np.int64)


def _loss_and_gradients(Xs, slots, events, weights, biases, l2):
    """Mean censored negative log-likelihood and its gradients.

    Works entirely with forward cumulative sums: sequence j scores the tail
    sum of logits after index j, uncensored rows take one sequence and
    censored rows the tail mass of their admissible suffix.
    """
    n, d = Xs.shape
    m = weights.shape[1]
    logits = Xs @ weights
    logits += biases
    fwd = np.cumsum(logits, axis=1)                      # (n, m)
    total = fwd[:, -1]
    scores = np.empty((n, m + 1), dtype=logits.dtype)
    scores[:, 0] = total
    scores[:, 1:] = total[:, None] - fwd
    scores -= scores.max(axis=1, keepdims=True)
    np.exp(scores, out=scores)                           # now exp(score - max)
    expd = scores
    cum_e = np.cumsum(expd, axis=1)                      # (n, m+1)
    z = cum_e[:, -1]

    rows = np.arange(n)
    # admissible mass: single sequence when uncensored, suffix tail otherwise
    tail_at_slot = z - np.where(slots > 0, cum_e[rows, slots - 1], 0.0)
    admissible = np.where(events, expd[rows, slots], tail_at_slot)
    if np.any(admissible <= 0) or not np.all(np.isfinite(admissible)):
        raise NumericalError(
            "admissible-sequence probability underflowed to zero; the loss is "
            "non-finite (learning rate likely too high)"
        )
    loss = float(np.mean(np.log(z) - np.log(admissible)))
    penalty = 0.5 * l2 * float(np.sum(weights.astype(np.float64) ** 2))
    if not np.isfinite(penalty):
        raise NumericalError("weights overflowed; the learning rate is too high")
    loss += penalty

    # dloss/dlogit_k = sum_{j<k} (P - Q)_j: cumulative softmax minus
    # cumulative target, needing only the first m columns
    cum_p = cum_e[:, :m] / z[:, None]
    cols = np.arange(m)
    past_slot = cols[None, :] >= slots[:, None]
    cum_q_unc = past_slot.astype(logits.dtype)
    with np.errstate(invalid="ignore", divide="ignore"):
        cum_q_cens = np.where(
            past_slot, 1.0 - (z[:, None] - cum_e[:, :m]) / tail_at_slot[:, None], 0.0
        )
    cum_q = np.where(events[:, None], cum_q_unc, cum_q_cens)
    dlogits = (cum_p - cum_q) / n
    grad_w = Xs.T @ dlogits
    grad_w += l2 * weights
    grad_b = dlogits.sum(axis=0)
    return loss, grad_w, grad_b


def fit_mtlr(
    dataset: SurvivalDataset,
    config: MTLRConfig | None = None,
    checkpoint_hook=None,
    checkpoint_fractions=(0.25, 0.5, 0.75),
) -> MTLRModel:
    """Maximize the censored MTLR log-likelihood with L2 regularization.

    ``checkpoint_hook(model, fraction)`` is invoked at the given epoch
    fractions; returning False halts training early (used by the pruner).
    """
    config = config or MTLRConfig()
    if len(dataset) == 0:
        raise DataError("empty dataset")
    boundaries = default_boundaries(dataset.durations.max(), config.intervals)
    standardizer = Standardizer.fit(dataset.features)
    # training runs in float32 for speed; the fitted model stays float64
    Xs = standardizer.transform(dataset.features).astype(np.float32)
    slots = _admissible_slots(boundaries, dataset.durations, dataset.events)
    events = np.asarray(dataset.events, dtype=bool)

    rng = np.random.default_rng(config.seed)
    weights = init_weights(config.init, (Xs.shape[1], boundaries.size), rng).astype(np.float32)
    if config.epochs == 0:
        weights = np.zeros_like(weights)
    biases = np.zeros(boundaries.size, dtype=np.float32)

    model = MTLRModel(boundaries, weights, biases, standardizer, dataset.feature_names)
    optimizer = make_optimizer(config.optimizer, [weights, biases], config.lr)

    checkpoints = {
        max(1, int(round(f * config.epochs))): f for f in checkpoint_fractions
    } if config.epochs else {}

    def publish():
        model.weights = weights.astype(np.float64)
        model.biases = biases.astype(np.float64)

    for epoch in range(1, config.epochs + 1):
        loss, grad_w, grad_b = _loss_and_gradients(
            Xs, slots, events, weights, biases, config.l2
        )
        if not np.isfinite(loss):
            raise NumericalError(
                f"non-finite MTLR loss at epoch {epoch}; the learning rate "
                f"{config.lr} is likely too high"
            )
        if model.initial_loss is None:
            model.initial_loss = loss
        optimizer.step([grad_w.astype(np.float32), grad_b.astype(np.float32)])
        if epoch in checkpoints and checkpoint_hook is not None:
            publish()
            if checkpoint_hook(model, checkpoints[epoch]) is False:
                return model

    publish()
    final, _, _ = _loss_and_gradients(Xs, slots, events, weights, biases, config.l2)
    model.final_loss = float(final)
    if model.initial_loss is None:
        model.initial_loss = model.final_loss
    return model


def enumerate_sequence_probabilities(model: MTLRModel, x) -> np.ndarray:
    """Brute-force oracle: score every monotone sequence explicitly.

    Builds each of the m+1 admissible 0->1 indicator sequences, scores it as
    the dot product with the per-interval logits, and normalizes directly.
    Independent of the cumulative-sum shortcut used by the model.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    Xs = model.standardizer.transform(x)
    logits = (Xs @ model.weights + model.biases)[0]
    m = logits.size
    scores = []
    for j in range(m + 1):
        indicator = np.zeros(m)
        indicator[j:] = 1.0  # event happened in interval j: later flags are 1
        scores.append(float(indicator @ logits))
    scores = np.array(scores)
    expd = np.exp(scores - scores.max())
    return expd / expd.sum()
