"""Data splitting, random hyper-parameter search with median pruning, and the
accuracy / prediction-analysis reports."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cox import CoxConfig, fit_cox
from .deepsurv import DeepSurvConfig, fit_deepsurv
from .errors import DataError, NumericalError, UsageError
from .forest import CSFConfig, fit_csf
from .mo_units import SurvivalDataset
from .mtlr import MTLRConfig, fit_mtlr

FAMILIES = ("cph", "mtlr", "csf", "deepsurv")


def split_dataset(dataset: SurvivalDataset, fractions=(0.6, 0.2, 0.2), seed: int = 0):
    """Seeded shuffle then contiguous slicing into (train, validation, test).

    Returns the three datasets plus the per-split event rates.
    """
    fractions = tuple(float(f) for f in fractions)
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise UsageError(f"split fractions must sum to 1, got {fractions}")
    n = len(dataset)
    order = np.random.default_rng(seed).permutation(n)
    cut1 = int(round(fractions[0] * n))
    cut2 = int(round((fractions[0] + fractions[1]) * n))
    parts = (order[:cut1], order[cut1:cut2], order[cut2:])
    if any(p.size == 0 for p in parts):
        raise DataError(f"split of {n} rows left an empty part with fractions {fractions}")
    splits = tuple(dataset.subset(p) for p in parts)
    event_rates = tuple(float(s.events.mean()) for s in splits)
    return splits, event_rates


# hyper-parameter domains; kind is one of categorical | log_uniform |
# uniform | int_grid | int_range
DEFAULT_DOMAINS = {
    "cph": {
        "baseline": ("categorical", ["breslow", "piecewise"]),
    },
    "mtlr": {
        "lr": ("log_uniform", 1e-5, 1e-3),
        "init": ("categorical", ["orthogonal", "glorot_uniform"]),
        "optimizer": ("categorical", ["adam", "adamax", "sgd"]),
    },
    "csf": {
        "num_trees": ("int_grid", list(range(10, 101, 10))),
        "max_depth": ("int_range", 2, 10),
        "min_node_size": ("int_grid", list(range(10, 51, 5))),
    },
    "deepsurv": {
        "init": ("categorical", ["orthogonal", "glorot_uniform"]),
        "optimizer": ("categorical", ["sgd", "adam"]),
        "lr": ("log_uniform", 1e-5, 1e-2),
        "epochs": ("int_range", 50, 500),
        "l2": ("uniform", 0.0, 1e-2),
        "batchnorm": ("categorical", [False, True]),
        "dropout": ("categorical", [False, True]),
    },
}

CONFIG_TYPES = {
    "cph": CoxConfig,
    "mtlr": MTLRConfig,
    "csf": CSFConfig,
    "deepsurv": DeepSurvConfig,
}

ITERATIVE_FAMILIES = ("mtlr", "deepsurv")


@dataclass
class SearchSpace:
    """Per-family hyper-parameter domains plus fixed overrides.

    ``fixed`` entries are merged verbatim into every sampled config (e.g. a
    pinned interval count for MTLR); ``domains`` defaults to the published
    search ranges of the family.
    """

    family: str
    fixed: dict = field(default_factory=dict)
    domains: dict = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise UsageError(f"unknown model family {self.family!r}; expected {FAMILIES}")
        if self.domains is None:
            self.domains = dict(DEFAULT_DOMAINS[self.family])

    def sample(self, rng: np.random.Generator) -> dict:
        config = {}
        for name, domain in self.domains.items():
            kind = domain[0]
            if kind == "categorical":
                config[name] = domain[1][rng.integers(len(domain[1]))]
            elif kind == "log_uniform":
                lo, hi = domain[1], domain[2]
                config[name] = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
            elif kind == "uniform":
                config[name] = float(rng.uniform(domain[1], domain[2]))
            elif kind == "int_grid":
                config[name] = int(domain[1][rng.integers(len(domain[1]))])
            elif kind == "int_range":
                config[name] = int(rng.integers(domain[1], domain[2] + 1))
            else:
                raise UsageError(f"unknown domain kind {kind!r}")
        config.update(self.fixed)
        return config


@dataclass
class Trial:
    """One sampled configuration with its checkpointed validation scores."""

    __test__ = False

    trial_id: int
    config: dict
    checkpoints: list = field(default_factory=list)  # (fraction, rmse)
    final_rmse: float | None = None
    status: str = "running"  # complete | pruned | failed
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "trial_id": self.trial_id,
            "config": self.config,
            "checkpoints": self.checkpoints,
            "final_rmse": self.final_rmse,
            "status": self.status,
            "error": self.error,
        }


@dataclass
class SearchResult:
    best_config: dict
    best_rmse: float
    best_trial_id: int
    trials: list

    def write_jsonl(self, path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for trial in self.trials:
                fh.write(json.dumps(trial.to_dict(), sort_keys=True) + "\n")


def validation_rmse(model, dataset: SurvivalDataset) -> float:
    """RMSE of day predictions on the uncensored rows (the selection metric)."""
    mask = dataset.events
    if not mask.any():
        raise DataError("validation set has no uncensored rows")
    predicted = model.predict_days(dataset.features[mask])
    return float(np.sqrt(np.mean((predicted - dataset.durations[mask]) ** 2)))


def fit_family(family: str, dataset: SurvivalDataset, config: dict,
               seed: int | None = None, checkpoint_hook=None, threads: int = 1):
    """Construct the family's config object and run its fit function."""
    params = dict(config)
    if family == "cph":
        return fit_cox(dataset, CoxConfig(**params))
    if family == "mtlr":
        if seed is not None:
            params.setdefault("seed", seed)
        return fit_mtlr(dataset, MTLRConfig(**params), checkpoint_hook=checkpoint_hook)
    if family == "csf":
        if seed is not None:
            params.setdefault("seed", seed)
        params.setdefault("threads", threads)
        return fit_csf(dataset, CSFConfig(**params))
    if family == "deepsurv":
        if seed is not None:
            params.setdefault("seed", seed)
        return fit_deepsurv(dataset, DeepSurvConfig(**params), checkpoint_hook=checkpoint_hook)
    raise UsageError(f"unknown model family {family!r}")


def run_search(
    space: SearchSpace,
    train: SurvivalDataset,
    validation: SurvivalDataset,
    trials: int = 200,
    seed: int = 0,
    warmup: int = 5,
    threads: int = 1,
) -> SearchResult:
    """Seeded random search with median pruning at epoch checkpoints.

    Configs are sampled uniformly (log-uniformly on log-scaled ranges). At a
    checkpoint a trial is pruned when its validation RMSE exceeds the median
    of the values recorded at that checkpoint, once ``warmup`` trials have
    completed. Single-shot families (cph, csf) are never pruned. Per-trial
    randomness derives from (seed, trial id) only, so reruns replay exactly.
    """
    checkpoint_scores: dict[float, list[float]] = {}
    completed = 0
    log: list[Trial] = []

    for trial_id in range(trials):
        config_rng = np.random.default_rng([seed, trial_id, 0])
        config = space.sample(config_rng)
        fit_seed = int(np.random.default_rng([seed, trial_id, 1]).integers(2**31))
        trial = Trial(trial_id, config)
        log.append(trial)

        def hook(model, fraction, trial=trial):
            rmse = validation_rmse(model, validation)
            trial.checkpoints.append((fraction, rmse))
            scores = checkpoint_scores.setdefault(fraction, [])
            prune = (
                completed >= warmup
                and len(scores) > 0
                and rmse > float(np.median(scores))
            )
            scores.append(rmse)
            if prune:
                trial.status = "pruned"
                trial.final_rmse = rmse
                return False
            return True

        use_hook = hook if space.family in ITERATIVE_FAMILIES else None
        try:
            model = fit_family(
                space.family, train, config, seed=fit_seed,
                checkpoint_hook=use_hook, threads=threads,
            )
        except (DataError, NumericalError, UsageError) as exc:
            trial.status = "failed"
            trial.error = str(exc)
            continue
        if trial.status == "pruned":
            continue
        trial.final_rmse = validation_rmse(model, validation)
        trial.status = "complete"
        completed += 1

    finished = [t for t in log if t.status == "complete"]
    if not finished:
        raise NumericalError("all search trials failed")
    best = min(finished, key=lambda t: (t.final_rmse, t.trial_id))
    return SearchResult(dict(best.config), best.final_rmse, best.trial_id, log)


@dataclass
class MetricsReport:
    rmse: float
    r2: float
    mape: float
    n: int
    subset: str = ""

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "r2": self.r2,
            "mape": self.mape,
            "n": self.n,
            "subset": self.subset,
        }


def evaluate(predicted, actual, subset: str = "") -> MetricsReport:
    """RMSE, determination coefficient and MAPE of day-valued predictions."""
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if predicted.shape != actual.shape or predicted.ndim != 1:
        raise DataError("predicted and actual must be 1-d vectors of equal length")
    n = predicted.size
    if n == 0:
        raise DataError("cannot evaluate empty vectors")
    residuals = actual - predicted
    rmse = float(np.sqrt(np.mean(residuals**2)))
    if n < 2:
        raise DataError("determination coefficient undefined for n < 2")
    denom = float(np.sum((actual - actual.mean()) ** 2))
    r2 = 1.0 - float(np.sum(residuals**2)) / denom if denom > 0 else (
        1.0 if np.allclose(residuals, 0) else -math.inf
    )
    if np.any(actual == 0):
        raise DataError("MAPE undefined: actual values contain zero")
    mape = float(np.mean(np.abs(residuals / actual)) * 100.0)
    return MetricsReport(rmse, r2, mape, n, subset)


PERCENTILE_COLUMNS = (10, 20, 30, 40, 50, 60, 70, 75, 80, 90, 95, 99)


def _descriptive_row(values: np.ndarray) -> dict:
    row = {
        "mean": float(values.mean()),
        "std": float(values.std()),
        "min": float(values.min()),
    }
    for q in PERCENTILE_COLUMNS:
        row[f"{q}%"] = float(np.percentile(values, q))
    row["max"] = float(values.max())
    return row


def prediction_analysis(predicted, actual, events) -> dict:
    """Descriptive comparison of predictions and observed durations.

    Uncensored rows get predicted/actual ratio and absolute-difference
    percentile tables, the Pearson correlation and the early/late shares;
    right-censored rows get the share of predictions beyond the censoring
    time.
    """
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    events = np.asarray(events, dtype=bool)
    if not (predicted.shape == actual.shape == events.shape):
        raise DataError("prediction_analysis requires aligned vectors")

    report: dict = {}
    unc_pred, unc_act = predicted[events], actual[events]
    if unc_pred.size:
        if unc_pred.size < 2:
            raise DataError("Pearson correlation undefined for fewer than 2 rows")
        if np.any(unc_act == 0):
            raise DataError("ratio table undefined: uncensored actual duration of 0")
        ratio = unc_pred / unc_act
        diff = np.abs(unc_pred - unc_act)
        report["uncensored"] = {
            "n": int(unc_pred.size),
            "ratio": _descriptive_row(ratio),
            "abs_difference": _descriptive_row(diff),
            "pearson": float(np.corrcoef(unc_pred, unc_act)[0, 1]),
            "share_predicted_before": float(np.mean(unc_pred < unc_act)),
            "share_predicted_after": float(np.mean(unc_pred > unc_act)),
        }
    censored_pred, censored_act = predicted[~events], actual[~events]
    if censored_pred.size:
        report["right_censored"] = {
            "n": int(censored_pred.size),
            "share_predicted_after": float(np.mean(censored_pred > censored_act)),
            "mean_predicted": float(censored_pred.mean()),
            "mean_actual": float(censored_act.mean()),
        }
    return report
