"""Survival forest with log-rank splitting and Kaplan-Meier leaves.

Trees grow on bootstrap samples; each split maximizes the two-sample log-rank
statistic over candidate thresholds sampled per feature; leaves store the
Kaplan-Meier curve of their rows, and the ensemble prediction is the
pointwise mean of the per-tree leaf curves.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .base import SurvivalModel, prediction_grid
from .curves import kaplan_meier
from .errors import DataError, UsageError
from .mo_units import SurvivalDataset

NUM_TREES_GRID = tuple(range(10, 101, 10))
MAX_DEPTH_RANGE = (2, 10)
MIN_NODE_GRID = tuple(range(10, 51, 5))


@dataclass
class CSFConfig:
    num_trees: int = 50
    max_depth: int = 6
    min_node_size: int = 15
    n_thresholds: int = 8
    bootstrap: bool = True
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.num_trees < 1 or self.max_depth < 1 or self.min_node_size < 1:
            raise UsageError("num_trees, max_depth and min_node_size must be positive")
        if self.n_thresholds < 1:
            raise UsageError("n_thresholds must be positive")


@dataclass
class _Node:
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None
    leaf_values: np.ndarray | None = None  # survival on the ensemble grid

    @property
    def is_leaf(self) -> bool:
        return self.leaf_values is not None


def _logrank_statistics(t, e, risk_start, deaths, n_at_risk, membership):
    """Two-sample log-rank statistic for each row of ``membership``.

    ``membership`` is (K, n) boolean over rows sorted by ascending duration;
    each row defines the left group of one candidate split.
    """
    starts = risk_start
    boundaries = np.searchsorted(t, t[risk_start], side="right")

    cum_left = np.concatenate(
        [np.zeros((membership.shape[0], 1)), np.cumsum(membership, axis=1)], axis=1
    )
    cum_left_deaths = np.concatenate(
        [np.zeros((membership.shape[0], 1)), np.cumsum(membership & e, axis=1)], axis=1
    )
    total_left = cum_left[:, -1][:, None]
    n_left = total_left - cum_left[:, starts]
    d_left = cum_left_deaths[:, boundaries] - cum_left_deaths[:, starts]

    frac = n_left / n_at_risk
    num = np.sum(d_left - deaths * frac, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = deaths * frac * (1 - frac) * (n_at_risk - deaths) / (n_at_risk - 1)
    terms = np.where(n_at_risk > 1, terms, 0.0)
    var = terms.sum(axis=1)
    stats = np.zeros(num.shape)
    positive = var > 0
    stats[positive] = np.abs(num[positive]) / np.sqrt(var[positive])
    return stats


def _best_split(t, e, X, min_node_size, n_thresholds, rng):
    """(statistic, feature, threshold) of the best admissible split, or None."""
    n = t.size
    event_times, first = np.unique(t[e], return_index=True)
    if event_times.size == 0:
        return None
    risk_start = np.searchsorted(t, event_times, side="left")
    deaths = np.zeros(event_times.size)
    np.add.at(deaths, np.searchsorted(event_times, t[e]), 1.0)
    n_at_risk = float(n) - risk_start

    best = None
    for feature in range(X.shape[1]):
        col = X[:, feature]
        values = np.unique(col)
        if values.size < 2:
            continue
        candidates = values[:-1]  # x <= threshold goes left
        if candidates.size > n_thresholds:
            candidates = rng.choice(candidates, size=n_thresholds, replace=False)
        membership = col[None, :] <= candidates[:, None]
        sizes = membership.sum(axis=1)
        admissible = (sizes >= min_node_size) & (n - sizes >= min_node_size)
        if not admissible.any():
            continue
        stats = _logrank_statistics(t, e, risk_start, deaths, n_at_risk, membership)
        stats[~admissible] = -np.inf
        k = int(np.argmax(stats))
        if stats[k] > 0 and (best is None or stats[k] > best[0]):
            best = (float(stats[k]), feature, float(candidates[k]))
    return best


def _grow_tree(t, e, X, grid, config, rng):
    order = np.argsort(t, kind="stable")
    t, e, X = t[order], e[order], X[order]

    def leaf(node_t, node_e):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            curve = kaplan_meier(node_t, node_e) if node_t.size else None
        if curve is None:
            return _Node(leaf_values=np.ones(grid.size))
        idx = np.searchsorted(curve.grid, grid, side="right") - 1
        values = np.where(idx >= 0, curve.values[np.clip(idx, 0, None)], 1.0)
        return _Node(leaf_values=values)

    def build(indices, depth):
        node_t, node_e, node_X = t[indices], e[indices], X[indices]
        if depth >= config.max_depth or indices.size < 2 * config.min_node_size:
            return leaf(node_t, node_e)
        split = _best_split(
            node_t, node_e, node_X, config.min_node_size, config.n_thresholds, rng
        )
        if split is None:
            return leaf(node_t, node_e)
        _, feature, threshold = split
        mask = node_X[:, feature] <= threshold
        return _Node(
            feature=feature,
            threshold=threshold,
            left=build(indices[mask], depth + 1),
            right=build(indices[~mask], depth + 1),
        )

    return build(np.arange(t.size), 0)


class SurvivalForest(SurvivalModel):
    model_type = "csf"

    def __init__(self, trees, time_grid, feature_names, config):
        self.trees = trees
        self.time_grid = np.asarray(time_grid, dtype=float)
        self.feature_names = list(feature_names)
        self.config = config

    def _tree_values(self, tree, X):
        out = np.empty((X.shape[0], self.time_grid.size))
        stack = [(tree, np.arange(X.shape[0]))]
        while stack:
            node, idx = stack.pop()
            if idx.size == 0:
                continue
            if node.is_leaf:
                out[idx] = node.leaf_values
                continue
            mask = X[idx, node.feature] <= node.threshold
            stack.append((node.left, idx[mask]))
            stack.append((node.right, idx[~mask]))
        return out

    def predict_values(self, X) -> np.ndarray:
        X = self._check_features(X)
        total = np.zeros((X.shape[0], self.time_grid.size))
        for tree in self.trees:
            total += self._tree_values(tree, X)
        return total / len(self.trees)

    def tree_values(self, X) -> list[np.ndarray]:
        """Per-tree survival matrices (for ensemble-average verification)."""
        X = self._check_features(X)
        return [self._tree_values(tree, X) for tree in self.trees]


def fit_csf(dataset: SurvivalDataset, config: CSFConfig | None = None) -> SurvivalForest:
    """Grow the forest; trees are seeded per index so any thread count gives
    identical output."""
    config = config or CSFConfig()
    n = len(dataset)
    if n == 0:
        raise DataError("empty dataset")
    if n < 2 * config.min_node_size:
        warnings.warn(
            f"dataset of {n} rows cannot split under min_node_size="
            f"{config.min_node_size}; trees degenerate to single leaves"
        )
    if np.unique(dataset.durations).size == 1:
        warnings.warn("all durations identical; trees degenerate to single leaves")

    grid = prediction_grid(dataset.durations, dataset.events)
    t = dataset.durations
    e = dataset.events
    X = dataset.features

    def grow(tree_idx):
        rng = np.random.default_rng([config.seed, tree_idx])
        if config.bootstrap:
            rows = rng.integers(0, n, size=n)
        else:
            rows = np.arange(n)
        return _grow_tree(t[rows], e[rows], X[rows], grid, config, rng)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            trees = list(pool.map(grow, range(config.num_trees)))
    else:
        trees = [grow(i) for i in range(config.num_trees)]
    return SurvivalForest(trees, grid, dataset.feature_names, config)
