"""Kernel SHAP attributions for day-valued predictions.

Coalitions are weighted by the Shapley kernel and the local linear model is
solved by weighted least squares with the efficiency constraint enforced
exactly. For d <= 12 with a sufficient sample budget every coalition is
enumerated, which makes the attributions exact Shapley values.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

EXACT_MAX_DIM = 12


@dataclass
class BackgroundSet:
    """k-means centroids of the training covariates with cluster weights."""

    centroids: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.centroids.shape[0] != self.weights.size:
            raise DataError("one weight per centroid required")


def _kmeans_once(X, k, rng, max_iter=100, tol=1e-10):
    n = X.shape[0]
    # k-means++ seeding
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = np.sum((X - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            centers[j] = X[rng.integers(n)]
            continue
        probs = closest / total
        centers[j] = X[rng.choice(n, p=probs)]
        closest = np.minimum(closest, np.sum((X - centers[j]) ** 2, axis=1))

    assignment = None
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assignment = d2.argmin(axis=1)
        for j in range(k):
            mask = new_assignment == j
            if mask.any():
                centers[j] = X[mask].mean(axis=0)
            else:  # re-seed an empty cluster at the farthest point
                farthest = int(d2.min(axis=1).argmax())
                centers[j] = X[farthest]
                new_assignment[farthest] = j
        if assignment is not None and np.array_equal(assignment, new_assignment):
            break
        assignment = new_assignment
    inertia = float(((X - centers[assignment]) ** 2).sum())
    counts = np.bincount(assignment, minlength=k).astype(float)
    return centers, counts, inertia


def kmeans_background(covariates, k: int = 100, seed: int = 0,
                      restarts: int = 10) -> BackgroundSet:
    """Representative background sample: k-means centroids weighted by
    cluster size, best inertia over the given restarts."""
    X = np.asarray(covariates, dtype=float)
    if X.ndim != 2:
        raise DataError("covariates must be a 2-d matrix")
    if k > X.shape[0]:
        raise DataError(f"k={k} exceeds available rows {X.shape[0]}")
    if k == X.shape[0]:
        return BackgroundSet(X.copy(), np.ones(X.shape[0]))
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        centers, counts, inertia = _kmeans_once(X, k, rng)
        if best is None or inertia < best[2]:
            best = (centers, counts, inertia)
    return BackgroundSet(best[0], best[1])


@dataclass
class Explanation:
    """Additive attribution of one prediction in days."""

    base_value: float
    phi: np.ndarray
    prediction: float
    exact: bool
    feature_names: list[str] | None = None

    def efficiency_gap(self) -> float:
        return abs(self.base_value + float(self.phi.sum()) - self.prediction)


def _shapley_kernel_weight(d: int, size: int) -> float:
    return (d - 1) / (math.comb(d, size) * size * (d - size))


def _coalitions(d: int, nsamples: int, rng: np.random.Generator):
    """Masks (without the empty/full coalition) and their kernel weights.

    Sizes are enumerated completely while the budget allows, mirroring the
    kernel weight mass per size; leftover budget samples distinct masks from
    the remaining sizes with kernel-proportional importance weights.
    """
    sizes = np.arange(1, d)
    size_weight = np.array([(d - 1) / (s * (d - s)) for s in sizes], dtype=float)
    size_weight /= size_weight.sum()
    counts = np.array([math.comb(d, int(s)) for s in sizes], dtype=float)

    masks: list[np.ndarray] = []
    weights: list[float] = []
    remaining_budget = nsamples
    remaining_weight = 1.0
    enumerated = np.zeros(sizes.size, dtype=bool)

    # pair small sizes with their complements in enumeration order
    order = np.argsort(sizes.astype(float).clip(max=d - sizes))  # 1, d-1, 2, d-2, ...
    order = sorted(range(sizes.size), key=lambda i: min(sizes[i], d - sizes[i]))
    for idx in order:
        s = int(sizes[idx])
        need = counts[idx]
        expected_share = remaining_budget * size_weight[idx] / max(remaining_weight, 1e-12)
        if expected_share >= need and remaining_budget >= need:
            per_mask = size_weight[idx] / counts[idx]
            for combo in _all_masks(d, s):
                masks.append(combo)
                weights.append(per_mask)
            enumerated[idx] = True
            remaining_budget -= int(need)
            remaining_weight -= size_weight[idx]
        if remaining_budget <= 0:
            break

    leftover = ~enumerated
    if remaining_budget > 0 and leftover.any() and remaining_weight > 1e-12:
        probs = size_weight[leftover] / size_weight[leftover].sum()
        leftover_sizes = sizes[leftover]
        seen: dict[bytes, int] = {}
        sampled_masks: list[np.ndarray] = []
        for _ in range(int(remaining_budget)):
            s = int(leftover_sizes[rng.choice(leftover_sizes.size, p=probs)])
            mask = np.zeros(d, dtype=bool)
            mask[rng.choice(d, size=s, replace=False)] = True
            key = mask.tobytes()
            if key in seen:
                seen[key] += 1
            else:
                seen[key] = 1
                sampled_masks.append(mask)
        total_draws = sum(seen.values())
        for mask in sampled_masks:
            frequency = seen[mask.tobytes()] / total_draws
            masks.append(mask)
            weights.append(remaining_weight * frequency)

    return np.array(masks, dtype=bool), np.array(weights, dtype=float)


def _all_masks(d: int, size: int):
    from itertools import combinations

    for combo in combinations(range(d), size):
        mask = np.zeros(d, dtype=bool)
        mask[list(combo)] = True
        yield mask


def kernel_shap(
    predict_fn,
    instance,
    background: BackgroundSet,
    nsamples: int | None = None,
    seed: int = 0,
    feature_names: list[str] | None = None,
) -> Explanation:
    """Shapley-kernel weighted local linear attribution of one prediction.

    ``predict_fn`` maps a feature matrix to a vector of day predictions.
    Masked features take the background values, weighted by cluster size.
    When d <= 12 and the budget covers 2^d coalitions they are enumerated
    exhaustively and the result is exact.
    """
    x = np.asarray(instance, dtype=float).reshape(-1)
    d = x.size
    if background.centroids.shape[1] != d:
        raise DataError("background dimension does not match the instance")
    if nsamples is None:
        nsamples = 2**d if d <= EXACT_MAX_DIM else 2 * d + 2048
    if nsamples < d + 2:
        raise DataError(f"nsamples must be at least d+2 = {d + 2}")

    rng = np.random.default_rng(seed)
    exact = d <= EXACT_MAX_DIM and nsamples >= 2**d
    if exact:
        Z = np.array(list(_all_masks_all_sizes(d)), dtype=bool)
        kernel_w = np.array(
            [_shapley_kernel_weight(d, int(z.sum())) for z in Z], dtype=float
        )
    else:
        Z, kernel_w = _coalitions(d, nsamples - 2, rng)

    bg = background.centroids
    bg_w = background.weights / background.weights.sum()
    base_value = float(bg_w @ predict_fn(bg))
    fx = float(np.asarray(predict_fn(x.reshape(1, -1))).reshape(-1)[0])

    # masked matrix: coalition members keep x, the rest take background values
    n_z, n_bg = Z.shape[0], bg.shape[0]
    tiled = np.where(Z[:, None, :], x[None, None, :], bg[None, :, :])
    predictions = np.asarray(predict_fn(tiled.reshape(-1, d)), dtype=float)
    v = predictions.reshape(n_z, n_bg) @ bg_w

    phi = _solve_weighted(Z, kernel_w, v, base_value, fx)
    return Explanation(base_value, phi, fx, exact, feature_names)


def _all_masks_all_sizes(d: int):
    for s in range(1, d):
        yield from _all_masks(d, s)


def _solve_weighted(Z, kernel_w, v, base_value, fx):
    """Weighted least squares with the efficiency constraint eliminated
    exactly through the last feature."""
    d = Z.shape[1]
    ey = v - base_value
    total = fx - base_value
    z_last = Z[:, -1].astype(float)
    ey_adj = ey - z_last * total
    Zt = Z[:, :-1].astype(float) - z_last[:, None]

    W = kernel_w
    A = Zt.T @ (Zt * W[:, None])
    b = Zt.T @ (W * ey_adj)
    try:
        phi_rest = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        warnings.warn("singular coalition system; using ridge-stabilized solve")
        scale = max(float(np.trace(A)) / (d - 1), 1.0)
        phi_rest = np.linalg.solve(A + 1e-8 * scale * np.eye(d - 1), b)
    phi = np.empty(d)
    phi[:-1] = phi_rest
    phi[-1] = total - phi_rest.sum()
    return phi


def rank_features(explanations: list[Explanation]) -> list[tuple[str, float]]:
    """Features ordered by descending mean absolute attribution.

    Ties break by feature index, keeping the ordering stable.
    """
    if not explanations:
        raise DataError("rank_features needs at least one explanation")
    magnitudes = np.mean(np.abs(np.stack([e.phi for e in explanations])), axis=0)
    names = explanations[0].feature_names or [f"f{i}" for i in range(magnitudes.size)]
    order = sorted(range(magnitudes.size), key=lambda i: (-magnitudes[i], i))
    return [(names[i], float(magnitudes[i])) for i in order]


def explanations_to_csv(explanations: list[Explanation], path, instance_ids=None) -> None:
    if not explanations:
        raise DataError("nothing to write")
    names = explanations[0].feature_names or [
        f"f{i}" for i in range(explanations[0].phi.size)
    ]
    if instance_ids is None:
        instance_ids = [str(i) for i in range(len(explanations))]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["instance_id", "base_value", "prediction", *names])
        for iid, e in zip(instance_ids, explanations):
            writer.writerow(
                [iid, repr(e.base_value), repr(e.prediction), *(repr(float(p)) for p in e.phi)]
            )
