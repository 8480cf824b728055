"""Versioned JSON persistence for fitted models.

The document records the model type, hyper-parameters, learned parameters,
time grid, feature names and standardization constants; loading rejects any
format-version mismatch.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .base import Standardizer
from .cox import CoxModel
from .deepsurv import DeepSurvConfig, DeepSurvModel, NetworkParams
from .errors import DataError
from .forest import CSFConfig, SurvivalForest, _Node
from .mtlr import MTLRModel

FORMAT_VERSION = 1


def _step_encode(values: np.ndarray) -> list:
    """Run-length encode a step function sampled on a shared grid."""
    changes = [[0, float(values[0])]]
    for i in range(1, values.size):
        if values[i] != values[i - 1]:
            changes.append([i, float(values[i])])
    return changes


def _step_decode(changes: list, size: int) -> np.ndarray:
    out = np.empty(size)
    for (start, value), nxt in zip(changes, changes[1:] + [[size, None]]):
        out[start: nxt[0]] = value
    return out


def _encode_tree(node: _Node) -> dict:
    if node.is_leaf:
        return {"leaf": _step_encode(node.leaf_values)}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _encode_tree(node.left),
        "right": _encode_tree(node.right),
    }


def _decode_tree(data: dict, grid_size: int) -> _Node:
    if "leaf" in data:
        return _Node(leaf_values=_step_decode(data["leaf"], grid_size))
    return _Node(
        feature=data["feature"],
        threshold=data["threshold"],
        left=_decode_tree(data["left"], grid_size),
        right=_decode_tree(data["right"], grid_size),
    )


def save_model(model, path) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "model_type": model.model_type,
        "feature_names": model.feature_names,
        "time_grid": np.asarray(model.time_grid).tolist(),
    }
    if isinstance(model, CoxModel):
        doc["hyperparameters"] = {"baseline": model.baseline_kind}
        doc["parameters"] = {
            "beta": model.beta.tolist(),
            "feature_means": model.feature_means.tolist(),
            "baseline_times": model.baseline_times.tolist(),
            "baseline_cumhaz": model.baseline_cumhaz.tolist(),
            "n_iter": model.n_iter,
            "log_likelihood": model.log_likelihood,
            "ridge_used": model.ridge_used,
        }
    elif isinstance(model, MTLRModel):
        doc["hyperparameters"] = {"intervals": int(model.n_intervals)}
        doc["parameters"] = {
            "boundaries": model.boundaries.tolist(),
            "weights": model.weights.tolist(),
            "biases": model.biases.tolist(),
            "standardizer_mean": model.standardizer.mean.tolist(),
            "standardizer_std": model.standardizer.std.tolist(),
        }
    elif isinstance(model, SurvivalForest):
        doc["hyperparameters"] = asdict(model.config)
        doc["parameters"] = {"trees": [_encode_tree(t) for t in model.trees]}
    elif isinstance(model, DeepSurvModel):
        doc["hyperparameters"] = asdict(model.config)
        params = model.params
        doc["parameters"] = {
            "weights": [w.tolist() for w in params.weights],
            "biases": [b.tolist() for b in params.biases],
            "gammas": [g.tolist() for g in params.gammas] if params.gammas else None,
            "betas": [b.tolist() for b in params.betas] if params.betas else None,
            "w_out": params.w_out.tolist(),
            "b_out": params.b_out.tolist(),
            "bn_stats": [[m.tolist(), v.tolist()] for m, v in model.bn_stats]
            if model.bn_stats
            else None,
            "baseline_times": model.baseline_times.tolist(),
            "baseline_cumhaz": model.baseline_cumhaz.tolist(),
            "standardizer_mean": model.standardizer.mean.tolist(),
            "standardizer_std": model.standardizer.std.tolist(),
        }
    else:
        raise DataError(f"cannot serialize model of type {type(model).__name__}")
    Path(path).write_text(json.dumps(doc) + "\n")


def load_model(path):
    doc = json.loads(Path(path).read_text())
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(
            f"model format version {version!r} unsupported (expected {FORMAT_VERSION})"
        )
    kind = doc["model_type"]
    names = doc["feature_names"]
    grid = np.array(doc["time_grid"], dtype=float)
    p = doc["parameters"]
    if kind == "cph":
        return CoxModel(
            np.array(p["beta"]),
            np.array(p["feature_means"]),
            names,
            np.array(p["baseline_times"]),
            np.array(p["baseline_cumhaz"]),
            grid,
            doc["hyperparameters"]["baseline"],
            p["n_iter"],
            p["log_likelihood"],
            p["ridge_used"],
        )
    if kind == "mtlr":
        return MTLRModel(
            np.array(p["boundaries"]),
            np.array(p["weights"]),
            np.array(p["biases"]),
            Standardizer(np.array(p["standardizer_mean"]), np.array(p["standardizer_std"])),
            names,
        )
    if kind == "csf":
        config = CSFConfig(**doc["hyperparameters"])
        trees = [_decode_tree(t, grid.size) for t in p["trees"]]
        return SurvivalForest(trees, grid, names, config)
    if kind == "deepsurv":
        config = DeepSurvConfig(**doc["hyperparameters"])
        params = NetworkParams(
            [np.array(w) for w in p["weights"]],
            [np.array(b) for b in p["biases"]],
            [np.array(g) for g in p["gammas"]] if p["gammas"] else None,
            [np.array(b) for b in p["betas"]] if p["betas"] else None,
            np.array(p["w_out"]),
            np.array(p["b_out"]),
        )
        bn_stats = (
            [(np.array(m), np.array(v)) for m, v in p["bn_stats"]]
            if p["bn_stats"]
            else None
        )
        return DeepSurvModel(
            params,
            bn_stats,
            Standardizer(np.array(p["standardizer_mean"]), np.array(p["standardizer_std"])),
            names,
            np.array(p["baseline_times"]),
            np.array(p["baseline_cumhaz"]),
            grid,
            config,
            [],
        )
    raise DataError(f"unknown model type {kind!r}")
