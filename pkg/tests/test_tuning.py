import json

import numpy as np
import pytest

from conftest import make_dataset, two_group_exponential
from fleetsurv.errors import DataError, NumericalError, UsageError
from fleetsurv.tuning import (
    SearchSpace,
    evaluate,
    prediction_analysis,
    run_search,
    split_dataset,
    validation_rmse,
)


@pytest.fixture
def dataset():
    return two_group_exponential(n=120, seed=0, censor_horizon=200)


def test_split_sizes(dataset):
    subset = dataset.subset(np.arange(10))
    (train, val, test), rates = split_dataset(subset, seed=1)
    assert (len(train), len(val), len(test)) == (6, 2, 2)
    assert len(rates) == 3


def test_split_deterministic(dataset):
    (a1, a2, a3), _ = split_dataset(dataset, seed=7)
    (b1, b2, b3), _ = split_dataset(dataset, seed=7)
    for a, b in zip((a1, a2, a3), (b1, b2, b3)):
        assert np.array_equal(a.durations, b.durations)
        assert np.array_equal(a.features, b.features)


def test_split_partitions(dataset):
    (train, val, test), _ = split_dataset(dataset, seed=3)
    ids = sorted(train.unit_ids + val.unit_ids + test.unit_ids)
    assert ids == sorted(dataset.unit_ids)
    assert len(set(train.unit_ids) & set(val.unit_ids)) == 0
    assert len(set(val.unit_ids) & set(test.unit_ids)) == 0


def test_split_bad_fractions(dataset):
    with pytest.raises(UsageError):
        split_dataset(dataset, fractions=(0.5, 0.2, 0.2))
    with pytest.raises(DataError):
        split_dataset(dataset.subset(np.arange(2)), fractions=(0.5, 0.25, 0.25))


def test_search_single_trial(dataset):
    (train, val, _), _ = split_dataset(dataset, seed=0)
    result = run_search(SearchSpace("cph"), train, val, trials=1, seed=5)
    assert result.best_trial_id == 0
    assert result.trials[0].status == "complete"
    assert all(t.status != "pruned" for t in result.trials)


def test_search_replays_configs(dataset):
    (train, val, _), _ = split_dataset(dataset, seed=0)
    space = SearchSpace("deepsurv", fixed={"epochs": 50, "layers": (4,)})
    a = run_search(space, train, val, trials=4, seed=9)
    b = run_search(space, train, val, trials=4, seed=9)
    assert [t.config for t in a.trials] == [t.config for t in b.trials]
    assert a.best_config == b.best_config
    assert a.best_rmse == b.best_rmse


def test_search_prunes_and_never_returns_pruned(dataset):
    (train, val, _), _ = split_dataset(dataset, seed=0)
    space = SearchSpace("mtlr", fixed={"intervals": 8, "epochs": 40})
    result = run_search(space, train, val, trials=10, seed=2, warmup=2)
    statuses = {t.status for t in result.trials}
    assert statuses <= {"complete", "pruned", "failed"}
    best = result.trials[result.best_trial_id]
    assert best.status == "complete"
    pruned = [t for t in result.trials if t.status == "pruned"]
    for t in pruned:
        assert t.checkpoints  # carries the checkpoint it was halted at


def test_search_all_failed():
    bad = make_dataset([1, 2, 3, 4], [1, 1, 1, 1], np.ones((4, 1)))  # zero variance
    with pytest.raises(NumericalError, match="all search trials failed"):
        run_search(SearchSpace("cph"), bad, bad, trials=2, seed=0)


def test_search_jsonl_log(tmp_path, dataset):
    (train, val, _), _ = split_dataset(dataset, seed=0)
    result = run_search(SearchSpace("cph"), train, val, trials=3, seed=1)
    path = tmp_path / "trials.jsonl"
    result.write_jsonl(path)
    lines = path.read_text().strip().split("\n")
    assert len(lines) == 3
    assert json.loads(lines[0])["trial_id"] == 0


def test_validation_rmse_uses_uncensored_only(dataset):
    class Constant:
        def predict_days(self, X, rule="restricted_mean"):
            return np.full(X.shape[0], 10.0)

    rmse = validation_rmse(Constant(), dataset)
    mask = dataset.events
    expected = np.sqrt(np.mean((10.0 - dataset.durations[mask]) ** 2))
    assert rmse == pytest.approx(expected)


def test_evaluate_identity():
    report = evaluate([10.0, 20.0, 30.0], [10.0, 20.0, 30.0])
    assert report.rmse == 0.0
    assert report.mape == 0.0
    assert report.r2 == 1.0


def test_evaluate_mape_arithmetic():
    report = evaluate([110.0, 180.0], [100.0, 200.0])
    assert report.mape == pytest.approx(10.0)


def test_evaluate_mean_predictor_r2_zero():
    y = np.array([5.0, 7.0, 9.0, 12.0])
    report = evaluate(np.full(4, y.mean()), y)
    assert report.r2 == pytest.approx(0.0, abs=1e-12)


def test_evaluate_errors():
    with pytest.raises(DataError):
        evaluate([1.0], [1.0, 2.0])
    with pytest.raises(DataError, match="zero"):
        evaluate([1.0, 2.0], [0.0, 2.0])
    with pytest.raises(DataError, match="n < 2"):
        evaluate([1.0], [2.0])


def test_evaluate_permutation_invariant():
    rng = np.random.default_rng(0)
    y = rng.uniform(10, 100, 50)
    yhat = y + rng.normal(0, 5, 50)
    base = evaluate(yhat, y)
    perm = rng.permutation(50)
    shuffled = evaluate(yhat[perm], y[perm])
    assert shuffled.rmse == pytest.approx(base.rmse, abs=1e-12)
    assert shuffled.r2 == pytest.approx(base.r2, abs=1e-12)
    assert shuffled.mape == pytest.approx(base.mape, abs=1e-12)


def test_prediction_analysis_identity():
    report = prediction_analysis([10.0, 20.0], [10.0, 20.0], [True, True])
    unc = report["uncensored"]
    assert unc["ratio"]["mean"] == pytest.approx(1.0)
    assert unc["pearson"] == pytest.approx(1.0)
    assert unc["share_predicted_after"] == 0.0
    assert unc["share_predicted_before"] == 0.0


def test_prediction_analysis_doubling():
    actual = np.array([10.0, 20.0, 40.0])
    report = prediction_analysis(2 * actual, actual, [True, True, True])
    assert report["uncensored"]["ratio"]["mean"] == pytest.approx(2.0)
    assert report["uncensored"]["pearson"] == pytest.approx(1.0)
    assert report["uncensored"]["share_predicted_after"] == 1.0


def test_prediction_analysis_ratio_scale_invariance():
    rng = np.random.default_rng(4)
    actual = rng.uniform(10, 100, 30)
    predicted = actual * rng.uniform(0.8, 1.2, 30)
    events = np.ones(30, dtype=bool)
    base = prediction_analysis(predicted, actual, events)["uncensored"]["ratio"]
    scaled = prediction_analysis(3.0 * predicted, 3.0 * actual, events)["uncensored"]["ratio"]
    for key, value in base.items():
        assert scaled[key] == pytest.approx(value, abs=1e-12)


def test_prediction_analysis_censored_share():
    predicted = np.array([15.0, 5.0, 30.0])
    actual = np.array([10.0, 10.0, 10.0])
    events = np.array([False, False, False])
    report = prediction_analysis(predicted, actual, events)
    assert report["right_censored"]["share_predicted_after"] == pytest.approx(2 / 3)
    assert "uncensored" not in report


def test_space_domain_validation():
    with pytest.raises(UsageError):
        SearchSpace("xgboost")
    space = SearchSpace("csf")
    rng = np.random.default_rng(0)
    for _ in range(50):
        config = space.sample(rng)
        assert config["num_trees"] in range(10, 101, 10)
        assert 2 <= config["max_depth"] <= 10
        assert config["min_node_size"] in range(10, 51, 5)
