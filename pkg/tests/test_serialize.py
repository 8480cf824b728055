import json

import numpy as np
import pytest

from conftest import two_group_exponential
from fleetsurv.cox import CoxConfig, fit_cox
from fleetsurv.deepsurv import DeepSurvConfig, fit_deepsurv
from fleetsurv.errors import DataError
from fleetsurv.forest import CSFConfig, fit_csf
from fleetsurv.mtlr import MTLRConfig, fit_mtlr
from fleetsurv.serialize import load_model, save_model


@pytest.fixture(scope="module")
def dataset():
    return two_group_exponential(n=150, seed=1, censor_horizon=150)


@pytest.mark.parametrize("family", ["cph", "mtlr", "csf", "deepsurv"])
def test_roundtrip_predictions_identical(tmp_path, dataset, family):
    if family == "cph":
        model = fit_cox(dataset, CoxConfig(baseline="piecewise"))
    elif family == "mtlr":
        model = fit_mtlr(dataset, MTLRConfig(intervals=12, epochs=40, seed=0))
    elif family == "csf":
        model = fit_csf(dataset, CSFConfig(num_trees=5, max_depth=3, min_node_size=10, seed=0))
    else:
        model = fit_deepsurv(
            dataset, DeepSurvConfig(layers=(6,), epochs=50, batchnorm=True, seed=0)
        )
    path = tmp_path / f"{family}.json"
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.model_type == family
    assert loaded.feature_names == model.feature_names
    X = dataset.features[:20]
    assert np.allclose(loaded.predict_values(X), model.predict_values(X), atol=1e-12)
    assert np.allclose(loaded.predict_days(X), model.predict_days(X), atol=1e-12)


def test_version_mismatch_rejected(tmp_path, dataset):
    model = fit_cox(dataset)
    path = tmp_path / "model.json"
    save_model(model, path)
    doc = json.loads(path.read_text())
    doc["format_version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(DataError, match="format version"):
        load_model(path)
