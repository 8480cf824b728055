import numpy as np
import pytest

from conftest import make_dataset, two_group_exponential
from fleetsurv.base import Standardizer
from fleetsurv.cox import fit_cox
from fleetsurv.deepsurv import (
    CoxRiskLoss,
    DeepSurvConfig,
    DeepSurvModel,
    NetworkParams,
    fit_deepsurv,
    loss_and_gradients,
)
from fleetsurv.errors import UsageError


def finite_difference_check(params, Xs, cox, l2, step=1e-5):
    """Max relative error between analytic and central-difference gradients."""
    _, grads = loss_and_gradients(params, Xs, cox, l2, training=True, dropout=False)
    worst = 0.0
    for p_arr, g_arr in zip(params.flatten(), grads.flatten()):
        for multi_idx in np.ndindex(p_arr.shape):
            original = p_arr[multi_idx]
            p_arr[multi_idx] = original + step
            up, _ = loss_and_gradients(params, Xs, cox, l2, training=True, dropout=False)
            p_arr[multi_idx] = original - step
            down, _ = loss_and_gradients(params, Xs, cox, l2, training=True, dropout=False)
            p_arr[multi_idx] = original
            numeric = (up - down) / (2 * step)
            analytic = g_arr[multi_idx]
            # the 1e-6 floor keeps exactly-flat directions (e.g. the output
            # bias, which shifts all risk scores equally) from amplifying
            # finite-difference rounding noise into spurious error
            denom = max(abs(numeric), abs(analytic), 1e-6)
            worst = max(worst, abs(numeric - analytic) / denom)
    return worst


@pytest.fixture
def grad_check_inputs():
    rng = np.random.default_rng(42)
    n, d = 20, 3
    Xs = rng.normal(size=(n, d))
    durations = np.ceil(rng.exponential(30, size=n)) + 1
    events = rng.random(n) < 0.7
    events[:2] = True
    return Xs, CoxRiskLoss(durations, events)


def test_gradient_check_plain(grad_check_inputs):
    # generic parameter point: no pre-activation sits on a ReLU kink
    Xs, cox = grad_check_inputs
    params = NetworkParams.initialize(3, (8, 4), False, "glorot_uniform", np.random.default_rng(7))
    assert finite_difference_check(params, Xs, cox, l2=1e-3) <= 1e-4


def test_gradient_check_batchnorm(grad_check_inputs):
    Xs, cox = grad_check_inputs
    params = NetworkParams.initialize(3, (6, 5), True, "orthogonal", np.random.default_rng(7))
    assert finite_difference_check(params, Xs, cox, l2=0.0) <= 1e-4


def test_linear_network_matches_cox():
    dataset = two_group_exponential(n=2000, hazard_ratio=2.0, seed=12)
    cox_beta = fit_cox(dataset).beta[0]
    config = DeepSurvConfig(layers=(), lr=1e-2, epochs=500, optimizer="adam", seed=0)
    model = fit_deepsurv(dataset, config)
    assert model.linear_coefficients()[0] == pytest.approx(cox_beta, abs=0.05)


def test_zero_weights_predicts_baseline():
    dataset = two_group_exponential(n=300, seed=5, censor_horizon=100)
    model = fit_deepsurv(dataset, DeepSurvConfig(layers=(4,), epochs=50, seed=0))
    for W in model.params.weights:
        W[:] = 0.0
    model.params.w_out[:] = 0.0
    model.params.b_out[:] = 0.0
    model.params.biases = [np.zeros_like(b) for b in model.params.biases]
    baseline = np.exp(-model._grid_cumhaz)
    for x in ([0.0], [1.0], [5.0]):
        assert np.allclose(model.predict_values(np.array(x))[0], baseline)


def test_training_loss_decreases_windowed():
    dataset = two_group_exponential(n=500, seed=7)
    model = fit_deepsurv(dataset, DeepSurvConfig(layers=(16,), lr=5e-3, epochs=100, seed=3))
    losses = np.array(model.loss_history)
    windows = losses[:100].reshape(10, 10).mean(axis=1)
    assert np.all(np.diff(windows) <= 1e-6)


def test_dropout_and_batchnorm_fit_runs():
    dataset = two_group_exponential(n=300, seed=9)
    config = DeepSurvConfig(
        layers=(16, 8), lr=1e-3, epochs=60, batchnorm=True, dropout=True, seed=1
    )
    model = fit_deepsurv(dataset, config)
    values = model.predict_values(dataset.features[:5])
    assert np.all(np.diff(values, axis=1) <= 1e-12)
    assert np.all((values >= 0) & (values <= 1))
    # dropout noise is training-only: repeated inference is identical
    assert np.array_equal(values, model.predict_values(dataset.features[:5]))


def test_fit_deterministic_under_seed():
    dataset = two_group_exponential(n=200, seed=2)
    config = DeepSurvConfig(layers=(8,), epochs=50, seed=21, dropout=True)
    a = fit_deepsurv(dataset, config)
    b = fit_deepsurv(dataset, DeepSurvConfig(layers=(8,), epochs=50, seed=21, dropout=True))
    assert np.array_equal(a.params.w_out, b.params.w_out)
    assert all(np.array_equal(x, y) for x, y in zip(a.params.weights, b.params.weights))


def test_config_domains():
    with pytest.raises(UsageError):
        DeepSurvConfig(lr=0.5)
    with pytest.raises(UsageError):
        DeepSurvConfig(epochs=10)
    with pytest.raises(UsageError):
        DeepSurvConfig(l2=0.5)
    with pytest.raises(UsageError):
        DeepSurvConfig(optimizer="adamax")


def test_linear_coefficients_requires_linear():
    dataset = two_group_exponential(n=200, seed=2)
    model = fit_deepsurv(dataset, DeepSurvConfig(layers=(4,), epochs=50, seed=0))
    with pytest.raises(UsageError):
        model.linear_coefficients()


def test_checkpoint_hook_prunes():
    dataset = two_group_exponential(n=200, seed=3)
    fractions = []

    def hook(model, fraction):
        fractions.append(fraction)
        assert isinstance(model, DeepSurvModel)
        return fraction < 0.5

    fit_deepsurv(dataset, DeepSurvConfig(layers=(4,), epochs=100, seed=0), checkpoint_hook=hook)
    assert fractions == [0.25, 0.5]
