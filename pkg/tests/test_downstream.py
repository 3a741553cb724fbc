"""
Forecaster, L1 logistic and LSTM classifier tests.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path
sys.path.append(str(Path(__file__).parent.parent))

from core.autodiff import grad_check_params
from core.datasets import SupervisedSet
from core.nets import cross_entropy, mse_loss
from services.downstream import (ClassifierConfig, ClassifierModel, ForecasterConfig, ForecastModel, LogisticConfig,
                                 LogisticModel, RangeScaler, classify, forecast, l1_objective, logistic_predict,
                                 predict_probability, proximal_gradient, soft_threshold, train_forecaster,
                                 train_logistic_l1, train_lstm_classifier)
from utils.errors import ConfigError, DataError, ShapeError


def sine_forecast_set(n=48, W=6, H=2, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n + W + H)[:, None] / 5.0
    series = np.hstack([3.0 + np.sin(t), 4.0 + 0.5 * np.cos(t)]) + 0.01 * rng.standard_normal((len(t), 2))
    inputs = np.stack([series[i:i + W] for i in range(n)])
    targets = np.stack([series[i + W:i + W + H] for i in range(n)])
    return SupervisedSet(inputs=inputs, targets=targets, kind='forecast')


def trend_classify_set(n=64, W=8, seed=0):
    """Label 1 for windows whose yields rise, 0 for windows whose yields fall."""
    rng = np.random.default_rng(seed)
    labels = (np.arange(n) % 2).astype(float)
    slope = np.where(labels == 1, 0.1, -0.1)[:, None, None]
    steps = np.arange(W)[None, :, None]
    inputs = 3.0 + slope * steps + 0.02 * rng.standard_normal((n, W, 2))
    return SupervisedSet(inputs=inputs, targets=labels, kind='classify')


def test_soft_threshold_closed_form():
    out = soft_threshold(np.array([-3.0, -0.5, 0.0, 0.5, 3.0]), 1.0)
    np.testing.assert_array_equal(out, [-2.0, 0.0, 0.0, 0.0, 2.0])
    np.testing.assert_array_equal(soft_threshold(np.array([1.5, -1.5]), 0.0), [1.5, -1.5])


def test_proximal_gradient_objective_never_increases():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((60, 8))
    y = (X[:, 0] - X[:, 1] + 0.5 * rng.standard_normal(60) > 0).astype(float)
    result = proximal_gradient(X, y, lam=2.0)
    assert result.converged
    assert np.all(np.diff(result.objective) <= 1e-10 * np.abs(result.objective[:-1]).clip(min=1.0))
    assert result.objective[-1] == pytest.approx(l1_objective(X, y, result.intercept, result.beta, 2.0))
    with pytest.raises(ConfigError):
        proximal_gradient(X, y, lam=-1.0)


def _grid_minimum(X, y, lam, lo=-5.0, hi=5.0):
    """Dense coarse grid over (intercept, beta), then a fine grid around the best point."""
    D = X.shape[1]

    def search(axes):
        mesh = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, D + 1)
        z = mesh[:, :1] + mesh[:, 1:] @ X.T
        loss = (np.logaddexp(0.0, -z) * y + np.logaddexp(0.0, z) * (1.0 - y)).sum(axis=1)
        objective = loss + lam * np.abs(mesh[:, 1:]).sum(axis=1)
        best = int(np.argmin(objective))
        return mesh[best], objective[best]

    coarse = np.round(np.linspace(lo, hi, 101), 10)
    center, _ = search([coarse] * (D + 1))
    offsets = np.round(np.linspace(-0.2, 0.2, 41), 10)
    return search([np.round(c + offsets, 10) for c in center])[1]


def test_logistic_matches_grid_search():
    rng = np.random.default_rng(1)
    for _ in range(20):
        D = int(rng.integers(1, 3))
        X = rng.standard_normal((10, D))
        y = rng.integers(0, 2, 10).astype(float)
        y[0], y[1] = 0.0, 1.0
        lam = float(rng.uniform(0.8, 2.0))
        result = proximal_gradient(X, y, lam)
        found = l1_objective(X, y, result.intercept, result.beta, lam)
        reference = _grid_minimum(X, y, lam)
        assert found <= reference + 1e-6
        assert abs(found - reference) < 1e-3


def test_logistic_single_class_is_intercept_only():
    data = SupervisedSet(inputs=np.random.default_rng(2).standard_normal((9, 3, 2)), targets=np.ones(9),
                         kind='classify')
    model = train_logistic_l1(data, lam=0.1)
    assert model.single_class
    np.testing.assert_array_equal(model.beta, np.zeros(6))
    rate = (9 + 0.5) / 10.0
    assert model.intercept == pytest.approx(np.log(rate / (1 - rate)))
    assert logistic_predict(model, data.inputs[0]) == pytest.approx(rate)


def test_logistic_learns_trend_and_selects_lambda():
    data = trend_classify_set()
    model = train_logistic_l1(data, config=LogisticConfig(lambda_grid=(0.01, 0.1, 1.0), cv_folds=4))
    assert model.lam in (0.01, 0.1, 1.0)
    assert model.config.window == 8
    probs = predict_probability(model, data.inputs)
    assert probs[data.targets == 1].mean() > probs[data.targets == 0].mean()
    assert np.all((probs >= 0) & (probs <= 1))
    with pytest.raises(DataError):
        train_logistic_l1(sine_forecast_set(), lam=0.1)
    with pytest.raises(ConfigError):
        train_logistic_l1(data, lam=-0.5)
    with pytest.raises(ShapeError):
        logistic_predict(model, np.zeros((7, 2)))


def test_forecaster_gradient_full_architecture():
    rng = np.random.default_rng(3)
    config = ForecasterConfig(window=4, horizon=2, hidden=(3, 2), dropout=0.0)
    model = ForecastModel(config, RangeScaler(np.zeros(2), np.ones(2)))
    x = rng.uniform(-1, 1, (3, 4, 2))
    y = rng.uniform(-1, 1, (3, 2, 2))
    assert grad_check_params(lambda p: mse_loss(model.forward(p, x), y), model.params) < 1e-4


def test_classifier_gradient_full_architecture():
    rng = np.random.default_rng(4)
    config = ClassifierConfig(window=5, hidden=3, dense=4, dropout=0.0)
    model = ClassifierModel(config, RangeScaler(np.zeros(2), np.ones(2)))
    x = rng.uniform(-1, 1, (4, 5, 2))
    labels = np.eye(2)[[0, 1, 1, 0]]
    assert grad_check_params(lambda p: cross_entropy(model.forward(p, x), labels), model.params) < 1e-4


def test_train_forecaster_and_forecast():
    data = sine_forecast_set()
    config = ForecasterConfig(hidden=(8, 8), epochs=30, batch_size=16, learning_rate=1e-2, dropout=0.1)
    model = train_forecaster(data, 2, config)
    assert model.config.window == 6 and model.horizon == 2
    assert len(model.loss_history) == 30
    assert model.loss_history[-1] < model.loss_history[0]
    out = forecast(model, data.inputs[0])
    assert out.shape == (2, 2)
    assert np.all(np.isfinite(out))
    np.testing.assert_array_equal(model.predict(data.inputs[:1])[0], out)
    with pytest.raises(ShapeError):
        forecast(model, np.zeros((5, 2)))
    with pytest.raises(ShapeError):
        train_forecaster(data, 1, config)
    with pytest.raises(DataError):
        predict_probability(model, data.inputs)


def test_forecaster_training_is_deterministic():
    data = sine_forecast_set(n=20)
    config = ForecasterConfig(hidden=(4,), epochs=3, batch_size=8)
    a, b = train_forecaster(data, 2, config), train_forecaster(data, 2, config)
    for name in a.params:
        np.testing.assert_array_equal(a.params[name], b.params[name])


def test_lstm_classifier_separates_trends():
    data = trend_classify_set()
    config = ClassifierConfig(hidden=8, dense=8, epochs=40, batch_size=16, learning_rate=1e-2, dropout=0.0)
    model = train_lstm_classifier(data, config)
    probs = predict_probability(model, data.inputs)
    assert probs[data.targets == 1].mean() > probs[data.targets == 0].mean()
    np.testing.assert_allclose(model.predict_proba(data.inputs).sum(axis=1), 1.0)
    assert classify(model, data.inputs[1]) == pytest.approx(probs[1])
    with pytest.raises(DataError):
        train_lstm_classifier(sine_forecast_set(), config)


def test_config_errors():
    with pytest.raises(ConfigError):
        ForecasterConfig(hidden=())
    with pytest.raises(ConfigError):
        ClassifierConfig(dropout=1.0)
    with pytest.raises(ConfigError):
        LogisticConfig.from_dict({'lambda': 0.1})
    with pytest.raises(ConfigError):
        LogisticConfig(cv_folds=1)


def test_logistic_solver_edge_values():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((12, 4))
    y = np.array([0.0, 1.0] * 6)
    result = proximal_gradient(X, y, lam=1e6)
    assert result.objective[0] == pytest.approx(12 * np.log(2.0))
    np.testing.assert_array_equal(result.beta, np.zeros(4))


def test_logistic_predict_by_hand():
    rng = np.random.default_rng(6)
    mean, std = rng.standard_normal(6), rng.uniform(0.5, 2.0, 6)
    beta = rng.standard_normal(6)
    model = LogisticModel(LogisticConfig(window=3), mean, std, 0.1,
                          params={'beta': beta.copy(), 'intercept': np.array([0.2])})
    window = rng.standard_normal((3, 2))
    expected = 1.0 / (1.0 + np.exp(-(0.2 + ((window.reshape(-1) - mean) / std) @ beta)))
    assert logistic_predict(model, window) == pytest.approx(expected, rel=1e-12)

    flipped = LogisticModel(LogisticConfig(window=3), mean, std, 0.1,
                            params={'beta': -beta, 'intercept': np.array([-0.2])})
    assert logistic_predict(flipped, window) == pytest.approx(1.0 - expected, rel=1e-12)
    zero = LogisticModel(LogisticConfig(window=3), mean, std, 0.1)
    assert logistic_predict(zero, window) == 0.5
