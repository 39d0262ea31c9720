import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import numeric_dataset
from lemda.errors import TrainingError
from lemda.mlp import (MlpConfig, MlpModel, gradient_check, init_model, loss_and_grads,
                       predict_mlp, predict_proba, standardization, train_mlp, train_steps)


def separable(n=2000, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    y = (X[:, 0] - X[:, 1] > 0).astype(int)
    return numeric_dataset(X, y)


def fresh_model(n_in=3, hidden=4, seed=0, **kw):
    cfg = MlpConfig(hidden=hidden, seed=seed, **kw)
    return init_model([f"x{i}" for i in range(n_in)], np.zeros(n_in), np.ones(n_in), cfg)


def test_separable_data_reaches_high_accuracy():
    d = separable()
    m = train_mlp(d, MlpConfig(epochs=30, batch=100, lr=1e-2))
    assert np.mean(predict_mlp(m, d) == d.labels) > 0.95


def test_zero_learning_rate_keeps_weights():
    d = separable(300)
    m = train_mlp(d, MlpConfig(lr=0.0, epochs=2, batch=50))
    ref = init_model(d.feature_names, m.means, m.scales, m.config)
    for k in ("w1", "b1", "w2", "b2"):
        assert np.array_equal(getattr(m, k), getattr(ref, k))


def test_training_is_deterministic():
    d = separable(500)
    cfg = MlpConfig(epochs=3, batch=64, seed=3)
    assert train_mlp(d, cfg).dumps() == train_mlp(d, cfg).dumps()


def test_half_probability_predicts_attack():
    m = fresh_model()
    for k in ("w1", "b1", "w2", "b2"):
        getattr(m, k)[...] = 0.0
    d = numeric_dataset(np.ones((2, 3)), [0, 1])
    assert predict_proba(m, d).tolist() == [0.5, 0.5]
    assert predict_mlp(m, d).tolist() == [1, 1]


def test_zero_inputs_give_zero_first_layer_weight_gradient():
    m = fresh_model()
    _, grads = loss_and_grads(m, np.zeros((5, 3)), np.array([0, 1, 0, 1, 1.0]))
    assert np.all(grads["w1"] == 0)


def test_loss_decreases_on_full_batch():
    d = separable(400)
    cfg = MlpConfig(epochs=40, batch=400, lr=1e-2)
    m = train_mlp(d, cfg)
    losses = m.losses
    assert all(b <= a * 1.01 for a, b in zip(losses, losses[1:]))
    assert losses[-1] < losses[0]


def test_gradient_check_at_init_and_after_training():
    d = separable(64, seed=2)
    X, y = d.feature_matrix(), d.labels
    means, scales = standardization(X)
    m = init_model(d.feature_names, means, scales, MlpConfig(hidden=6, batch=64, seed=1))
    assert gradient_check(m, X, y) < 1e-4
    train_steps(m, m.standardize(X), y.astype(float), 5, np.random.default_rng(0))
    assert gradient_check(m, X, y) < 1e-4


def test_errors():
    with pytest.raises(TrainingError):
        train_mlp(numeric_dataset([[0.0], [1.0]], [1, 1]))
    m = train_mlp(separable(100), MlpConfig(epochs=1))
    with pytest.raises(ValueError, match="schema"):
        predict_mlp(m, numeric_dataset([[0.0, 1.0]], [0]))
    with pytest.raises(ValueError):
        gradient_check(m, np.zeros((1, 3)), [0], eps=0)


def test_constant_column_standardizes_to_zero():
    X = np.column_stack([np.arange(5.0), np.full(5, 7.0)])
    means, scales = standardization(X)
    assert scales[1] == 1.0
    z = (X - means) / scales
    assert np.all(z[:, 1] == 0)


@settings(max_examples=1000, deadline=None)
@given(logit=st.floats(-800, 800), label=st.integers(0, 1))
def test_extreme_logits_stay_finite(logit, label):
    m = fresh_model(n_in=1, hidden=1)
    m.w1[...] = 1.0
    m.w2[...] = 1.0
    m.b1[...] = 0.0
    m.b2[...] = logit
    loss, grads = loss_and_grads(m, np.zeros((1, 1)), np.array([float(label)]))
    assert np.isfinite(loss)
    assert all(np.all(np.isfinite(g)) for g in grads.values())
    p = m.forward(np.zeros((1, 1)))[1]
    assert 0.0 <= p[0] <= 1.0


@settings(max_examples=1000, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_gradients_match_central_differences(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(16, 3))
    y = rng.integers(0, 2, 16)
    m = fresh_model(hidden=5, seed=seed)
    assert gradient_check(m, X, y) < 1e-4


def test_model_serializes():
    m = fresh_model()
    doc = m.to_dict()
    assert doc["w1"] == m.w1.tolist() and doc["config"]["hidden"] == 4
    assert isinstance(m, MlpModel)
