import numpy as np
import pytest

from mwdnet import nn
from mwdnet.baselines import (
    build_lstm_forecaster,
    build_plain_mlp,
    count_parameters,
    lstm_forecaster_objective,
    lstm_forecaster_predict,
    matched_hidden,
    plain_mlp_forward,
    plain_mlp_objective,
    train_lstm_forecaster,
    train_plain_mlp,
)
from mwdnet.config import TrainConfig
from mwdnet.data_io import sliding_windows
from mwdnet.rcf import build_rcf, one_hot
from mwdnet.synthetic import sinusoid_frequency_classes


@pytest.mark.parametrize("seed", range(20))
def test_plain_mlp_gradient(seed):
    rng = np.random.default_rng(seed)
    model = build_plain_mlp(6, 3, 4, seed)
    X, C = rng.normal(size=(4, 6)), one_hot(rng.integers(0, 3, 4), 3)

    def op(p):
        return plain_mlp_objective(model, X, C)

    assert nn.finite_difference_check(op, model.params) < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_lstm_forecaster_gradient(seed):
    rng = np.random.default_rng(seed)
    model = build_lstm_forecaster(3, seed)
    W, y = rng.normal(size=(4, 6)), rng.normal(size=4)

    def op(p):
        loss, g = lstm_forecaster_objective(model, W, y)
        return loss, g.params

    assert nn.finite_difference_check(op, model.parameters()) < 1e-4


def test_matched_hidden_tracks_parameter_count():
    rcf = build_rcf(64, 2, 3)
    target = count_parameters(rcf)
    hidden = matched_hidden(target, 64, 2)
    got = count_parameters(build_plain_mlp(64, 2, hidden))
    assert abs(got - target) <= 64 + 1 + 2
    assert matched_hidden(0, 64, 2) == 1


def test_plain_mlp_outputs_probabilities():
    probs, _ = plain_mlp_forward(build_plain_mlp(8, 3, 5), np.random.default_rng(0).normal(size=(7, 8)))
    np.testing.assert_allclose(probs.sum(-1), 1.0, rtol=0, atol=1e-12)


def test_plain_mlp_learns_and_is_deterministic():
    ds = sinusoid_frequency_classes(n_series=60, length=32, seed=0, train_fraction=0.5)
    cfg = TrainConfig(epochs=40, seed=1, patience=0)
    a, ha = train_plain_mlp(ds, cfg, 16)
    b, hb = train_plain_mlp(ds, cfg, 16)
    assert ha == hb and all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    assert ha[-1]["train_loss"] < ha[0]["train_loss"]


def test_lstm_forecaster_predicts_constant():
    ds = sliding_windows(np.full(120, 2.0), 8, 1, 2)
    cfg = TrainConfig(epochs=150, seed=0, patience=0, batch_size=16)
    model, _ = train_lstm_forecaster(ds, cfg, 4)
    assert np.all(np.abs(lstm_forecaster_predict(model, ds.windows) - 2.0) <= 0.1)
