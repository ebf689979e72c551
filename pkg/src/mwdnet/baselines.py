"""Reference models without wavelet decomposition, trained with the same loops."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .config import TrainConfig, rng_stream
from .mlstm import fit
from .rcf import error_fraction, one_hot
from .training import train_loop


@dataclass
class PlainMlp:
    params: dict[str, np.ndarray]
    class_count: int

    def parameters(self) -> dict[str, np.ndarray]:
        return self.params


def count_parameters(model) -> int:
    return int(sum(p.size for p in model.parameters().values()))


def matched_hidden(target_params: int, input_len: int, class_count: int) -> int:
    """Hidden width giving a one-hidden-layer MLP roughly ``target_params`` parameters."""
    return max(1, round((target_params - class_count) / (input_len + 1 + class_count)))


def build_plain_mlp(input_len: int, class_count: int, hidden: int, seed: int = 0) -> PlainMlp:
    b1, b2 = 1.0 / np.sqrt(input_len), 1.0 / np.sqrt(hidden)
    params = {
        "W1": rng_stream(seed, "mlp.W1").uniform(-b1, b1, (hidden, input_len)),
        "b1": np.zeros(hidden),
        "W2": rng_stream(seed, "mlp.W2").uniform(-b2, b2, (class_count, hidden)),
        "b2": np.zeros(class_count),
    }
    return PlainMlp(params, class_count)


def plain_mlp_forward(model: PlainMlp, X):
    p = model.params
    h, c1 = nn.fc_forward(X, p["W1"], p["b1"], "sigmoid")
    u, c2 = nn.fc_forward(h, p["W2"], p["b2"])
    return nn.softmax(u), (c1, c2)


def plain_mlp_objective(model: PlainMlp, X, C):
    probs, (c1, c2) = plain_mlp_forward(model, X)
    loss = nn.cross_entropy(C, probs)
    g_u = nn.softmax_backward(probs, nn.cross_entropy_grad(C, probs))
    g2 = nn.fc_backward(c2, g_u)
    g1 = nn.fc_backward(c1, g2.input)
    grads = {"W1": g1.params["W"], "b1": g1.params["b"], "W2": g2.params["W"], "b2": g2.params["b"]}
    return loss, grads


def train_plain_mlp(dataset, config: TrainConfig, hidden: int):
    X = np.asarray(dataset.train_X, dtype=np.float64)
    y = np.asarray(dataset.train_y, dtype=int)
    model = build_plain_mlp(X.shape[1], dataset.class_count, hidden, config.seed)
    C = one_hot(y, dataset.class_count)

    opt = config.make_optimizer()

    def step(idx):
        loss, grads = plain_mlp_objective(model, X[idx], C[idx])
        opt.step(model.params, grads)
        return loss

    def epoch_end(epoch, loss):
        rec = {"epoch": epoch, "train_loss": loss}
        if getattr(dataset, "test_X", None) is not None:
            rec["test_err"] = error_fraction(plain_mlp_forward(model, dataset.test_X)[0], dataset.test_y)
        return rec

    history = train_loop(step, len(X), config.epochs, config.batch_size, rng_stream(config.seed, "shuffle"),
                         epoch_end, patience=config.patience)
    return model, history


@dataclass
class LstmForecaster:
    lstm: dict[str, np.ndarray]
    head: dict[str, np.ndarray]

    def parameters(self) -> dict[str, np.ndarray]:
        out = {f"lstm.{k}": v for k, v in self.lstm.items()}
        out.update({f"head.{k}": v for k, v in self.head.items()})
        return out


def build_lstm_forecaster(hidden: int, seed: int = 0) -> LstmForecaster:
    bound = 1.0 / np.sqrt(hidden)
    return LstmForecaster(
        nn.lstm_init(1, hidden, rng_stream(seed, "lstm")),
        {"W": rng_stream(seed, "lstm_head.W").uniform(-bound, bound, (1, hidden)), "b": np.zeros(1)},
    )


def lstm_forecaster_predict(model: LstmForecaster, windows):
    xs = np.moveaxis(np.asarray(windows, dtype=np.float64), -1, 0)[..., None]
    _, final, _ = nn.lstm_forward(xs, model.lstm)
    return (final.hidden @ model.head["W"].T + model.head["b"])[..., 0]


def lstm_forecaster_objective(model: LstmForecaster, windows, y, alpha=0.0, beta=0.0):
    xs = np.moveaxis(np.asarray(windows, dtype=np.float64), -1, 0)[..., None]
    hs, final, lc = nn.lstm_forward(xs, model.lstm)
    out, hc = nn.fc_forward(final.hidden, model.head["W"], model.head["b"])
    y_hat = out[..., 0]
    loss = nn.mse(y_hat, y)
    gh = nn.fc_backward(hc, nn.mse_grad(y_hat, y)[..., None])
    gl = nn.lstm_backward(lc, np.zeros(hs.shape), nn.LstmState(gh.input, np.zeros_like(gh.input)))
    grads = {f"lstm.{k}": gl.params[k] for k in ("W_x", "W_h", "b")}
    grads.update({f"head.{k}": v for k, v in gh.params.items()})
    return loss, nn.LayerGradients(params=grads)


def train_lstm_forecaster(dataset, config: TrainConfig, hidden: int, val_dataset=None):
    model = build_lstm_forecaster(hidden, config.seed)
    val = None if val_dataset is None else (val_dataset.windows, val_dataset.targets)
    return fit(model, lstm_forecaster_objective, dataset.windows, dataset.targets, config, config.epochs,
               val=val, predict_fn=lambda w: lstm_forecaster_predict(model, w))
