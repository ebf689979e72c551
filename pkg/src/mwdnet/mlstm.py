"""Multi-frequency LSTM forecaster built on mWDN."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .metrics import mape, rmse
from .config import TrainConfig, rng_stream
from .mwdn import MwdnStack, build_stack, mwdn_backward, mwdn_forward, regularization_penalty
from .oracle import WaveletFilterPair, db4_filters, mdwd_decompose
from .training import train_loop

FINETUNE_EPOCHS = 200


@dataclass
class MlstmModel:
    mwdn: MwdnStack
    subnets: list[dict[str, np.ndarray]]
    heads: list[dict[str, np.ndarray]]
    fusion: dict[str, np.ndarray]

    @property
    def n_levels(self) -> int:
        return self.mwdn.n_levels

    @property
    def window(self) -> int:
        return self.mwdn.input_len

    @property
    def hidden(self) -> int:
        return self.subnets[0]["W_h"].shape[1]

    def parameters(self) -> dict[str, np.ndarray]:
        out = self.mwdn.parameters()
        for k, (sub, head) in enumerate(zip(self.subnets, self.heads)):
            for name, v in sub.items():
                out[f"subnet.{k}.{name}"] = v
            for name, v in head.items():
                out[f"head.{k}.{name}"] = v
        for name, v in self.fusion.items():
            out[f"fusion.{name}"] = v
        return out


def build_mlstm(window: int, n_levels: int = 2, hidden: int = 32, eps_scale: float = 1e-4, seed: int = 0) -> MlstmModel:
    if window % 2**n_levels:
        raise ValueError(f"window {window} must be a multiple of 2^{n_levels}")
    stack = build_stack(window, n_levels, eps_scale=eps_scale, seed=seed)
    subnets, heads = [], []
    bound = 1.0 / np.sqrt(hidden)
    for k in range(n_levels + 1):
        subnets.append(nn.lstm_init(1, hidden, rng_stream(seed, f"subnet.{k}")))
        heads.append({"W": rng_stream(seed, f"head.{k}.W").uniform(-bound, bound, (1, hidden)), "b": np.zeros(1)})
    fb = 1.0 / np.sqrt(n_levels + 1)
    fusion = {"W": rng_stream(seed, "fusion.W").uniform(-fb, fb, (1, n_levels + 1)), "b": np.zeros(1)}
    return MlstmModel(stack, subnets, heads, fusion)


def _as_steps(series: np.ndarray) -> np.ndarray:
    # (..., L) -> (L, ..., 1): one value per time step
    return np.moveaxis(series, -1, 0)[..., None]


def subnet_forward(params, head, series):
    hs, final, lc = nn.lstm_forward(_as_steps(series), params)
    out, hc = nn.fc_forward(final.hidden, head["W"], head["b"])
    return out[..., 0], (lc, hc, hs.shape)


def subnet_backward(cache, g_out):
    lc, hc, hs_shape = cache
    gh = nn.fc_backward(hc, np.asarray(g_out)[..., None])
    gl = nn.lstm_backward(lc, np.zeros(hs_shape), nn.LstmState(gh.input, np.zeros_like(gh.input)))
    params = {k: gl.params[k] for k in ("W_x", "W_h", "b")}
    head = dict(gh.params)
    return params, head, np.moveaxis(gl.input[..., 0], 0, -1)


def mlstm_forward(model: MlstmModel, window):
    """Returns ``(y_hat, per_subnet, cache)``; ``per_subnet`` has N+1 entries on its last axis."""
    window = np.asarray(window, dtype=np.float64)
    if window.shape[-1] != model.window:
        raise ValueError(f"window length {window.shape[-1]} != {model.window}")
    sub, mcache = mwdn_forward(window, model.mwdn)
    outs, scaches = [], []
    for k, comp in enumerate(sub.components()):
        o, sc = subnet_forward(model.subnets[k], model.heads[k], comp)
        outs.append(o)
        scaches.append(sc)
    per_subnet = np.stack(outs, axis=-1)
    y, fc = nn.fc_forward(per_subnet, model.fusion["W"], model.fusion["b"])
    return y[..., 0], per_subnet, {"mwdn": mcache, "subnets": scaches, "fusion": fc}


def mlstm_backward(model: MlstmModel, cache, g_y=None, g_per_subnet=None, alpha=0.0, beta=0.0) -> nn.LayerGradients:
    """Gradients from the fused output and/or the per-subnet outputs."""
    N = model.n_levels
    params = {}
    fc = cache["fusion"]
    g_per = np.zeros(fc[0].shape) if g_per_subnet is None else np.array(g_per_subnet, dtype=np.float64)
    if g_y is not None:
        gf = nn.fc_backward(fc, np.asarray(g_y, dtype=np.float64)[..., None])
        params["fusion.W"] = gf.params["W"]
        params["fusion.b"] = gf.params["b"]
        g_per = g_per + gf.input
    comp_grads = []
    for k in range(N + 1):
        sp, hp, gx = subnet_backward(cache["subnets"][k], g_per[..., k])
        for name, v in sp.items():
            params[f"subnet.{k}.{name}"] = v
        for name, v in hp.items():
            params[f"head.{k}.{name}"] = v
        comp_grads.append(gx)
    g_high = comp_grads[:N]
    g_low = [np.zeros_like(g) for g in comp_grads[: N - 1]] + [comp_grads[N]]
    mg = mwdn_backward(cache["mwdn"], g_high, g_low, model.mwdn, alpha, beta)
    params.update(mg.params)
    return nn.LayerGradients(params=params, input=mg.input, intermediate=mg.intermediate)


def predict(model: MlstmModel, window):
    y, _, _ = mlstm_forward(model, window)
    return y


def pretrain_targets(target_window, n_levels: int, filters: WaveletFilterPair | None = None) -> np.ndarray:
    """Most recent value of each wavelet component of the future window (high to low)."""
    target_window = np.asarray(target_window, dtype=np.float64)
    if target_window.shape[-1] < 2**n_levels:
        raise ValueError(f"target window shorter than 2^{n_levels}")
    dec = mdwd_decompose(target_window, n_levels, filters or db4_filters())
    return np.stack([c[..., -1] for c in dec.components()], axis=-1)


def pretrain_objective(model: MlstmModel, windows, targets, alpha, beta):
    """Batch mean of the squared per-subnet error norm, plus the prior penalty."""
    _, per, cache = mlstm_forward(model, windows)
    M = per.shape[0] if per.ndim > 1 else 1
    diff = per - targets
    loss = float(np.sum(diff**2)) / M + regularization_penalty(model.mwdn, alpha, beta)
    grads = mlstm_backward(model, cache, None, 2.0 * diff / M, alpha, beta)
    return loss, grads


def finetune_objective(model: MlstmModel, windows, y, alpha, beta):
    y_hat, _, cache = mlstm_forward(model, windows)
    loss = nn.mse(y_hat, y) + regularization_penalty(model.mwdn, alpha, beta)
    grads = mlstm_backward(model, cache, nn.mse_grad(y_hat, y), None, alpha, beta)
    return loss, grads


def evaluate_forecast(predict_fn, windows, targets) -> dict:
    y_hat = predict_fn(windows)
    try:
        m = mape(y_hat, targets)
    except ValueError:
        m = float("nan")
    return {"val_mape": m, "val_rmse": rmse(y_hat, targets)}


def fit(model, objective, X, Y, config: TrainConfig, epochs: int, frozen=(), phase="finetune",
        val=None, predict_fn=None, stream="shuffle"):
    """Generic SGD fit of ``objective(model, X[idx], Y[idx], alpha, beta)``."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    params = model.parameters()
    if config.freeze_mwdn:
        frozen = (*frozen, "mwdn.")

    opt = config.make_optimizer()

    def step(idx):
        loss, grads = objective(model, X[idx], Y[idx], config.alpha, config.beta)
        opt.step(params, grads.params, frozen)
        return loss

    def epoch_end(epoch, loss):
        rec = {"epoch": epoch, "phase": phase, "loss": loss}
        if val is not None:
            rec.update(evaluate_forecast(predict_fn, *val))
        return rec

    history = train_loop(
        step, len(X), epochs, config.batch_size, rng_stream(config.seed, f"{stream}.{phase}"), epoch_end,
        loss_key="loss", patience=config.patience,
    )
    return model, history


def pretrain(model: MlstmModel, dataset, config: TrainConfig, val=None):
    """Fit each subnet to the wavelet components of its future window; the fusion layer is left untouched."""
    targets = pretrain_targets(dataset.target_windows, model.n_levels, model.mwdn.filters)
    return fit(model, pretrain_objective, dataset.windows, targets, config, config.pretrain_epochs,
               frozen=("fusion.",), phase="pretrain", val=val, predict_fn=lambda w: predict(model, w))


def finetune(model: MlstmModel, dataset, config: TrainConfig, val=None):
    return fit(model, finetune_objective, dataset.windows, dataset.targets, config, config.epochs,
               phase="finetune", val=val, predict_fn=lambda w: predict(model, w))


def train_mlstm(dataset, config: TrainConfig, val_dataset=None, model: MlstmModel | None = None):
    if model is None:
        model = build_mlstm(dataset.window, config.n_levels or 2, config.lstm_hidden, config.eps_scale, config.seed)
    val = None if val_dataset is None else (val_dataset.windows, val_dataset.targets)
    history = []
    if config.pretrain_epochs > 0:
        _, h = pretrain(model, dataset, config, val)
        history += h
    _, h = finetune(model, dataset, config, val)
    history += h
    return model, history
