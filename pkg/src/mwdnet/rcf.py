"""Residual Classification Flow over mWDN sub-series."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .config import TrainConfig, default_levels, rng_stream
from .mwdn import MwdnStack, build_stack, mwdn_backward, mwdn_forward, regularization_penalty
from .oracle import halved_lengths
from .training import train_loop

CONV_KERNELS = 8
CONV_WIDTH = 7


@dataclass
class ClassifierStage:
    psi_kind: str
    params: dict[str, np.ndarray]
    class_count: int


@dataclass
class RcfModel:
    mwdn: MwdnStack
    stages: list[ClassifierStage]
    class_count: int

    @property
    def n_levels(self) -> int:
        return self.mwdn.n_levels

    @property
    def input_len(self) -> int:
        return self.mwdn.input_len

    def parameters(self) -> dict[str, np.ndarray]:
        out = self.mwdn.parameters()
        for i, st in enumerate(self.stages):
            for k, v in st.params.items():
                out[f"stage.{i}.{k}"] = v
        return out


def _uniform(seed, name, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng_stream(seed, name).uniform(-bound, bound, size=shape)


def init_stage(
    psi_kind: str, len_high: int, len_low: int, class_count: int, hidden: int, seed: int, name: str
) -> ClassifierStage:
    if psi_kind == "mlp":
        d = len_high + len_low
        params = {
            "W1": _uniform(seed, name + ".W1", (hidden, d), d),
            "b1": np.zeros(hidden),
            "W2": _uniform(seed, name + ".W2", (class_count, hidden), hidden),
            "b2": np.zeros(class_count),
        }
    elif psi_kind == "conv":
        if min(len_high, len_low) < CONV_WIDTH:
            raise ValueError(f"conv stage needs sub-series of length >= {CONV_WIDTH}")
        params = {
            "K_high": _uniform(seed, name + ".K_high", (CONV_KERNELS, CONV_WIDTH), CONV_WIDTH),
            "c_high": np.zeros(CONV_KERNELS),
            "K_low": _uniform(seed, name + ".K_low", (CONV_KERNELS, CONV_WIDTH), CONV_WIDTH),
            "c_low": np.zeros(CONV_KERNELS),
            "W": _uniform(seed, name + ".W", (class_count, 2 * CONV_KERNELS), 2 * CONV_KERNELS),
            "b": np.zeros(class_count),
        }
    else:
        raise ValueError(f"unknown psi kind {psi_kind!r}")
    return ClassifierStage(psi_kind, params, class_count)


def build_rcf(
    series_len: int,
    class_count: int,
    n_levels: int | None = None,
    psi_kind: str = "mlp",
    hidden: int = 64,
    eps_scale: float = 1e-4,
    seed: int = 0,
) -> RcfModel:
    if class_count < 2:
        raise ValueError("need at least 2 classes")
    n_levels = n_levels or default_levels(series_len)
    stack = build_stack(series_len, n_levels, eps_scale=eps_scale, seed=seed)
    lengths = halved_lengths(series_len, n_levels)[1:]
    stages = [
        init_stage(psi_kind, L, L, class_count, hidden, seed, f"stage.{i}") for i, L in enumerate(lengths)
    ]
    return RcfModel(stack, stages, class_count)


def psi_forward(stage: ClassifierStage, x_h, x_l):
    """Stage logits ``u`` from the level's (high, low) sub-series pair."""
    p = stage.params
    x_h = np.asarray(x_h, dtype=np.float64)
    x_l = np.asarray(x_l, dtype=np.float64)
    if stage.psi_kind == "mlp":
        x = np.concatenate([x_h, x_l], axis=-1)
        hid, c1 = nn.fc_forward(x, p["W1"], p["b1"], "sigmoid")
        u, c2 = nn.fc_forward(hid, p["W2"], p["b2"], "identity")
        return u, (c1, c2, x_h.shape[-1])
    feats = []
    caches = []
    for branch, x in (("high", x_h), ("low", x_l)):
        conv, cc = nn.conv1d_forward(x, p["K_" + branch])
        z = conv + p["c_" + branch][:, None]
        a = nn.relu(z)
        feats.append(a.mean(axis=-1))
        caches.append((cc, z))
    f = np.concatenate(feats, axis=-1)
    u, cf = nn.fc_forward(f, p["W"], p["b"], "identity")
    return u, (caches, cf)


def psi_backward(stage: ClassifierStage, cache, g_u):
    """Returns ``(param_grads, g_x_h, g_x_l)``."""
    if stage.psi_kind == "mlp":
        c1, c2, n_h = cache
        g2 = nn.fc_backward(c2, g_u)
        g1 = nn.fc_backward(c1, g2.input)
        grads = {"W1": g1.params["W"], "b1": g1.params["b"], "W2": g2.params["W"], "b2": g2.params["b"]}
        return grads, g1.input[..., :n_h], g1.input[..., n_h:]
    caches, cf = cache
    gf = nn.fc_backward(cf, g_u)
    grads = {"W": gf.params["W"], "b": gf.params["b"]}
    g_inputs = []
    for j, branch in enumerate(("high", "low")):
        cc, z = caches[j]
        g_feat = gf.input[..., j * CONV_KERNELS : (j + 1) * CONV_KERNELS]
        gz = np.repeat(g_feat[..., None] / z.shape[-1], z.shape[-1], axis=-1) * (z > 0)
        gc = nn.conv1d_backward(cc, gz)
        grads["K_" + branch] = gc.params["kernel"]
        grads["c_" + branch] = gz.reshape(-1, CONV_KERNELS, z.shape[-1]).sum(axis=(0, 2))
        g_inputs.append(gc.input)
    return grads, g_inputs[0], g_inputs[1]


def rcf_heads_forward(model: RcfModel, subseries):
    """Residual accumulation ``c(i) = softmax(c(i-1) + u(i))`` with ``c(0) = 0``."""
    lead = subseries.high[0].shape[:-1]
    c_prev = np.zeros(lead + (model.class_count,))
    c_hats = []
    caches = []
    for i, st in enumerate(model.stages):
        u, pc = psi_forward(st, subseries.high[i], subseries.lows[i])
        c_prev = nn.softmax(c_prev + u)
        c_hats.append(c_prev)
        caches.append(pc)
    return c_hats, caches


def rcf_forward(model: RcfModel, x):
    sub, mcache = mwdn_forward(x, model.mwdn)
    c_hats, pcaches = rcf_heads_forward(model, sub)
    return c_hats, {"mwdn": mcache, "psi": pcaches, "sub": sub, "c_hats": c_hats}


def rcf_backward(model: RcfModel, cache, g_c_hats, alpha: float = 0.0, beta: float = 0.0) -> nn.LayerGradients:
    """Backpropagate gradients w.r.t. every ``c(i)`` to all parameters and the input."""
    N = model.n_levels
    params = {}
    g_high = [None] * N
    g_low = [None] * N
    carry = None
    for i in reversed(range(N)):
        g_c = np.asarray(g_c_hats[i], dtype=np.float64)
        if carry is not None:
            g_c = g_c + carry
        p = cache["c_hats"][i]
        g_z = nn.softmax_backward(p, g_c)
        pg, g_high[i], g_low[i] = psi_backward(model.stages[i], cache["psi"][i], g_z)
        for k, v in pg.items():
            params[f"stage.{i}.{k}"] = v
        carry = g_z
    mg = mwdn_backward(cache["mwdn"], g_high, g_low, model.mwdn, alpha, beta)
    params.update(mg.params)
    return nn.LayerGradients(params=params, input=mg.input, intermediate=mg.intermediate)


def deep_supervision_loss(c_hats, c) -> float:
    N = len(c_hats)
    if N < 1:
        raise ValueError("need at least one stage output")
    return sum((i + 1) / N * nn.cross_entropy(c, ch) for i, ch in enumerate(c_hats))


def one_hot(labels, class_count: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    return np.eye(class_count)[labels]


def rcf_objective(model: RcfModel, X, C, alpha: float, beta: float):
    """``(J*, grads)``: deep-supervised cross-entropy (batch mean) plus the prior penalty."""
    c_hats, cache = rcf_forward(model, X)
    N = len(c_hats)
    loss = deep_supervision_loss(c_hats, C) + regularization_penalty(model.mwdn, alpha, beta)
    g_c = [(i + 1) / N * nn.cross_entropy_grad(C, ch) for i, ch in enumerate(c_hats)]
    grads = rcf_backward(model, cache, g_c, alpha, beta)
    return loss, grads


def rcf_predict_proba(model: RcfModel, x) -> np.ndarray:
    c_hats, _ = rcf_forward(model, x)
    return c_hats[-1]


def rcf_predict(model: RcfModel, x):
    """Index of the largest final-stage probability; ties go to the lowest index."""
    return np.argmax(rcf_predict_proba(model, x), axis=-1)


def train_rcf(dataset, config: TrainConfig, model: RcfModel | None = None):
    """Mini-batch SGD on the deep-supervised objective.

    ``dataset`` needs ``train_X``, ``train_y``, ``class_count`` and optionally
    ``test_X``/``test_y`` (used only for the per-epoch test error).
    Returns ``(model, history)``.
    """
    X = np.asarray(dataset.train_X, dtype=np.float64)
    y = np.asarray(dataset.train_y, dtype=int)
    C_count = dataset.class_count
    if C_count < 2 or len(np.unique(y)) < 2:
        raise ValueError("training data must contain at least 2 classes")
    if model is None:
        model = build_rcf(
            X.shape[1], C_count, config.n_levels, config.psi_kind, config.hidden, config.eps_scale, config.seed
        )
    C = one_hot(y, C_count)
    test_X = getattr(dataset, "test_X", None)
    test_y = getattr(dataset, "test_y", None)
    params = model.parameters()
    frozen = ("mwdn.",) if config.freeze_mwdn else ()

    opt = config.make_optimizer()

    def step(idx):
        loss, grads = rcf_objective(model, X[idx], C[idx], config.alpha, config.beta)
        opt.step(params, grads.params, frozen)
        return loss

    def epoch_end(epoch, _):
        c_hats, _ = rcf_forward(model, X)
        loss = deep_supervision_loss(c_hats, C) + regularization_penalty(model.mwdn, config.alpha, config.beta)
        rec = {"epoch": epoch, "train_loss": loss, "train_err": error_fraction(c_hats[-1], y)}
        if test_X is not None and len(test_X):
            rec["test_err"] = error_fraction(rcf_predict_proba(model, test_X), test_y)
        return rec

    history = train_loop(
        step, len(X), config.epochs, config.batch_size, rng_stream(config.seed, "shuffle"), epoch_end,
        patience=config.patience,
    )
    return model, history


def error_fraction(probs, labels) -> float:
    return float(np.mean(np.argmax(probs, axis=-1) != np.asarray(labels)))
