"""Dense layers with hand-written backward passes.

Every forward function returns ``(output, cache)`` and the matching backward
takes that cache plus the upstream gradient. Inputs may carry any number of
leading batch axes; parameter gradients are summed over them, so callers that
optimize a batch mean scale the upstream gradient by ``1/M`` themselves.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

PROB_CLAMP = 1e-12


@dataclass
class LayerGradients:
    params: dict[str, np.ndarray] = field(default_factory=dict)
    input: np.ndarray | None = None
    intermediate: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class LstmState:
    hidden: np.ndarray
    cell: np.ndarray

    def __post_init__(self):
        if self.hidden.shape != self.cell.shape:
            raise ValueError("hidden and cell state shapes differ")


def sigmoid(v):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(v, dtype=np.float64)))


def relu(v):
    return np.maximum(v, 0.0)


def softmax(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 0 or v.shape[-1] == 0:
        raise ValueError("softmax of empty vector")
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(p: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the softmax input given its output ``p``."""
    return p * (upstream - (p * upstream).sum(axis=-1, keepdims=True))


_ACTIVATIONS = {
    "sigmoid": (sigmoid, lambda z, a: a * (1.0 - a)),
    "relu": (relu, lambda z, a: (z > 0).astype(np.float64)),
    "identity": (lambda z: z, lambda z, a: np.ones_like(z)),
}


def _check_activation(name: str):
    if name not in _ACTIVATIONS:
        raise ValueError(f"unknown activation {name!r}")
    return _ACTIVATIONS[name]


def fc_forward(x, W, b, activation: str = "identity"):
    """``f(W x + b)`` along the last axis of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if W.ndim != 2 or x.shape[-1] != W.shape[1] or b.shape != (W.shape[0],):
        raise ValueError(f"shape mismatch: x {x.shape}, W {W.shape}, b {b.shape}")
    f, _ = _check_activation(activation)
    z = x @ W.T + b
    a = f(z)
    return a, (x, W, z, a, activation)


def fc_backward(cache, upstream) -> LayerGradients:
    x, W, z, a, activation = cache
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != a.shape:
        raise ValueError(f"upstream shape {upstream.shape} != output shape {a.shape}")
    _, df = _ACTIVATIONS[activation]
    dz = upstream * df(z, a)
    dz2 = dz.reshape(-1, W.shape[0])
    x2 = x.reshape(-1, W.shape[1])
    return LayerGradients(
        params={"W": dz2.T @ x2, "b": dz2.sum(axis=0)},
        input=dz @ W,
    )


def conv1d_forward(x, kernel, mode: str = "valid"):
    """Valid cross-correlation along the last axis.

    A 1-D ``kernel`` gives an output of shape ``(..., L - k + 1)``; a 2-D
    kernel bank of shape ``(F, k)`` gives ``(..., F, L - k + 1)``.
    """
    if mode != "valid":
        raise ValueError(f"unsupported convolution mode {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    k = kernel.shape[-1]
    if k > x.shape[-1]:
        raise ValueError(f"kernel length {k} exceeds input length {x.shape[-1]}")
    windows = np.lib.stride_tricks.sliding_window_view(x, k, axis=-1)
    if kernel.ndim == 1:
        out = windows @ kernel
    else:
        out = np.einsum("...nk,fk->...fn", windows, kernel)
    return out, (x, kernel)


def conv1d_backward(cache, upstream) -> LayerGradients:
    x, kernel = cache
    upstream = np.asarray(upstream, dtype=np.float64)
    k = kernel.shape[-1]
    windows = np.lib.stride_tricks.sliding_window_view(x, k, axis=-1)
    dx = np.zeros_like(x)
    if kernel.ndim == 1:
        dkernel = np.einsum(
            "bn,bnk->k", upstream.reshape(-1, windows.shape[-2]), windows.reshape(-1, *windows.shape[-2:])
        )
        # dx[i] = sum_n upstream[i - n] * kernel[n]
        for n in range(k):
            dx[..., n : n + upstream.shape[-1]] += upstream * kernel[n]
    else:
        dkernel = np.einsum(
            "bfn,bnk->fk", upstream.reshape(-1, *upstream.shape[-2:]), windows.reshape(-1, *windows.shape[-2:])
        )
        for n in range(k):
            dx[..., n : n + upstream.shape[-1]] += np.einsum("...fn,f->...n", upstream, kernel[:, n])
    return LayerGradients(params={"kernel": dkernel}, input=dx)


def lstm_init(input_size: int, hidden_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Gate blocks are stacked in the order input, forget, output, candidate."""
    bound = 1.0 / np.sqrt(hidden_size)
    b = np.zeros(4 * hidden_size)
    b[hidden_size : 2 * hidden_size] = 1.0
    return {
        "W_x": rng.uniform(-bound, bound, size=(4 * hidden_size, input_size)),
        "W_h": rng.uniform(-bound, bound, size=(4 * hidden_size, hidden_size)),
        "b": b,
    }


def lstm_forward(xs, params: Mapping[str, np.ndarray], init: LstmState | None = None):
    """Run a standard LSTM over ``xs`` of shape ``(T, ..., input_size)``.

    Returns ``(hs, final_state, cache)`` with ``hs`` of shape ``(T, ..., H)``.
    """
    W_x, W_h, b = params["W_x"], params["W_h"], params["b"]
    H = W_h.shape[1]
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim < 2:
        if xs.size == 0:
            xs = xs.reshape(0, W_x.shape[1])
        else:
            raise ValueError("lstm input must be (T, ..., input_size)")
    if xs.shape[-1] != W_x.shape[1]:
        raise ValueError(f"step input size {xs.shape[-1]} != {W_x.shape[1]}")
    batch_shape = xs.shape[1:-1]
    if init is None:
        init = LstmState(np.zeros(batch_shape + (H,)), np.zeros(batch_shape + (H,)))
    h, c = init.hidden, init.cell
    steps = []
    hs = np.empty(xs.shape[:-1] + (H,))
    for t in range(xs.shape[0]):
        x = xs[t]
        z = x @ W_x.T + h @ W_h.T + b
        i = sigmoid(z[..., :H])
        f = sigmoid(z[..., H : 2 * H])
        o = sigmoid(z[..., 2 * H : 3 * H])
        g = np.tanh(z[..., 3 * H :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        steps.append((x, h, c, i, f, o, g, tc))
        h, c = h_new, c_new
        hs[t] = h
    return hs, LstmState(h, c), (steps, dict(params), init)


def lstm_backward(cache, upstream_hs, upstream_final: LstmState | None = None) -> LayerGradients:
    """Backpropagation through time.

    ``upstream_hs`` has the shape of ``hs``; ``upstream_final`` optionally
    carries gradients w.r.t. the final (hidden, cell) pair. The returned
    ``input`` holds gradients for every step input; ``params`` also contains
    ``h0`` and ``c0`` for the initial state.
    """
    steps, params, init = cache
    W_x, W_h = params["W_x"], params["W_h"]
    H = W_h.shape[1]
    upstream_hs = np.asarray(upstream_hs, dtype=np.float64)
    dW_x = np.zeros_like(W_x)
    dW_h = np.zeros_like(W_h)
    db = np.zeros_like(params["b"])
    if upstream_final is not None:
        dh_next = np.array(upstream_final.hidden, dtype=np.float64)
        dc_next = np.array(upstream_final.cell, dtype=np.float64)
    else:
        dh_next = np.zeros_like(init.hidden)
        dc_next = np.zeros_like(init.cell)
    dxs = np.zeros((len(steps),) + init.hidden.shape[:-1] + (W_x.shape[1],))
    for t in reversed(range(len(steps))):
        x, h_prev, c_prev, i, f, o, g, tc = steps[t]
        dh = upstream_hs[t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc**2)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dz = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), do * o * (1 - o), dg * (1 - g**2)], axis=-1
        )
        dz2 = dz.reshape(-1, 4 * H)
        dW_x += dz2.T @ x.reshape(-1, W_x.shape[1])
        dW_h += dz2.T @ h_prev.reshape(-1, H)
        db += dz2.sum(axis=0)
        dxs[t] = dz @ W_x
        dh_next = dz @ W_h
        dc_next = dc * f
    return LayerGradients(
        params={"W_x": dW_x, "W_h": dW_h, "b": db, "h0": dh_next, "c0": dc_next},
        input=dxs,
    )


def _clamp(p):
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def cross_entropy(c, c_hat) -> float:
    """Two-sided cross-entropy, averaged over any leading batch axes."""
    c = np.asarray(c, dtype=np.float64)
    c_hat = np.asarray(c_hat, dtype=np.float64)
    if c.shape != c_hat.shape:
        raise ValueError(f"length mismatch: {c.shape} vs {c_hat.shape}")
    p = _clamp(c_hat)
    per = -(c * np.log(p) + (1.0 - c) * np.log(1.0 - p)).sum(axis=-1)
    return float(np.mean(per))


def cross_entropy_grad(c, c_hat) -> np.ndarray:
    """Gradient of :func:`cross_entropy` (including the batch mean) w.r.t. ``c_hat``."""
    c = np.asarray(c, dtype=np.float64)
    c_hat = np.asarray(c_hat, dtype=np.float64)
    p = _clamp(c_hat)
    inside = (c_hat > PROB_CLAMP) & (c_hat < 1.0 - PROB_CLAMP)
    m = max(1, int(np.prod(c.shape[:-1])))
    return np.where(inside, -c / p + (1.0 - c) / (1.0 - p), 0.0) / m


def mse(y_hat, y) -> float:
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise ValueError(f"length mismatch: {y_hat.shape} vs {y.shape}")
    return float(np.mean((y_hat - y) ** 2))


def mse_grad(y_hat, y) -> np.ndarray:
    y_hat = np.asarray(y_hat, dtype=np.float64)
    return 2.0 * (y_hat - np.asarray(y, dtype=np.float64)) / y_hat.size


def finite_difference_check(
    op: Callable[[Mapping[str, np.ndarray]], tuple[float, Mapping[str, np.ndarray]]],
    params: Mapping[str, np.ndarray],
    step: float = 1e-5,
    keys=None,
) -> float:
    """Compare ``op``'s analytic gradients against central differences.

    ``op(params)`` must return ``(scalar, grads)`` where ``grads`` maps the
    same names as ``params``. Entries are perturbed in place and restored.
    Returns the maximum relative error, with denominator
    ``max(|analytic|, |numeric|, 1e-8)``.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    value, grads = op(params)
    if not np.isfinite(value):
        raise ValueError("non-finite forward value")
    worst = 0.0
    for name in keys if keys is not None else grads:
        p = params[name]
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up, _ = op(params)
            flat[j] = orig - step
            down, _ = op(params)
            flat[j] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise ValueError("non-finite forward value")
            numeric = (up - down) / (2 * step)
            denom = max(abs(gflat[j]), abs(numeric), 1e-8)
            worst = max(worst, abs(gflat[j] - numeric) / denom)
    return worst


def sgd_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], lr: float, frozen=()) -> None:
    """In-place ``theta <- theta - lr * grad``; names starting with a ``frozen`` prefix are skipped."""
    for name, g in grads.items():
        if name not in params or any(name.startswith(p) for p in frozen):
            continue
        params[name] -= lr * g


class Sgd:
    """Gradient descent with optional heavy-ball momentum (``momentum=0`` is the plain update)."""

    def __init__(self, lr: float, momentum: float = 0.0):
        self.lr = lr
        self.momentum = momentum
        self._velocity: dict[str, np.ndarray] = {}

    def step(self, params, grads, frozen=()) -> None:
        for name, g in grads.items():
            if name not in params or any(name.startswith(p) for p in frozen):
                continue
            if self.momentum:
                v = self._velocity.get(name)
                v = g.copy() if v is None else self.momentum * v + g
                self._velocity[name] = v
                g = v
            params[name] -= self.lr * g


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t: dict[str, int] = {}

    def step(self, params, grads, frozen=()) -> None:
        for name, g in grads.items():
            if name not in params or any(name.startswith(p) for p in frozen):
                continue
            t = self._t.get(name, 0) + 1
            m = self.beta1 * self._m.get(name, 0.0) + (1 - self.beta1) * g
            v = self.beta2 * self._v.get(name, 0.0) + (1 - self.beta2) * g * g
            self._t[name], self._m[name], self._v[name] = t, m, v
            m_hat = m / (1 - self.beta1**t)
            v_hat = v / (1 - self.beta2**t)
            params[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(kind: str, lr: float, momentum: float = 0.0):
    if kind == "sgd":
        return Sgd(lr, momentum)
    if kind == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {kind!r}")
