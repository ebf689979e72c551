"""Trainable multilevel wavelet decomposition network."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .config import rng_stream
from .nn import LayerGradients, sigmoid
from .oracle import SubSeriesSet, WaveletFilterPair, db4_filters, even_pad, halved_lengths

BIAS_INIT = 1e-3


def prior_matrix(P: int, coeffs) -> np.ndarray:
    """Banded P x P matrix with ``coeffs[k]`` at ``(r, r + k)``; rows near the bottom are truncated."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    W = np.zeros((P, P))
    for k, c in enumerate(coeffs[:P]):
        idx = np.arange(P - k)
        W[idx, idx + k] = c
    return W


def band_mask(P: int, K: int) -> np.ndarray:
    r, col = np.indices((P, P))
    return (col >= r) & (col - r < K)


def init_weight_matrix(P: int, coeffs, eps_scale: float, rng_seed=0) -> np.ndarray:
    """Prior matrix with off-band entries drawn uniformly from ``(-eps_scale, eps_scale)``.

    ``rng_seed`` may be an integer or a ``numpy.random.Generator``.
    """
    if P < 1:
        raise ValueError("P must be >= 1")
    if eps_scale < 0:
        raise ValueError("eps_scale must be non-negative")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    W = prior_matrix(P, coeffs)
    noise = rng.uniform(-eps_scale, eps_scale, size=(P, P)) if eps_scale > 0 else np.zeros((P, P))
    off = ~band_mask(P, len(coeffs))
    W[off] = noise[off]
    return W


@dataclass
class MwdnLevel:
    W_low: np.ndarray
    W_high: np.ndarray
    b_low: np.ndarray
    b_high: np.ndarray
    prior_W_low: np.ndarray
    prior_W_high: np.ndarray

    @property
    def input_len(self) -> int:
        return self.W_low.shape[1]


@dataclass
class MwdnStack:
    levels: list[MwdnLevel]
    filters: WaveletFilterPair = field(default_factory=db4_filters)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def input_len(self) -> int:
        return self.levels[0].input_len

    def parameters(self, prefix: str = "mwdn") -> dict[str, np.ndarray]:
        out = {}
        for i, lv in enumerate(self.levels):
            for name in ("W_low", "W_high", "b_low", "b_high"):
                out[f"{prefix}.{i}.{name}"] = getattr(lv, name)
        return out

    def priors(self, prefix: str = "mwdn") -> dict[str, np.ndarray]:
        out = {}
        for i, lv in enumerate(self.levels):
            out[f"{prefix}.{i}.prior_W_low"] = lv.prior_W_low
            out[f"{prefix}.{i}.prior_W_high"] = lv.prior_W_high
        return out


def build_stack(
    series_len: int,
    n_levels: int,
    filters: WaveletFilterPair | None = None,
    eps_scale: float = 1e-4,
    seed: int = 0,
    prefix: str = "mwdn",
    bias_scale: float = BIAS_INIT,
) -> MwdnStack:
    filters = filters or db4_filters()
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    if 2**n_levels > series_len:
        raise ValueError(f"series length {series_len} too short for {n_levels} levels")
    levels = []
    for i, P in enumerate(halved_lengths(series_len, n_levels)[:-1]):
        if P < filters.size:
            warnings.warn(
                f"level {i + 1} input length {P} is shorter than the filter ({filters.size}); "
                "truncated rows dominate",
                stacklevel=2,
            )
        name = f"{prefix}.{i}"
        levels.append(
            MwdnLevel(
                W_low=init_weight_matrix(P, filters.low, eps_scale, rng_stream(seed, name + ".W_low")),
                W_high=init_weight_matrix(P, filters.high, eps_scale, rng_stream(seed, name + ".W_high")),
                b_low=rng_stream(seed, name + ".b_low").uniform(-bias_scale, bias_scale, size=P),
                b_high=rng_stream(seed, name + ".b_high").uniform(-bias_scale, bias_scale, size=P),
                prior_W_low=prior_matrix(P, filters.low),
                prior_W_high=prior_matrix(P, filters.high),
            )
        )
    return MwdnStack(levels, filters)


def _pool(a: np.ndarray) -> np.ndarray:
    a = even_pad(a)
    return 0.5 * (a[..., 0::2] + a[..., 1::2])


def _pool_backward(g: np.ndarray, length: int) -> np.ndarray:
    ga = np.repeat(0.5 * g, 2, axis=-1)
    if ga.shape[-1] != length:
        # undo the repeated final element of even-padding
        ga[..., length - 1] += ga[..., length]
        ga = ga[..., :length]
    return ga


def mwdn_forward(x, stack: MwdnStack):
    """Decompose ``x`` (shape ``(..., P)``) through every level.

    Returns the sub-series and a cache holding each level's input and
    pre-activations (``cache[i]["z_low"]`` etc.) for the backward pass.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != stack.input_len:
        raise ValueError(f"input length {x.shape[-1]} != mWDN input length {stack.input_len}")
    out = SubSeriesSet(high=[], lows=[])
    cache = []
    low = x
    for lv in stack.levels:
        z_low = low @ lv.W_low.T + lv.b_low
        z_high = low @ lv.W_high.T + lv.b_high
        a_low = sigmoid(z_low)
        a_high = sigmoid(z_high)
        cache.append({"input": low, "z_low": z_low, "z_high": z_high, "a_low": a_low, "a_high": a_high})
        out.high.append(_pool(a_high))
        low = _pool(a_low)
        out.lows.append(low)
    return out, cache


def regularization_penalty(stack: MwdnStack, alpha: float, beta: float) -> float:
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be non-negative")
    total = 0.0
    for lv in stack.levels:
        total += alpha * float(np.sum((lv.W_low - lv.prior_W_low) ** 2))
        total += beta * float(np.sum((lv.W_high - lv.prior_W_high) ** 2))
    return total


def mwdn_backward(
    cache,
    upstream_high,
    upstream_low,
    stack: MwdnStack,
    alpha: float = 0.0,
    beta: float = 0.0,
    prefix: str = "mwdn",
) -> LayerGradients:
    """Backpropagate per-sub-series gradients to the weights and the input.

    ``upstream_high[i]`` and ``upstream_low[i]`` are the gradients w.r.t.
    ``x^h(i+1)`` and ``x^l(i+1)``; pass zeros for unused sub-series. The
    prior-anchoring penalty gradient is added to the weight gradients.
    ``intermediate`` holds the total gradient reaching every sub-series.
    """
    n = stack.n_levels
    if upstream_high is None or upstream_low is None or len(upstream_high) != n or len(upstream_low) != n:
        raise ValueError(f"need one upstream gradient per sub-series ({n} high, {n} low)")
    if any(u is None for u in (*upstream_high, *upstream_low)):
        raise ValueError("missing upstream gradient")
    grads = LayerGradients()
    carried = None
    for i in reversed(range(n)):
        lv, c = stack.levels[i], cache[i]
        g_low = np.asarray(upstream_low[i], dtype=np.float64)
        if carried is not None:
            g_low = g_low + carried
        g_high = np.asarray(upstream_high[i], dtype=np.float64)
        grads.intermediate[f"low.{i + 1}"] = g_low
        grads.intermediate[f"high.{i + 1}"] = g_high
        P = lv.input_len
        gz_low = _pool_backward(g_low, P) * c["a_low"] * (1.0 - c["a_low"])
        gz_high = _pool_backward(g_high, P) * c["a_high"] * (1.0 - c["a_high"])
        x_prev = c["input"].reshape(-1, P)
        gzl = gz_low.reshape(-1, P)
        gzh = gz_high.reshape(-1, P)
        name = f"{prefix}.{i}"
        grads.params[name + ".W_low"] = gzl.T @ x_prev + 2.0 * alpha * (lv.W_low - lv.prior_W_low)
        grads.params[name + ".W_high"] = gzh.T @ x_prev + 2.0 * beta * (lv.W_high - lv.prior_W_high)
        grads.params[name + ".b_low"] = gzl.sum(axis=0)
        grads.params[name + ".b_high"] = gzh.sum(axis=0)
        carried = gz_low @ lv.W_low + gz_high @ lv.W_high
    grads.input = carried
    return grads
