"""Fixed-parameter multilevel discrete wavelet decomposition.

This is the linear reference that mWDN is initialized from. It uses the same
conventions as the trainable network so the two can be compared exactly:

* filters are applied as ``a[n] = sum_k x[n + k] * f[k]`` with zero-extension
  past the end of the series;
* odd-length intermediate results are padded by repeating the final element;
* down-sampling averages adjacent pairs instead of decimating.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DB4_LOW = (-0.0106, 0.0329, 0.0308, -0.187, -0.028, 0.6309, 0.7148, 0.2304)
DB4_HIGH = (-0.2304, 0.7148, -0.6309, -0.028, 0.187, 0.0308, -0.0329, -0.0106)


@dataclass(frozen=True)
class WaveletFilterPair:
    low: tuple[float, ...]
    high: tuple[float, ...]

    def __post_init__(self):
        if len(self.low) != len(self.high):
            raise ValueError("low and high filters must have equal length")
        if len(self.low) < 2:
            raise ValueError("filters need at least 2 coefficients")

    @property
    def size(self) -> int:
        return len(self.low)


@dataclass
class SubSeriesSet:
    """Level-N decomposition ``{x^h(1), ..., x^h(N), x^l(N)}``.

    ``lows`` keeps every level's low-frequency output (the classifier stages
    of RCF consume ``x^l(i)`` at every level); ``low_final`` is ``lows[-1]``.
    Arrays may carry a leading batch axis.
    """

    high: list[np.ndarray]
    lows: list[np.ndarray] = field(default_factory=list)

    @property
    def low_final(self) -> np.ndarray:
        return self.lows[-1]

    @property
    def level_count(self) -> int:
        return len(self.high)

    def components(self) -> list[np.ndarray]:
        """Members of X(N) ordered from high to low frequency."""
        return [*self.high, self.low_final]


def db4_filters() -> WaveletFilterPair:
    return WaveletFilterPair(DB4_LOW, DB4_HIGH)


def _filter_tail(x: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    k = len(coeffs)
    padded = np.concatenate([x, np.zeros(x.shape[:-1] + (k - 1,))], axis=-1)
    windows = np.lib.stride_tricks.sliding_window_view(padded, k, axis=-1)[..., :n, :]
    return windows @ coeffs


def convolve_level(x_prev, filters: WaveletFilterPair) -> tuple[np.ndarray, np.ndarray]:
    """Apply the low/high filter pair along the last axis.

    Output has the same length as the input; windows running past the end see
    zeros, which reproduces the truncated bottom rows of the weight matrices.
    """
    x = np.asarray(x_prev, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ValueError("empty series")
    low = _filter_tail(x, np.asarray(filters.low, dtype=np.float64))
    high = _filter_tail(x, np.asarray(filters.high, dtype=np.float64))
    return low, high


def even_pad(a: np.ndarray) -> np.ndarray:
    """Repeat the final element along the last axis if its length is odd."""
    if a.shape[-1] % 2 == 0:
        return a
    return np.concatenate([a, a[..., -1:]], axis=-1)


def avg_downsample(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] % 2 != 0:
        raise ValueError("unpadded odd-length input")
    return 0.5 * (a[..., 0::2] + a[..., 1::2])


def halved_lengths(length: int, n_levels: int) -> list[int]:
    """Input length seen by each level, starting with ``length`` itself."""
    lengths = [length]
    for _ in range(n_levels):
        lengths.append((lengths[-1] + 1) // 2)
    return lengths


def mdwd_decompose(x, n_levels: int, filters: WaveletFilterPair | None = None) -> SubSeriesSet:
    filters = filters or db4_filters()
    x = np.asarray(x, dtype=np.float64)
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    if x.ndim == 0 or x.shape[-1] < 2**n_levels:
        raise ValueError(f"insufficient length for {n_levels} levels")
    out = SubSeriesSet(high=[], lows=[])
    low = x
    for _ in range(n_levels):
        a_low, a_high = convolve_level(low, filters)
        out.high.append(avg_downsample(even_pad(a_high)))
        low = avg_downsample(even_pad(a_low))
        out.lows.append(low)
    return out
