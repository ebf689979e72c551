"""Seeded synthetic datasets for experiments and smoke tests."""
from __future__ import annotations

import numpy as np

from .data_io import LabeledDataset, TimeSeries


def high_frequency_classes(
    n_series: int = 400,
    length: int = 64,
    seed: int = 0,
    amplitude: float = 1.0,
    noise: float = 0.1,
    train_fraction: float = 0.5,
) -> LabeledDataset:
    """Two balanced classes that differ only by a short-period sinusoid.

    Every series carries the same random low-frequency background (periods
    ``length``, ``length/2`` and ``length/3`` with Gaussian amplitudes and
    random phases). Class 1 additionally contains a sinusoid with a period
    drawn from [2.2, 3.5] samples and a random phase.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    labels = np.arange(n_series) % 2
    rng.shuffle(labels)
    X = np.zeros((n_series, length))
    for period in (length, length / 2, length / 3):
        amp = rng.normal(0.0, 1.0, (n_series, 1))
        phase = rng.uniform(0.0, 2 * np.pi, (n_series, 1))
        X += amp * np.sin(2 * np.pi * t / period + phase)
    period = rng.uniform(2.2, 3.5, (n_series, 1))
    phase = rng.uniform(0.0, 2 * np.pi, (n_series, 1))
    X += labels[:, None] * amplitude * np.sin(2 * np.pi * t / period + phase)
    X += rng.normal(0.0, noise, X.shape)

    n_train = int(round(n_series * train_fraction))
    series = [TimeSeries(x, int(c)) for x, c in zip(X, labels)]
    return LabeledDataset(series[:n_train], series[n_train:], 2, length, [0, 1])


def sinusoid_frequency_classes(
    n_series: int = 200,
    length: int = 64,
    periods=(16.0, 4.0),
    noise: float = 0.1,
    seed: int = 0,
    train_fraction: float = 1.0,
) -> LabeledDataset:
    """Class ``k`` is a unit sinusoid of period ``periods[k]`` with a random phase, plus noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    labels = np.arange(n_series) % len(periods)
    rng.shuffle(labels)
    phase = rng.uniform(0.0, 2 * np.pi, (n_series, 1))
    X = np.sin(2 * np.pi * t / np.asarray(periods, dtype=np.float64)[labels][:, None] + phase)
    X += rng.normal(0.0, noise, X.shape)
    n_train = int(round(n_series * train_fraction))
    series = [TimeSeries(x, int(c)) for x, c in zip(X, labels)]
    return LabeledDataset(series[:n_train], series[n_train:], len(periods), length, list(range(len(periods))))


def two_period_mixture(
    n_samples: int = 3000, periods=(24, 480), noise: float = 0.1, seed: int = 0
) -> np.ndarray:
    """Sum of unit sinusoids with random phases plus Gaussian noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(n_samples)
    x = sum(np.sin(2 * np.pi * t / p + rng.uniform(0.0, 2 * np.pi)) for p in periods)
    return x + rng.normal(0.0, noise, n_samples)


def ar1(n_samples: int = 2000, phi: float = 0.8, sigma: float = 1.0, seed: int = 0) -> np.ndarray:
    if not abs(phi) < 1:
        raise ValueError("|phi| must be < 1 for a stationary process")
    rng = np.random.default_rng(seed)
    eps = rng.normal(0.0, sigma, n_samples)
    x = np.empty(n_samples)
    x[0] = eps[0] / np.sqrt(1 - phi**2)
    for i in range(1, n_samples):
        x[i] = phi * x[i - 1] + eps[i]
    return x
