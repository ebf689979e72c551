"""Classification and forecasting metrics."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class EvalReport:
    error_rate: float | None = None
    mpce: float | None = None
    mape_percent: float | None = None
    rmse: float | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def error_rate(predictions, labels) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.size == 0:
        raise ValueError("empty predictions")
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels differ in shape")
    return float(np.mean(predictions != labels))


def mpce(per_dataset) -> float:
    """Mean per-class error over ``(error_rate, class_count)`` pairs."""
    per_dataset = list(per_dataset)
    if not per_dataset:
        raise ValueError("empty dataset list")
    total = 0.0
    for e, c in per_dataset:
        if c < 2:
            raise ValueError("class_count must be >= 2")
        total += e / c
    return total / len(per_dataset)


def mape(y_hat, y) -> float:
    """Mean absolute percentage error in percent; every actual value must be non-zero."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise ValueError("length mismatch")
    if y.size == 0:
        raise ValueError("empty input")
    if np.any(y == 0):
        raise ValueError("MAPE undefined for zero actual values")
    return float(np.mean(np.abs(y_hat - y) / y) * 100.0)


def rmse(y_hat, y) -> float:
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise ValueError("length mismatch")
    if y.size == 0:
        raise ValueError("empty input")
    return float(np.sqrt(np.mean((y_hat - y) ** 2)))
