"""Gradient-based importance spectra for inputs and mWDN sub-series.

The sensitivity of a model output ``M`` to a quantity ``a`` is ``|dM/da|``,
computed by backpropagation; the importance is its mean over a dataset.
Classifiers are scalarized as the final-stage probability of each sample's
true class, forecasters use the prediction itself.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .mlstm import MlstmModel, mlstm_backward, mlstm_forward
from .rcf import RcfModel, one_hot, rcf_backward, rcf_forward

BRANCHES = ("low", "high")


@dataclass
class ImportanceSpectrum:
    values: np.ndarray
    source: str = "input"
    axis_label: str = "position"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    def __len__(self):
        return self.values.size

    def normalized(self) -> np.ndarray:
        lo, hi = self.values.min(), self.values.max()
        if hi - lo <= 0:
            return np.zeros_like(self.values)
        return (self.values - lo) / (hi - lo)


def gradients(model, X, labels=None):
    """Per-sample gradients of the scalarized output.

    ``model`` is an :class:`RcfModel`, an :class:`MlstmModel`, or any callable
    ``model(X, labels) -> LayerGradients`` whose ``input`` and
    ``intermediate`` hold per-sample gradients.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("empty dataset")
    if isinstance(model, RcfModel):
        if labels is None:
            raise ValueError("classification importance needs the true labels")
        c_hats, cache = rcf_forward(model, X)
        g = [np.zeros_like(c) for c in c_hats]
        g[-1] = one_hot(labels, model.class_count)
        return rcf_backward(model, cache, g)
    if isinstance(model, MlstmModel):
        y, _, cache = mlstm_forward(model, X)
        return mlstm_backward(model, cache, np.ones_like(y))
    if callable(model):
        return model(X, labels)
    raise TypeError(f"unsupported model {type(model).__name__}")


def input_importance(model, X, labels=None) -> ImportanceSpectrum:
    g = gradients(model, X, labels)
    return ImportanceSpectrum(np.abs(g.input).mean(axis=0), "input", "position")


def layer_importance(model, X, level: int, branch: str, labels=None) -> ImportanceSpectrum:
    """Importance of each position of ``x^{branch}(level)`` (levels are 1-based)."""
    if branch not in BRANCHES:
        raise ValueError(f"branch must be one of {BRANCHES}")
    n_levels = getattr(model, "n_levels", None)
    if level < 1 or (n_levels is not None and level > n_levels):
        raise ValueError(f"level {level} outside 1..{n_levels}")
    g = gradients(model, X, labels)
    key = f"{branch}.{level}"
    if key not in g.intermediate:
        raise ValueError(f"model exposes no sub-series {key}")
    return ImportanceSpectrum(np.abs(g.intermediate[key]).mean(axis=0), f"layer({level},{branch})", "layer position")


def all_layer_importances(model, X, labels=None) -> dict[tuple[int, str], ImportanceSpectrum]:
    g = gradients(model, X, labels)
    out = {}
    for level in range(1, model.n_levels + 1):
        for branch in BRANCHES:
            vals = np.abs(g.intermediate[f"{branch}.{level}"]).mean(axis=0)
            out[(level, branch)] = ImportanceSpectrum(vals, f"layer({level},{branch})", "layer position")
    return out


def resize_spectrum(s: ImportanceSpectrum, target_len: int) -> ImportanceSpectrum:
    """Nearest-neighbour stretch: ``out[j] = s[floor(j * len / target_len)]``."""
    if len(s) == 0:
        raise ValueError("empty spectrum")
    if target_len < 1:
        raise ValueError("target_len must be >= 1")
    idx = (np.arange(target_len) * len(s)) // target_len
    return ImportanceSpectrum(s.values[idx], s.source, s.axis_label)


def spectrum_csv(s: ImportanceSpectrum) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["position", "importance", "importance_normalized"])
    for i, (v, n) in enumerate(zip(s.values, s.normalized())):
        w.writerow([i, repr(float(v)), repr(float(n))])
    return buf.getvalue()
