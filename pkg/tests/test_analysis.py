import math

import numpy as np
import pytest

import oracles
from mwdnet import nn
from mwdnet.analysis import (
    ImportanceSpectrum,
    all_layer_importances,
    gradients,
    input_importance,
    layer_importance,
    resize_spectrum,
    spectrum_csv,
)
from mwdnet.metrics import EvalReport, error_rate, mape, mpce, rmse
from mwdnet.mlstm import build_mlstm, mlstm_forward, subnet_forward
from mwdnet.mwdn import mwdn_forward
from mwdnet.oracle import SubSeriesSet, even_pad
from mwdnet.rcf import build_rcf, rcf_heads_forward, rcf_predict_proba


def _linear_model(w):
    w = np.asarray(w, dtype=np.float64)

    def model(X, labels=None):
        return nn.LayerGradients(input=np.broadcast_to(w, X.shape).copy())

    return model


def _rerun_from(stack, sub, level):
    """Recompute every sub-series deeper than ``level`` (1-based) from ``sub.lows[level-1]``."""
    def pool(a):
        a = even_pad(a)
        return 0.5 * (a[..., 0::2] + a[..., 1::2])

    high, lows = list(sub.high), list(sub.lows)
    low = lows[level - 1]
    for j in range(level, stack.n_levels):
        lv = stack.levels[j]
        high[j] = pool(nn.sigmoid(low @ lv.W_high.T + lv.b_high))
        low = pool(nn.sigmoid(low @ lv.W_low.T + lv.b_low))
        lows[j] = low
    return SubSeriesSet(high=high, lows=lows)


# input importance

def test_linear_model_importance_is_abs_coefficients():
    w = np.array([0.5, -2.0, 0.0, 3.25])
    X = np.random.default_rng(0).normal(size=(7, 4))
    s = input_importance(_linear_model(w), X)
    np.testing.assert_allclose(s.values, np.abs(w), rtol=0, atol=1e-10)


@pytest.mark.parametrize("kind", ["rcf", "mlstm"])
def test_duplicated_dataset_gives_identical_spectrum(kind):
    rng = np.random.default_rng(1)
    if kind == "rcf":
        model, X, y = build_rcf(32, 2, 2, seed=1), rng.normal(size=(5, 32)), rng.integers(0, 2, 5)
    else:
        model, X, y = build_mlstm(16, 2, 4, seed=1), rng.normal(size=(5, 16)), None
    once = input_importance(model, X, y)
    twice = input_importance(model, np.concatenate([X, X]), None if y is None else np.concatenate([y, y]))
    np.testing.assert_allclose(twice.values, once.values, rtol=1e-14, atol=0)


def _central_diff(f, x, h=1e-5):
    out = np.zeros(x.size)
    for j in range(x.size):
        e = np.zeros_like(x)
        e.flat[j] = h
        out[j] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def test_one_sample_spectrum_is_its_sensitivity():
    model = build_mlstm(16, 2, 4, seed=2)
    x = np.random.default_rng(2).normal(size=16)
    numeric = _central_diff(lambda v: float(mlstm_forward(model, v)[0]), x)
    s = input_importance(model, x[None])
    np.testing.assert_allclose(s.values, np.abs(numeric), rtol=1e-5, atol=1e-10)


@pytest.mark.parametrize("label", range(3))
def test_rcf_importance_uses_true_class_probability(label):
    model = build_rcf(32, 3, 2, seed=3)
    x = np.random.default_rng(3).normal(size=32)
    s = input_importance(model, x[None], [label])
    numeric = _central_diff(lambda v: rcf_predict_proba(model, v)[label], x)
    np.testing.assert_allclose(s.values, np.abs(numeric), rtol=1e-5, atol=1e-10)


def test_importance_errors():
    model = build_rcf(32, 2, 2)
    with pytest.raises(ValueError, match="empty"):
        input_importance(model, np.zeros((0, 32)), [])
    with pytest.raises(ValueError, match="labels"):
        input_importance(model, np.zeros((2, 32)))
    with pytest.raises(TypeError):
        gradients(object(), np.zeros((1, 4)))


# layer importance

@pytest.mark.parametrize("level, branch", [(1, "low"), (1, "high"), (2, "low"), (2, "high"), (3, "high")])
def test_rcf_layer_gradient_matches_downstream_fd(level, branch):
    rng = np.random.default_rng(level * 10 + len(branch))
    model = build_rcf(64, 2, 3, seed=4, eps_scale=0.05)
    X = rng.normal(size=(3, 64))
    y = np.array([0, 1, 1])
    sub, _ = mwdn_forward(X, model.mwdn)
    g = gradients(model, X, y).intermediate[f"{branch}.{level}"]

    def M(sub_mod):
        c_hats, _ = rcf_heads_forward(model, sub_mod)
        return c_hats[-1][np.arange(3), y].sum()

    target = sub.lows[level - 1] if branch == "low" else sub.high[level - 1]
    numeric = np.zeros_like(target)
    for idx in np.ndindex(target.shape):
        vals = []
        for sign in (1, -1):
            a = target.copy()
            a[idx] += sign * 1e-5
            mod = SubSeriesSet(high=list(sub.high), lows=list(sub.lows))
            if branch == "low":
                mod.lows[level - 1] = a
                mod = _rerun_from(model.mwdn, mod, level)
            else:
                mod.high[level - 1] = a
            vals.append(M(mod))
        numeric[idx] = (vals[0] - vals[1]) / 2e-5
    denom = np.maximum(np.maximum(np.abs(g), np.abs(numeric)), 1e-8)
    assert np.max(np.abs(g - numeric) / denom) < 1e-4


def test_mlstm_layer_gradient_matches_downstream_fd():
    rng = np.random.default_rng(5)
    model = build_mlstm(16, 2, 3, seed=5, eps_scale=0.05)
    for p in model.fusion.values():
        p += rng.normal(scale=0.5, size=p.shape)
    x = rng.normal(scale=2.0, size=(1, 16))
    sub, _ = mwdn_forward(x, model.mwdn)
    g = gradients(model, x).intermediate["high.1"]

    def M(h1):
        comps = [h1, sub.high[1], sub.lows[1]]
        outs = np.stack([subnet_forward(model.subnets[k], model.heads[k], c)[0] for k, c in enumerate(comps)], -1)
        return float((outs @ model.fusion["W"].T + model.fusion["b"]).sum())

    numeric = np.zeros(8)
    for j in range(8):
        e = np.zeros((1, 8))
        e[0, j] = 1e-5
        numeric[j] = (M(sub.high[0] + e) - M(sub.high[0] - e)) / 2e-5
    denom = np.maximum(np.maximum(np.abs(g[0]), np.abs(numeric)), 1e-8)
    assert np.max(np.abs(g[0] - numeric) / denom) < 1e-4


def test_layer_spectrum_lengths_and_sign():
    model = build_rcf(64, 2, 3, seed=6)
    X = np.random.default_rng(6).normal(size=(4, 64))
    y = np.array([0, 1, 0, 1])
    spectra = all_layer_importances(model, X, y)
    assert sorted(spectra) == [(lv, b) for lv in (1, 2, 3) for b in ("high", "low")]
    for (level, _), s in spectra.items():
        assert len(s) == 64 // 2**level
        assert np.all(s.values >= 0) and np.all(np.isfinite(s.values))
    one = layer_importance(model, X, 2, "high", y)
    np.testing.assert_array_equal(one.values, spectra[(2, "high")].values)


def test_layer_importance_constant_dataset_equals_single_sample():
    model = build_rcf(32, 2, 2, seed=7)
    x = np.random.default_rng(7).normal(size=32)
    single = layer_importance(model, x[None], 1, "low", [1])
    many = layer_importance(model, np.tile(x, (6, 1)), 1, "low", [1] * 6)
    np.testing.assert_allclose(many.values, single.values, rtol=1e-14, atol=0)


def test_layer_importance_rejects_bad_level_or_branch():
    model = build_rcf(32, 2, 2)
    X = np.zeros((1, 32))
    with pytest.raises(ValueError):
        layer_importance(model, X, 3, "low", [0])
    with pytest.raises(ValueError):
        layer_importance(model, X, 0, "low", [0])
    with pytest.raises(ValueError, match="branch"):
        layer_importance(model, X, 1, "mid", [0])


# resizing and export

def test_resize_examples():
    s = ImportanceSpectrum([0.2, 0.9, 0.4])
    assert resize_spectrum(s, 3).values.tolist() == [0.2, 0.9, 0.4]
    assert resize_spectrum(ImportanceSpectrum([1.0, 3.0]), 4).values.tolist() == [1, 1, 3, 3]
    out = resize_spectrum(ImportanceSpectrum(np.random.default_rng(0).random(19)), 150)
    assert len(out) == 150


@pytest.mark.parametrize("n, target", [(5, 17), (19, 150), (8, 8), (38, 152)])
def test_resize_preserves_extremes(n, target):
    s = ImportanceSpectrum(np.random.default_rng(n).random(n))
    out = resize_spectrum(s, target)
    assert out.values.max() == s.values.max()
    assert out.values.min() == s.values.min()


def test_resize_errors():
    with pytest.raises(ValueError, match="empty"):
        resize_spectrum(ImportanceSpectrum([]), 4)
    with pytest.raises(ValueError):
        resize_spectrum(ImportanceSpectrum([1.0]), 0)


def test_normalized_and_csv():
    s = ImportanceSpectrum([2.0, 4.0, 3.0])
    assert s.normalized().tolist() == [0.0, 1.0, 0.5]
    assert ImportanceSpectrum([1.0, 1.0]).normalized().tolist() == [0.0, 0.0]
    text = spectrum_csv(s)
    lines = text.splitlines()
    assert lines[0] == "position,importance,importance_normalized"
    assert lines[1:] == ["0,2.0,0.0", "1,4.0,1.0", "2,3.0,0.5"]
    assert text.endswith("\n")


# metrics

def test_mpce_worked_example():
    assert mpce([(0.1, 2), (0.3, 3)]) == pytest.approx(oracles.FROZEN["mpce_worked"], abs=1e-12)
    assert abs(mpce([(0.1, 2), (0.3, 3)]) - 0.075) <= 1e-12
    assert mpce([(0.0, 2), (0.0, 5)]) == 0.0


@pytest.mark.parametrize("c", [2, 3, 7])
def test_mpce_equal_class_counts(c):
    errs = np.random.default_rng(c).random(9)
    assert abs(mpce([(e, c) for e in errs]) - errs.mean() / c) <= 1e-15


def test_mpce_errors():
    with pytest.raises(ValueError, match="empty"):
        mpce([])
    with pytest.raises(ValueError):
        mpce([(0.1, 1)])


def test_error_rate():
    assert error_rate([0, 1, 1, 0], [0, 1, 0, 0]) == 0.25
    assert error_rate([2, 2], [2, 2]) == 0.0
    with pytest.raises(ValueError):
        error_rate([], [])
    with pytest.raises(ValueError):
        error_rate([0, 1], [0])


def test_mape_rmse_worked_example():
    assert abs(mape([110, 180], [100, 200]) - 10.0) <= 1e-12
    assert abs(rmse([110, 180], [100, 200]) - math.sqrt(250)) <= 1e-12
    assert rmse([110, 180], [100, 200]) == pytest.approx(oracles.FROZEN["rmse_worked"], abs=1e-12)


def test_mape_rmse_perfect_and_symmetric():
    y = np.array([1.5, -2.0, 3.0])
    assert mape(y, y) == 0 and rmse(y, y) == 0
    r = np.array([0.3, -0.7, 1.1])
    assert rmse(y + r, y) == pytest.approx(rmse(y - r, y), abs=1e-15)


def test_mape_rmse_errors():
    with pytest.raises(ValueError, match="zero"):
        mape([1.0, 2.0], [1.0, 0.0])
    assert rmse([1.0, 2.0], [1.0, 0.0]) == pytest.approx(math.sqrt(2))
    with pytest.raises(ValueError):
        rmse([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        mape([], [])


def test_eval_report_drops_unset_fields():
    assert EvalReport(error_rate=0.1, mpce=0.05).to_dict() == {"error_rate": 0.1, "mpce": 0.05}
