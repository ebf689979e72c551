import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from mwdnet.cli import main
from mwdnet.data_io import TimeSeries, load_checkpoint, write_series_csv, write_ucr
from mwdnet.mwdn import build_stack
from mwdnet.synthetic import sinusoid_frequency_classes, two_period_mixture

GUNPOINT = Path(__file__).parent / "data" / "GunPoint"


def _read_matrix(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)


def _snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(Path(directory).iterdir())}


@pytest.fixture(scope="module")
def ucr_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("ucr")
    ds = sinusoid_frequency_classes(n_series=24, length=32, seed=5, train_fraction=0.5)
    # labels stored as 1/2 to exercise the remapping
    write_ucr([TimeSeries(s.values, s.label + 1) for s in ds.train], d / "toy_TRAIN.csv")
    write_ucr([TimeSeries(s.values, s.label + 1) for s in ds.test], d / "toy_TEST.csv")
    return d / "toy_TRAIN.csv", d / "toy_TEST.csv"


@pytest.fixture(scope="module")
def series_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("series") / "mix.csv"
    write_series_csv(two_period_mixture(n_samples=240, periods=(8, 40), seed=1), path)
    return path


@pytest.fixture(scope="module")
def rcf_checkpoint(ucr_files, tmp_path_factory):
    out = tmp_path_factory.mktemp("rcf")
    train, test = ucr_files
    assert main(["train-rcf", str(train), str(test), "--epochs", "3", "--levels", "2", "--out", str(out)]) == 0
    return out / "model.json"


@pytest.fixture(scope="module")
def mlstm_checkpoint(series_file, tmp_path_factory):
    out = tmp_path_factory.mktemp("mlstm")
    args = ["train-mlstm", str(series_file), "--window", "16", "--stride", "4", "--lstm-hidden", "3",
            "--epochs", "2", "--pretrain-epochs", "1", "--out", str(out)]
    assert main(args) == 0
    return out / "model.json"


# exit codes

def test_missing_input_is_usage_error(tmp_path, capsys):
    assert main(["decompose", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err


def test_invalid_learning_rate_is_usage_error(ucr_files, tmp_path, capsys):
    assert main(["train-rcf", str(ucr_files[0]), "--lr", "0", "--out", str(tmp_path)]) == 2
    assert "learning rate" in capsys.readouterr().err


def test_unknown_subcommand_is_usage_error(capsys):
    assert main(["bogus"]) == 2


def test_malformed_data_is_runtime_failure(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,0.5,0.25\n2,abc,0.1\n", encoding="utf-8")
    assert main(["train-rcf", str(bad), "--epochs", "1", "--out", str(tmp_path / "o")]) == 1
    assert "line 2" in capsys.readouterr().err


def test_corrupt_checkpoint_is_runtime_failure(tmp_path, ucr_files):
    ck = tmp_path / "model.json"
    ck.write_text('{"kind": "rcf"', encoding="utf-8")
    assert main(["evaluate", str(ck), str(ucr_files[1])]) == 1


def test_bad_config_file_is_usage_error(tmp_path, ucr_files):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("[1, 2]", encoding="utf-8")
    assert main(["train-rcf", str(ucr_files[0]), "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mwdnet.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "decompose" in proc.stdout


# decompose

def test_decompose_writes_every_component(tmp_path):
    out = tmp_path / "d"
    assert main(["decompose", str(GUNPOINT / "GunPoint_TRAIN.txt"), "--levels", "3", "--out", str(out)]) == 0
    names = sorted(p.name for p in out.glob("x_*.csv"))
    assert names == ["x_h1.csv", "x_h2.csv", "x_h3.csv", "x_l3.csv"]
    assert [_read_matrix(out / n).shape for n in names] == [(50, 76), (50, 38), (50, 19), (50, 19)]


@pytest.mark.parametrize("levels", [1, 2, 3])
def test_decompose_init_at_zero_eps_matches_oracle(tmp_path, levels):
    src = tmp_path / "s.csv"
    write_series_csv(np.random.default_rng(levels).normal(size=64), src)
    for mode in ("oracle", "mwdn-init"):
        args = ["decompose", str(src), "--mode", mode, "--eps", "0", "--levels", str(levels), "--out", str(tmp_path / mode)]
        assert main(args) == 0
    for i in range(1, levels + 1):
        for branch in ("low", "high"):
            a = _read_matrix(tmp_path / "oracle" / f"pre_{branch}_{i}.csv")
            b = _read_matrix(tmp_path / "mwdn-init" / f"pre_{branch}_{i}.csv")
            np.testing.assert_allclose(b, a, rtol=0, atol=1e-10)


def test_decompose_rejects_too_many_levels(tmp_path):
    src = tmp_path / "s.csv"
    write_series_csv(np.arange(6.0), src)
    assert main(["decompose", str(src), "--levels", "3", "--out", str(tmp_path / "o")]) == 2


# train-rcf

def test_train_rcf_zero_epochs(ucr_files, tmp_path):
    out = tmp_path / "o"
    assert main(["train-rcf", str(ucr_files[0]), str(ucr_files[1]), "--epochs", "0", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["runs"]) == 1 and summary["runs"][0]["epochs_run"] == 0
    assert (out / "metrics.csv").read_text().splitlines() == ["run,epoch,train_loss,train_err,test_err"]
    assert 0.0 <= summary["mean_error_rate"] <= 1.0


def test_train_rcf_repeats_use_consecutive_seeds(ucr_files, tmp_path):
    out = tmp_path / "o"
    args = ["train-rcf", str(ucr_files[0]), "--epochs", "2", "--repeats", "2", "--seed", "7", "--out", str(out)]
    assert main(args) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert [r["seed"] for r in summary["runs"]] == [7, 8]
    assert summary["evaluated_on"] == "train"
    rows = (out / "metrics.csv").read_text().splitlines()[1:]
    assert [r.split(",")[:2] for r in rows] == [["0", "1"], ["0", "2"], ["1", "1"], ["1", "2"]]


def test_train_rcf_frozen_keeps_prior(ucr_files, tmp_path):
    out = tmp_path / "o"
    args = ["train-rcf", str(ucr_files[0]), "--epochs", "2", "--levels", "2", "--freeze-mwdn", "--out", str(out)]
    assert main(args) == 0
    model = load_checkpoint(out / "model.json", "rcf")
    fresh = build_stack(32, 2, seed=0)
    for k, v in fresh.parameters().items():
        assert np.array_equal(model.mwdn.parameters()[k], v)


def test_config_file_and_flag_precedence(ucr_files, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 1, "learning_rate": 0.01, "hidden": 5}), encoding="utf-8")
    out = tmp_path / "o"
    args = ["train-rcf", str(ucr_files[0]), "--config", str(cfg), "--lr", "0.002", "--out", str(out)]
    assert main(args) == 0
    stored = json.loads((out / "model.json").read_text())["hyperparameters"]["train_config"]
    assert stored["epochs"] == 1 and stored["hidden"] == 5 and stored["learning_rate"] == 0.002


# train-mlstm

def test_train_mlstm_without_pretraining(series_file, tmp_path):
    out = tmp_path / "o"
    args = ["train-mlstm", str(series_file), "--window", "16", "--lstm-hidden", "3", "--epochs", "2",
            "--pretrain-epochs", "0", "--out", str(out)]
    assert main(args) == 0
    rows = (out / "metrics.csv").read_text().splitlines()
    assert rows[0] == "epoch,phase,loss,val_mape,val_rmse"
    assert [r.split(",")[1] for r in rows[1:]] == ["finetune", "finetune"]
    report = json.loads((out / "report.json").read_text())
    # last 20% of 240 samples, windows of 16 with horizon 1
    assert report["test_windows"] == 48 - 16
    assert report["rmse"] >= 0


def test_train_mlstm_window_longer_than_split(series_file, tmp_path):
    args = ["train-mlstm", str(series_file), "--window", "64", "--out", str(tmp_path)]
    assert main(args) == 2


# evaluate

def test_evaluate_classifier_prints_json(rcf_checkpoint, ucr_files, tmp_path, capsys):
    assert main(["evaluate", str(rcf_checkpoint), str(ucr_files[1]), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    result = json.loads(out.strip().splitlines()[-1])
    assert set(result) == {"error_rate", "mpce"}
    assert result["mpce"] == pytest.approx(result["error_rate"] / 2, abs=1e-15)
    assert json.loads((tmp_path / "evaluation.json").read_text()) == result


def test_evaluate_forecaster(mlstm_checkpoint, series_file, capsys):
    assert main(["evaluate", str(mlstm_checkpoint), str(series_file)]) == 0
    result = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert set(result) == {"mape_percent", "rmse"}


def test_evaluate_unknown_label_fails(rcf_checkpoint, tmp_path):
    bad = tmp_path / "t.csv"
    write_ucr([TimeSeries(np.zeros(32), 9)], bad)
    assert main(["evaluate", str(rcf_checkpoint), str(bad)]) == 1


# importance

def test_importance_layers(tmp_path):
    train = GUNPOINT / "GunPoint_TRAIN.txt"
    model_dir, out = tmp_path / "m", tmp_path / "imp"
    assert main(["train-rcf", str(train), "--epochs", "1", "--levels", "3", "--out", str(model_dir)]) == 0
    assert main(["importance", str(model_dir / "model.json"), str(train), "--target", "layers", "--out", str(out)]) == 0
    files = sorted(p.name for p in out.iterdir())
    assert len(files) == 7 and "input.csv" in files
    for name in files:
        lines = (out / name).read_text().splitlines()
        assert len(lines) == 1 + 152
        values = [float(ln.split(",")[1]) for ln in lines[1:]]
        assert min(values) >= 0


def test_importance_forecaster_input_only(mlstm_checkpoint, series_file, tmp_path):
    assert main(["importance", str(mlstm_checkpoint), str(series_file), "--out", str(tmp_path)]) == 0
    assert [p.name for p in tmp_path.iterdir()] == ["input.csv"]
    assert len((tmp_path / "input.csv").read_text().splitlines()) == 17


# determinism

def test_repeated_commands_are_byte_identical(ucr_files, series_file, tmp_path):
    runs = {
        "decompose": ["decompose", str(ucr_files[0]), "--mode", "mwdn-init", "--seed", "3"],
        "rcf": ["train-rcf", str(ucr_files[0]), str(ucr_files[1]), "--epochs", "2", "--seed", "3"],
        "mlstm": ["train-mlstm", str(series_file), "--window", "16", "--stride", "4", "--lstm-hidden", "3",
                  "--epochs", "2", "--pretrain-epochs", "1", "--seed", "3"],
    }
    for name, args in runs.items():
        a, b = tmp_path / f"{name}_a", tmp_path / f"{name}_b"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert _snapshot(a) == _snapshot(b), name
