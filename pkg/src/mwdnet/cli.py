"""Command-line front end: decompose, train-rcf, train-mlstm, evaluate, importance.

Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage error or a
missing input file.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis
from .config import TrainConfig, default_levels
from .data_io import (
    CheckpointError,
    DataFormatError,
    atomic_write_text,
    chronological_split,
    load_labeled_dataset,
    load_series_csv,
    load_ucr,
    pad_to_pow2_blocks,
    read_checkpoint,
    read_ucr_raw,
    save_checkpoint,
    sliding_windows,
    znormalize,
)
from .metrics import EvalReport, error_rate, mape, rmse
from .mlstm import FINETUNE_EPOCHS, MlstmModel, predict, train_mlstm
from .mwdn import BIAS_INIT, build_stack, mwdn_forward
from .oracle import convolve_level, db4_filters, mdwd_decompose
from .rcf import RcfModel, rcf_predict, train_rcf

log = logging.getLogger("mwdnet")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

# flag destination -> TrainConfig field
CONFIG_FLAGS = {
    "seed": "seed",
    "levels": "n_levels",
    "alpha": "alpha",
    "beta": "beta",
    "lr": "learning_rate",
    "optimizer": "optimizer",
    "momentum": "momentum",
    "epochs": "epochs",
    "batch": "batch_size",
    "eps": "eps_scale",
    "freeze_mwdn": "freeze_mwdn",
    "patience": "patience",
    "psi": "psi_kind",
    "hidden": "hidden",
    "lstm_hidden": "lstm_hidden",
    "window": "window",
    "horizon": "horizon",
    "stride": "stride",
    "pretrain_epochs": "pretrain_epochs",
}


class UsageError(Exception):
    pass


# --- output helpers --------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _matrix_csv(M) -> str:
    M = np.atleast_2d(M)
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in M)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return None if not math.isfinite(obj) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _json_text(obj) -> str:
    return json.dumps(_json_safe(obj), sort_keys=True) + "\n"


def _require_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    return p


def _build_config(args, **defaults) -> TrainConfig:
    """Command defaults, then the JSON config file, then explicit flags."""
    values = dict(defaults)
    if getattr(args, "config", None):
        cfg_path = _require_file(args.config)
        try:
            loaded = json.loads(cfg_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.config}: invalid JSON ({exc})") from exc
        if not isinstance(loaded, dict):
            raise UsageError(f"{args.config}: config must be a JSON object")
        values.update(loaded)
    for dest, field_name in CONFIG_FLAGS.items():
        v = getattr(args, dest, None)
        if v is not None:
            values[field_name] = v
    try:
        return TrainConfig.from_dict(values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc


def _read_series_matrix(path) -> np.ndarray:
    """Rows of a UCR file (labels dropped) or a single-column series CSV as one row."""
    first = next((ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()), "")
    if first.lower() == "value" or len(first.replace("\t", ",").replace(" ", ",").split(",")) == 1:
        return load_series_csv(path)[None, :]
    return read_ucr_raw(path)[1]


# --- decompose -------------------------------------------------------------


def cmd_decompose(args) -> int:
    X = _read_series_matrix(_require_file(args.input))
    L = X.shape[1]
    n_levels = args.levels or default_levels(L)
    eps = 1e-4 if args.eps is None else args.eps
    if eps < 0:
        raise UsageError("--eps must be non-negative")
    if L < 2**n_levels:
        raise UsageError(f"series length {L} too short for {n_levels} levels")
    X = np.stack([pad_to_pow2_blocks(x, n_levels) for x in X])
    out = Path(args.out)
    filters = db4_filters()

    oracle = mdwd_decompose(X, n_levels, filters)
    if args.mode == "oracle":
        sub = oracle
        level_inputs = [X] + oracle.lows[:-1]
        pre = [convolve_level(x, filters) for x in level_inputs]
    else:
        stack = build_stack(X.shape[1], n_levels, filters, eps, args.seed or 0,
                            bias_scale=BIAS_INIT if eps > 0 else 0.0)
        sub, _ = mwdn_forward(X, stack)
        # each level is fed the oracle's input for that level so the two modes line up level by level
        level_inputs = [X] + oracle.lows[:-1]
        pre = [(x @ lv.W_low.T + lv.b_low, x @ lv.W_high.T + lv.b_high) for x, lv in zip(level_inputs, stack.levels)]

    for i, h in enumerate(sub.high, start=1):
        atomic_write_text(out / f"x_h{i}.csv", _matrix_csv(h))
    atomic_write_text(out / f"x_l{n_levels}.csv", _matrix_csv(sub.low_final))
    for i, (zl, zh) in enumerate(pre, start=1):
        atomic_write_text(out / f"pre_low_{i}.csv", _matrix_csv(zl))
        atomic_write_text(out / f"pre_high_{i}.csv", _matrix_csv(zh))
    print(f"wrote {n_levels + 1} sub-series files and {2 * n_levels} pre-activation files to {out}")
    return EXIT_OK


# --- train-rcf -------------------------------------------------------------


def cmd_train_rcf(args) -> int:
    train_path = _require_file(args.train)
    test_path = _require_file(args.test) if args.test else None
    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    config = _build_config(args)
    raw_len = read_ucr_raw(train_path)[1].shape[1]
    n_levels = config.n_levels or default_levels(raw_len)
    config = replace(config, n_levels=n_levels)
    ds = load_labeled_dataset(train_path, test_path, n_levels)

    out = Path(args.out)
    rows, runs = [], []
    for r in range(args.repeats):
        cfg = replace(config, seed=config.seed + r)
        model, history = train_rcf(ds, cfg)
        if history:
            for rec in history:
                rows.append([r, rec["epoch"], rec["train_loss"], rec["train_err"], rec.get("test_err", float("nan"))])
        eval_X, eval_y = (ds.test_X, ds.test_y) if len(ds.test) else (ds.train_X, ds.train_y)
        err = error_rate(rcf_predict(model, eval_X), eval_y)
        runs.append({"run": r, "seed": cfg.seed, "error_rate": err, "epochs_run": len(history)})
        print(f"run {r} (seed {cfg.seed}): error rate {err:.4f}")
        if r == 0:
            save_checkpoint(model, out / "model.json", {
                "labels": list(ds.original_labels), "znorm": True, "train_config": cfg.to_dict(),
            })
    mean_err = float(np.mean([run["error_rate"] for run in runs]))
    atomic_write_text(out / "metrics.csv", _csv_text(["run", "epoch", "train_loss", "train_err", "test_err"], rows))
    summary = {"runs": runs, "mean_error_rate": mean_err, "class_count": ds.class_count,
               "evaluated_on": "test" if len(ds.test) else "train"}
    atomic_write_text(out / "summary.json", _json_text(summary))
    print(f"mean error rate over {args.repeats} run(s): {mean_err:.4f}")
    return EXIT_OK


# --- train-mlstm -----------------------------------------------------------


def cmd_train_mlstm(args) -> int:
    series = load_series_csv(_require_file(args.series))
    config = _build_config(args, epochs=FINETUNE_EPOCHS, n_levels=2)
    train_part, test_part = chronological_split(series, 0.8)
    try:
        train_ds = sliding_windows(train_part, config.window, config.horizon, config.stride)
        test_ds = sliding_windows(test_part, config.window, config.horizon, 1)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    model, history = train_mlstm(train_ds, config, val_dataset=test_ds)

    out = Path(args.out)
    rows = [[h["epoch"], h["phase"], h["loss"], h.get("val_mape", float("nan")), h.get("val_rmse", float("nan"))]
            for h in history]
    atomic_write_text(out / "metrics.csv", _csv_text(["epoch", "phase", "loss", "val_mape", "val_rmse"], rows))
    save_checkpoint(model, out / "model.json", {"horizon": config.horizon, "train_config": config.to_dict()})
    report = _forecast_report(model, test_ds.windows, test_ds.targets)
    atomic_write_text(out / "report.json", _json_text({**report.to_dict(), "test_windows": len(test_ds)}))
    _print_report(report)
    return EXIT_OK


# --- evaluate ---------------------------------------------------------------


def _forecast_report(model: MlstmModel, windows, targets) -> EvalReport:
    y_hat = predict(model, windows)
    try:
        m = mape(y_hat, targets)
    except ValueError:
        m = None
    return EvalReport(mape_percent=m, rmse=rmse(y_hat, targets))


def _print_report(report: EvalReport) -> None:
    names = {"error_rate": "error rate", "mpce": "MPCE", "mape_percent": "MAPE (%)", "rmse": "RMSE"}
    for key, label in names.items():
        v = getattr(report, key)
        if v is not None:
            print(f"{label}: {v:.6g}")
    if report.mape_percent is None and report.rmse is not None:
        print("MAPE (%): undefined (zero actual values)")
    sys.stdout.write(_json_text(report.to_dict()))


def _labeled_eval_data(ck, path) -> tuple[np.ndarray, np.ndarray]:
    hp = ck.hyperparameters
    labels = hp.get("labels")
    mapping = {lab: i for i, lab in enumerate(labels)} if labels else None
    series = load_ucr(path, mapping)
    model: RcfModel = ck.model
    X = []
    for s in series:
        v = znormalize(s.values) if hp.get("znorm", True) else s.values
        v = pad_to_pow2_blocks(v, model.n_levels)
        if v.size != model.input_len:
            raise DataFormatError(f"{path}: series length {len(s)} does not match the model input {model.input_len}")
        X.append(v)
    return np.stack(X), np.array([s.label for s in series])


def _forecast_eval_data(ck, path) -> tuple[np.ndarray, np.ndarray]:
    model: MlstmModel = ck.model
    series = load_series_csv(path)
    ds = sliding_windows(series, model.window, int(ck.hyperparameters.get("horizon", 1)), 1)
    return ds.windows, ds.targets


def cmd_evaluate(args) -> int:
    ck = read_checkpoint(_require_file(args.model))
    data_path = _require_file(args.data)
    if ck.model_kind == "rcf":
        X, y = _labeled_eval_data(ck, data_path)
        e = error_rate(rcf_predict(ck.model, X), y)
        report = EvalReport(error_rate=e, mpce=e / ck.model.class_count)
    else:
        W, t = _forecast_eval_data(ck, data_path)
        report = _forecast_report(ck.model, W, t)
    _print_report(report)
    if args.out:
        atomic_write_text(Path(args.out) / "evaluation.json", _json_text(report.to_dict()))
    return EXIT_OK


# --- importance ------------------------------------------------------------


def cmd_importance(args) -> int:
    ck = read_checkpoint(_require_file(args.model))
    data_path = _require_file(args.data)
    if ck.model_kind == "rcf":
        X, labels = _labeled_eval_data(ck, data_path)
    else:
        X, _ = _forecast_eval_data(ck, data_path)
        labels = None
    model = ck.model
    out = Path(args.out)
    length = X.shape[1]
    spectrum = analysis.input_importance(model, X, labels)
    atomic_write_text(out / "input.csv", analysis.spectrum_csv(spectrum))
    written = 1
    if args.target == "layers":
        for (level, branch), s in analysis.all_layer_importances(model, X, labels).items():
            resized = analysis.resize_spectrum(s, length)
            atomic_write_text(out / f"layer_{level}_{branch}.csv", analysis.spectrum_csv(resized))
            written += 1
    print(f"wrote {written} importance file(s) to {out}")
    return EXIT_OK


# --- argument parsing -------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="base random seed (default 0)")
    p.add_argument("--levels", type=int, help="number of decomposition levels N")
    p.add_argument("--out", required=True, help="output directory")


def _add_training(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with training settings; explicit flags win")
    p.add_argument("--alpha", type=float, help="low-pass prior weight")
    p.add_argument("--beta", type=float, help="high-pass prior weight")
    p.add_argument("--lr", type=float, help="learning rate")
    p.add_argument("--optimizer", choices=("adam", "sgd"))
    p.add_argument("--momentum", type=float, help="SGD momentum (0 = plain gradient descent)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int, help="mini-batch size")
    p.add_argument("--eps", type=float, help="scale of the off-band weight initialization")
    p.add_argument("--patience", type=int, help="early-stop after this many epochs without improvement (0 = off)")
    p.add_argument("--freeze-mwdn", action="store_true", default=None,
                   help="keep the decomposition weights fixed at their initialization")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mwdnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="write the sub-series of every level as CSV")
    p.add_argument("input", help="UCR file or single-column series CSV")
    p.add_argument("--mode", choices=("oracle", "mwdn-init"), default="oracle")
    p.add_argument("--eps", type=float, help="off-band initialization scale for mwdn-init (0 also zeroes biases)")
    _add_common(p)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("train-rcf", help="train the residual classification flow")
    p.add_argument("train", help="UCR training file")
    p.add_argument("test", nargs="?", help="UCR test file")
    p.add_argument("--repeats", type=int, default=1, help="independent runs with seeds seed, seed+1, ...")
    p.add_argument("--psi", choices=("mlp", "conv"), help="per-level classifier type")
    p.add_argument("--hidden", type=int, help="hidden width of the per-level MLP")
    _add_common(p)
    _add_training(p)
    p.set_defaults(func=cmd_train_rcf)

    p = sub.add_parser("train-mlstm", help="train the multi-frequency LSTM forecaster")
    p.add_argument("series", help="single-column CSV series")
    p.add_argument("--window", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--lstm-hidden", type=int, help="hidden units per LSTM subnet")
    p.add_argument("--pretrain-epochs", type=int)
    _add_common(p)
    _add_training(p)
    p.set_defaults(func=cmd_train_mlstm)

    p = sub.add_parser("evaluate", help="score a checkpoint on a dataset")
    p.add_argument("model", help="checkpoint JSON")
    p.add_argument("data", help="UCR file (classifier) or series CSV (forecaster)")
    p.add_argument("--out", help="optional directory for evaluation.json")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("importance", help="gradient importance spectra")
    p.add_argument("model", help="checkpoint JSON")
    p.add_argument("data", help="UCR file (classifier) or series CSV (forecaster)")
    p.add_argument("--target", choices=("input", "layers"), default="input")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_importance)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, FileNotFoundError) as exc:
        print(f"mwdnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, CheckpointError, ValueError, FloatingPointError, OSError) as exc:
        print(f"mwdnet: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as exc:  # noqa: BLE001 - any other failure is still a runtime failure
        log.debug("unhandled error", exc_info=True)
        print(f"mwdnet: unexpected {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
