"""Dataset ingestion, preprocessing, windowing and checkpoint persistence."""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .mlstm import MlstmModel, build_mlstm
from .oracle import WaveletFilterPair
from .rcf import RcfModel, build_rcf

FORMAT_VERSION = 1


class DataFormatError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class TimeSeries:
    values: np.ndarray
    label: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("time series must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("time series contains non-finite values")

    def __len__(self):
        return self.values.size


@dataclass
class LabeledDataset:
    train: list[TimeSeries]
    test: list[TimeSeries]
    class_count: int
    series_length: int
    original_labels: list = field(default_factory=list)

    @property
    def train_X(self) -> np.ndarray:
        return np.stack([s.values for s in self.train])

    @property
    def train_y(self) -> np.ndarray:
        return np.array([s.label for s in self.train], dtype=int)

    @property
    def test_X(self) -> np.ndarray:
        return np.stack([s.values for s in self.test]) if self.test else np.zeros((0, self.series_length))

    @property
    def test_y(self) -> np.ndarray:
        return np.array([s.label for s in self.test], dtype=int)


@dataclass
class ForecastSample:
    window: np.ndarray
    target: float
    target_window: np.ndarray
    start: int = 0


@dataclass
class ForecastDataset:
    samples: list[ForecastSample]
    window: int
    horizon: int
    stride: int

    def __len__(self):
        return len(self.samples)

    @cached_property
    def windows(self) -> np.ndarray:
        return np.stack([s.window for s in self.samples])

    @cached_property
    def targets(self) -> np.ndarray:
        return np.array([s.target for s in self.samples])

    @cached_property
    def target_windows(self) -> np.ndarray:
        return np.stack([s.target_window for s in self.samples])


# --- UCR text format -------------------------------------------------------


def _detect_delimiter(line: str) -> str | None:
    if "\t" in line:
        return "\t"
    if "," in line:
        return ","
    # older archive releases separate fields with runs of spaces
    return None


def _parse_label(token: str, lineno: int):
    try:
        v = float(token)
    except ValueError:
        raise DataFormatError(f"line {lineno}: non-numeric label {token!r}") from None
    if not np.isfinite(v) or v != int(v):
        raise DataFormatError(f"line {lineno}: label {token!r} is not an integer")
    return int(v)


def read_ucr_raw(path) -> tuple[list[int], np.ndarray]:
    """Parse a UCR file into raw integer labels and a ``(n, T)`` value matrix."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines()) if ln.strip()]
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    delim = _detect_delimiter(lines[0][1])
    labels, rows = [], []
    width = None
    for lineno, ln in lines:
        tokens = [t.strip() for t in ln.split(delim)] if delim else ln.split()
        if len(tokens) < 2:
            raise DataFormatError(f"line {lineno}: expected a label and at least one value")
        labels.append(_parse_label(tokens[0], lineno))
        try:
            vals = [float(t) for t in tokens[1:]]
        except ValueError:
            bad = next(t for t in tokens[1:] if not _is_float(t))
            raise DataFormatError(f"line {lineno}: non-numeric token {bad!r}") from None
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise DataFormatError(f"line {lineno}: ragged row with {len(vals)} values, expected {width}")
        rows.append(vals)
    return labels, np.array(rows, dtype=np.float64)


def _is_float(t: str) -> bool:
    try:
        float(t)
    except ValueError:
        return False
    return True


def label_mapping(labels) -> dict[int, int]:
    return {lab: i for i, lab in enumerate(sorted(set(labels)))}


def load_ucr(path, label_map: dict[int, int] | None = None) -> list[TimeSeries]:
    """Read a UCR file; labels are remapped to a contiguous 0-based range in sorted order."""
    labels, values = read_ucr_raw(path)
    label_map = label_map or label_mapping(labels)
    out = []
    for lab, row in zip(labels, values):
        if lab not in label_map:
            raise DataFormatError(f"{path}: label {lab} not present in the training labels")
        out.append(TimeSeries(row, label_map[lab]))
    return out


def write_ucr(series: list[TimeSeries], path, delimiter: str = ",") -> None:
    lines = [delimiter.join([str(s.label)] + [repr(float(v)) for v in s.values]) for s in series]
    atomic_write_text(path, "\n".join(lines) + "\n")


def znormalize(x):
    """Per-series z-normalization; a (near-)constant series maps to zeros."""
    is_ts = isinstance(x, TimeSeries)
    v = x.values if is_ts else np.asarray(x, dtype=np.float64)
    sd = v.std()
    out = np.zeros_like(v) if sd < 1e-12 else (v - v.mean()) / sd
    return TimeSeries(out, x.label) if is_ts else out


def pad_to_pow2_blocks(x, n_levels: int):
    """Repeat the final value until the length is divisible by ``2**n_levels``."""
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    is_ts = isinstance(x, TimeSeries)
    v = x.values if is_ts else np.asarray(x, dtype=np.float64)
    block = 2**n_levels
    extra = (-v.size) % block
    if extra:
        v = np.concatenate([v, np.full(extra, v[-1])])
    return TimeSeries(v, x.label) if is_ts else v


def load_labeled_dataset(train_path, test_path=None, n_levels: int | None = None, znorm: bool = True) -> LabeledDataset:
    """Load train/test UCR files with a shared label mapping, normalize and pad."""
    from .config import default_levels

    raw_labels, _ = read_ucr_raw(train_path)
    mapping = label_mapping(raw_labels)
    train = load_ucr(train_path, mapping)
    test = load_ucr(test_path, mapping) if test_path else []
    lengths = {len(s) for s in train + test}
    if len(lengths) != 1:
        raise DataFormatError("train and test series differ in length")
    n_levels = n_levels or default_levels(lengths.pop())

    def prep(s):
        s = znormalize(s) if znorm else s
        return pad_to_pow2_blocks(s, n_levels)

    train = [prep(s) for s in train]
    test = [prep(s) for s in test]
    return LabeledDataset(train, test, len(mapping), len(train[0]), sorted(mapping))


# --- forecasting series ----------------------------------------------------


def load_series_csv(path) -> np.ndarray:
    """Single-column CSV with an optional ``value`` header."""
    lines = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if lines and lines[0].lower() == "value":
        lines = lines[1:]
    if not lines:
        raise DataFormatError(f"{path}: no values")
    out = []
    for i, ln in enumerate(lines, start=1):
        try:
            out.append(float(ln.split(",")[0]))
        except ValueError:
            raise DataFormatError(f"{path}: non-numeric value {ln!r} on data row {i}") from None
    return np.array(out)


def write_series_csv(values, path) -> None:
    atomic_write_text(path, "value\n" + "".join(f"{float(v)!r}\n" for v in values))


def sliding_windows(series, T: int, horizon: int = 1, stride: int = 1) -> ForecastDataset:
    """Windows starting at ``0, s, 2s, ...``; the target sits ``horizon`` steps after the window end."""
    series = np.asarray(series, dtype=np.float64)
    if horizon < 1:
        raise ValueError("horizon must be >= 1 (target must be strictly in the future)")
    if stride < 1 or T < 1:
        raise ValueError("window and stride must be >= 1")
    if series.size < T + horizon:
        raise ValueError(f"series of length {series.size} too short for window {T} + horizon {horizon}")
    samples = []
    for start in range(0, series.size - T - horizon + 1, stride):
        t_idx = start + T - 1 + horizon
        samples.append(
            ForecastSample(
                window=series[start : start + T].copy(),
                target=float(series[t_idx]),
                target_window=series[t_idx - T + 1 : t_idx + 1].copy(),
                start=start,
            )
        )
    return ForecastDataset(samples, T, horizon, stride)


def chronological_split(series, train_fraction: float = 0.8):
    """Split a series in time order; windows built on each part never overlap."""
    series = np.asarray(series, dtype=np.float64)
    cut = int(round(series.size * train_fraction))
    return series[:cut], series[cut:]


# --- checkpoints -----------------------------------------------------------


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def model_hyperparameters(model) -> dict:
    if isinstance(model, RcfModel):
        st = model.stages[0]
        return {
            "n_levels": model.n_levels,
            "input_len": model.input_len,
            "class_count": model.class_count,
            "psi_kind": st.psi_kind,
            "hidden": int(st.params["W1"].shape[0]) if st.psi_kind == "mlp" else 0,
        }
    if isinstance(model, MlstmModel):
        return {"n_levels": model.n_levels, "window": model.window, "hidden": model.hidden}
    raise TypeError(f"cannot checkpoint {type(model).__name__}")


def save_checkpoint(model, path, extra: dict | None = None) -> None:
    """Write a JSON checkpoint. ``extra`` (training settings, preprocessing flags) is stored verbatim."""
    kind = "rcf" if isinstance(model, RcfModel) else "mlstm"
    doc = {
        "format_version": FORMAT_VERSION,
        "model_kind": kind,
        "hyperparameters": {**model_hyperparameters(model), **(extra or {})},
        "filters": {"low": list(model.mwdn.filters.low), "high": list(model.mwdn.filters.high)},
        "parameters": {k: v.tolist() for k, v in model.parameters().items()},
        "priors": {k: v.tolist() for k, v in model.mwdn.priors().items()},
    }
    atomic_write_text(path, json.dumps(doc) + "\n")


@dataclass
class Checkpoint:
    format_version: int
    model_kind: str
    hyperparameters: dict
    model: object


def read_checkpoint(path) -> Checkpoint:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: malformed checkpoint ({exc})") from exc
    if not isinstance(doc, dict):
        raise CheckpointError(f"{path}: checkpoint is not a JSON object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {doc.get('format_version')!r}")
    kind = doc.get("model_kind")
    hp = doc.get("hyperparameters", {})
    try:
        if kind == "rcf":
            model = build_rcf(hp["input_len"], hp["class_count"], hp["n_levels"], hp["psi_kind"],
                              max(hp["hidden"], 1), eps_scale=0.0)
        elif kind == "mlstm":
            model = build_mlstm(hp["window"], hp["n_levels"], hp["hidden"], eps_scale=0.0)
        else:
            raise CheckpointError(f"{path}: unknown model kind {kind!r}")
        model.mwdn.filters = WaveletFilterPair(tuple(doc["filters"]["low"]), tuple(doc["filters"]["high"]))
        _fill(model.parameters(), doc["parameters"], path)
        _fill(model.mwdn.priors(), doc["priors"], path)
    except KeyError as exc:
        raise CheckpointError(f"{path}: missing field {exc}") from exc
    return Checkpoint(doc["format_version"], kind, hp, model)


def _fill(targets: dict, stored: dict, path) -> None:
    if set(targets) != set(stored):
        raise CheckpointError(f"{path}: parameter names do not match the hyperparameters")
    for name, arr in targets.items():
        v = np.asarray(stored[name], dtype=np.float64)
        if v.shape != arr.shape:
            raise CheckpointError(f"{path}: {name} has shape {v.shape}, expected {arr.shape}")
        arr[...] = v


def load_checkpoint(path, expected_kind: str | None = None):
    ck = read_checkpoint(path)
    if expected_kind is not None and ck.model_kind != expected_kind:
        raise CheckpointError(f"{path}: expected a {expected_kind} model, found {ck.model_kind}")
    return ck.model
