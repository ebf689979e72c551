"""Training configuration and seeded random streams."""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields

import numpy as np


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for ``name`` derived from a single 64-bit seed.

    Each parameter tensor draws from its own named stream, so adding or
    reordering modules never shifts another tensor's initialization.
    """
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    words = np.frombuffer(digest[:16], dtype=np.uint32).tolist()
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, *words]))


def default_levels(series_length: int) -> int:
    return max(1, min(3, int(np.floor(np.log2(series_length))) - 1))


@dataclass
class TrainConfig:
    n_levels: int | None = None
    learning_rate: float = 3e-3
    optimizer: str = "adam"
    momentum: float = 0.0
    alpha: float = 0.01
    beta: float = 0.01
    epochs: int = 500
    batch_size: int = 16
    hidden: int = 64
    lstm_hidden: int = 32
    seed: int = 0
    freeze_mwdn: bool = False
    psi_kind: str = "mlp"
    eps_scale: float = 1e-4
    patience: int = 50
    window: int = 32
    horizon: int = 1
    stride: int = 1
    pretrain_epochs: int = 100

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.epochs < 0 or self.pretrain_epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.n_levels is not None and self.n_levels < 1:
            raise ValueError("n_levels must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.psi_kind not in ("mlp", "conv"):
            raise ValueError(f"unknown psi kind {self.psi_kind!r}")
        if self.eps_scale < 0:
            raise ValueError("eps_scale must be non-negative")
        if self.horizon < 1 or self.stride < 1 or self.window < 2:
            raise ValueError("window >= 2, horizon >= 1 and stride >= 1 required")

    def make_optimizer(self):
        from .nn import make_optimizer

        return make_optimizer(self.optimizer, self.learning_rate, self.momentum)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)
