"""Mini-batch SGD loop shared by the classifiers and forecasters."""
from __future__ import annotations

import logging
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)


def minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def train_loop(
    step: Callable[[np.ndarray], float],
    n_samples: int,
    epochs: int,
    batch_size: int,
    rng: np.random.Generator,
    epoch_end: Callable[[int, float], dict],
    loss_key: str = "train_loss",
    patience: int | None = None,
) -> list[dict]:
    """Run ``epochs`` passes of ``step(batch_indices)``.

    ``epoch_end(epoch, mean_batch_loss)`` returns the record appended to the
    history; its ``loss_key`` entry drives early stopping once it has not
    improved for ``patience`` consecutive epochs.
    """
    history = []
    best = np.inf
    stale = 0
    for epoch in range(1, epochs + 1):
        total = 0.0
        for idx in minibatches(n_samples, batch_size, rng):
            loss = step(idx)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss {loss} in epoch {epoch}")
            total += loss * len(idx)
        record = epoch_end(epoch, total / max(n_samples, 1))
        history.append(record)
        current = record[loss_key]
        if not np.isfinite(current):
            raise FloatingPointError(f"non-finite {loss_key} {current} after epoch {epoch}")
        log.debug("epoch %d: %s", epoch, record)
        if current < best - 1e-12:
            best = current
            stale = 0
        else:
            stale += 1
        if patience and stale >= patience:
            log.info("early stop after %d stagnant epochs (epoch %d)", stale, epoch)
            break
    return history
