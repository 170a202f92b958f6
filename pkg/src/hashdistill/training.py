"""Shared training plumbing: optimizer factory and deterministic batching."""

from __future__ import annotations

import numpy as np
import torch

from .errors import ConfigError

OPTIMIZERS = ("adam", "rmsprop", "sgd")


def make_optimizer(kind: str, params, lr: float) -> torch.optim.Optimizer:
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    kind = kind.lower()
    if kind == "adam":
        return torch.optim.Adam(params, lr=lr)
    if kind == "rmsprop":
        return torch.optim.RMSprop(params, lr=lr)
    if kind == "sgd":
        return torch.optim.SGD(params, lr=lr)
    raise ConfigError(f"unknown optimizer {kind!r}; expected one of {OPTIMIZERS}")


def epoch_batches(n_items: int, batch_size: int, rng: np.random.Generator):
    """Shuffled index batches; order is a pure function of the generator
    state, so a fixed seed reproduces the same schedule."""
    order = rng.permutation(n_items)
    for start in range(0, n_items, batch_size):
        yield order[start:start + batch_size]
