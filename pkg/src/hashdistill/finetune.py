"""Retrieval fine-tuning of a hash-headed student."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import torch

from .errors import ConfigError
from .hash_centers import HashCenterSet, generate_hash_centers
from .hash_losses import csq_center_targets, csq_loss, dch_loss, label_sets, pairwise_similarity
from .students import HashModel
from .training import epoch_batches, make_optimizer

FRAMEWORKS = ("CSQ", "DCH")
DEFAULT_LAMBDA_Q = {"CSQ": 1e-4, "DCH": 0.1}


@dataclass(frozen=True)
class FinetuneConfig:
    framework: str
    n_bits: int
    epochs: int
    optimizer: str = "rmsprop"
    learning_rate: float = 1e-5
    batch_size: int = 32
    seed: int = 0
    gamma: float = 20.0
    lambda_q: float | None = None  # framework default when unset
    num_classes: int | None = None  # derived from labels when unset

    def __post_init__(self):
        if self.framework not in FRAMEWORKS:
            raise ConfigError(f"framework must be one of {FRAMEWORKS}, got {self.framework!r}")
        if self.n_bits <= 0:
            raise ConfigError("n_bits must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")

    def resolved_lambda_q(self) -> float:
        return DEFAULT_LAMBDA_Q[self.framework] if self.lambda_q is None else self.lambda_q


def _num_classes(labels, config: FinetuneConfig) -> int:
    if config.num_classes is not None:
        return config.num_classes
    return max(max(ls) for ls in label_sets(labels)) + 1


def finetune_retrieval(model: HashModel, images: torch.Tensor, labels,
                       config: FinetuneConfig,
                       centers: HashCenterSet | None = None,
                       epoch_hook=None) -> list[float]:
    """Train backbone and head under the chosen framework; returns the
    per-epoch mean batch loss. Deterministic under a fixed seed."""
    if model.n_bits != config.n_bits:
        raise ConfigError(f"head has {model.n_bits} bits, config wants {config.n_bits}")
    sets = label_sets(labels)
    if len(sets) != images.shape[0]:
        raise ConfigError("labels and images disagree on count")
    lambda_q = config.resolved_lambda_q()

    if config.framework == "CSQ":
        n_classes = _num_classes(labels, config)
        if centers is None:
            centers = generate_hash_centers(n_classes, config.n_bits, seed=config.seed)
        if centers.k_bits != config.n_bits:
            raise ConfigError(f"center width {centers.k_bits} != n_bits {config.n_bits}")
        if centers.num_classes < n_classes:
            raise ConfigError(
                f"center set covers {centers.num_classes} classes, labels need {n_classes}")
        all_targets = csq_center_targets(sets, centers).to(torch.float32)

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    model.train()
    opt = make_optimizer(config.optimizer, model.parameters(), config.learning_rate)

    history = []
    n = images.shape[0]
    for epoch in range(config.epochs):
        started = time.perf_counter()
        losses = []
        for idx in epoch_batches(n, config.batch_size, rng):
            if config.framework == "DCH" and len(idx) < 2:
                continue  # a single-sample tail has no pairs
            out = model(images[idx])
            if config.framework == "CSQ":
                loss = csq_loss(out, all_targets[idx], lambda_q=lambda_q)
            else:
                sim = pairwise_similarity([sets[i] for i in idx])
                loss = dch_loss(out, sim.to(out.dtype), gamma=config.gamma, lambda_q=lambda_q)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
        history.append(float(np.mean(losses)))
        if epoch_hook is not None:
            epoch_hook(epoch, history[-1], time.perf_counter() - started)
    model.eval()
    return history
