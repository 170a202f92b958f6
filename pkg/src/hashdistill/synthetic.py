"""Deterministic synthetic image dataset for desk-scale runs and CI.

Each class owns a fixed random pattern; samples are the pattern plus
per-image noise, so a small classifier separates the classes easily while
nothing needs to be downloaded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ConfigError
from .splits import DatasetSplit, split_by_class_quota


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 10
    images_per_class: int = 60
    image_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2 or self.images_per_class < 1 or self.image_size < 8:
            raise ConfigError("need >= 2 classes, >= 1 image per class, size >= 8")


def make_synthetic(spec: SyntheticSpec, query_per_class: int | None = None,
                   train_per_class: int | None = None) -> tuple[DatasetSplit, torch.Tensor]:
    """Balanced labeled images plus a quota split. Default quotas: one
    sixth of each class as queries, half as training, the rest database."""
    rng = np.random.default_rng(spec.seed)
    c, m, s = spec.num_classes, spec.images_per_class, spec.image_size
    patterns = rng.uniform(0.0, 1.0, size=(c, 3, s, s)).astype(np.float32)
    labels = np.repeat(np.arange(c), m)
    noise = rng.uniform(0.0, 1.0, size=(c * m, 3, s, s)).astype(np.float32)
    images = np.clip(0.75 * patterns[labels] + 0.25 * noise, 0.0, 1.0)

    if query_per_class is None:
        query_per_class = max(1, m // 6)
    if train_per_class is None:
        train_per_class = m // 2
    query, train, database = split_by_class_quota(
        labels, query_per_class, train_per_class, seed=spec.seed)
    split = DatasetSplit(query, train, database,
                         tuple(frozenset([int(x)]) for x in labels), c)
    return split, torch.from_numpy(images)
