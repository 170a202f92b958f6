"""Feature-regression distillation from a frozen teacher.

The student is trained to reproduce the teacher's last-layer features over
a dataset, with the squared-error objective averaged over the batch and
summed over the feature dimension. The teacher is never updated and never
sees the downstream task.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .errors import ConfigError, DataError
from .training import epoch_batches, make_optimizer

CACHE_MAGIC = b"FEAT"
CACHE_VERSION = 1


@dataclass(frozen=True)
class FeatureBatch:
    """Matrix of last-layer features, batch x feature-dim."""

    values: torch.Tensor
    source: str  # "teacher" or "student"

    def __post_init__(self):
        if self.values.dim() != 2:
            raise ConfigError(f"features must be 2-D, got shape {tuple(self.values.shape)}")
        if self.source not in ("teacher", "student"):
            raise ConfigError(f"source must be teacher or student, got {self.source!r}")
        if not torch.isfinite(self.values).all():
            raise ConfigError("features contain non-finite entries")

    @property
    def feature_dim(self) -> int:
        return self.values.shape[1]


def _as_tensor(features) -> torch.Tensor:
    return features.values if isinstance(features, FeatureBatch) else features


def kd_loss(teacher, student) -> torch.Tensor:
    """Squared-error regression loss: mean over the batch of the summed
    per-feature squared differences. Zero iff the batches are identical;
    no gradient flows into the teacher side."""
    t = _as_tensor(teacher)
    s = _as_tensor(student)
    if t.shape != s.shape:
        raise ConfigError(f"feature shapes differ: {tuple(t.shape)} vs {tuple(s.shape)}")
    if not torch.isfinite(t).all() or not torch.isfinite(s).all():
        raise ConfigError("non-finite features in loss input")
    return ((s - t.detach()) ** 2).sum(dim=1).mean()


def extract_features(model: nn.Module, images: torch.Tensor, source: str = "student",
                     batch_size: int = 64) -> FeatureBatch:
    """Run the model in inference mode (running norm statistics) over the
    images and collect the flattened last-layer features."""
    was_training = model.training
    model.eval()
    chunks = []
    with torch.no_grad():
        for start in range(0, images.shape[0], batch_size):
            chunks.append(model(images[start:start + batch_size]))
    if was_training:
        model.train()
    return FeatureBatch(torch.cat(chunks, dim=0), source)


@dataclass(frozen=True)
class DistillConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-4
    epochs: int = 1
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


def train_kd(teacher: nn.Module, student: nn.Module, images: torch.Tensor,
             config: DistillConfig,
             teacher_features: FeatureBatch | None = None,
             epoch_hook=None) -> list[float]:
    """Distill for config.epochs over the images; returns the per-epoch
    mean loss history. The teacher runs in inference mode under no_grad,
    so its weights are bit-identical before and after.

    teacher_features, when given, replaces teacher forward passes with the
    precomputed (cached) features in image order.
    """
    if images.shape[0] == 0:
        raise DataError("empty dataset")
    t_dim = getattr(teacher, "out_features", None)
    s_dim = getattr(student, "out_features", None)
    if t_dim is not None and s_dim is not None and t_dim != s_dim:
        raise ConfigError(f"feature dim mismatch: teacher {t_dim} vs student {s_dim}")
    if teacher_features is not None and teacher_features.values.shape[0] != images.shape[0]:
        raise ConfigError("cached teacher features do not cover the dataset")

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    teacher.eval()
    student.train()
    opt = make_optimizer(config.optimizer, student.parameters(), config.learning_rate)

    history = []
    n = images.shape[0]
    for epoch in range(config.epochs):
        started = time.perf_counter()
        total = 0.0
        for idx in epoch_batches(n, config.batch_size, rng):
            batch = images[idx]
            if teacher_features is not None:
                t_feats = teacher_features.values[idx]
            else:
                with torch.no_grad():
                    t_feats = teacher(batch)
            s_feats = student(batch)
            loss = kd_loss(t_feats, s_feats)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
        history.append(total / n)
        if epoch_hook is not None:
            epoch_hook(epoch, history[-1], time.perf_counter() - started)
    student.eval()
    return history


def write_feature_cache(path, features: FeatureBatch) -> None:
    """Binary cache: magic, u16 version, u32 K, u64 count, then row-major
    little-endian float32 features."""
    values = features.values.detach().cpu().numpy().astype("<f4")
    count, k = values.shape
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<HIQ", CACHE_VERSION, k, count))
        fh.write(values.tobytes())


def read_feature_cache(path, source: str = "teacher") -> FeatureBatch:
    raw = Path(path).read_bytes()
    if raw[:4] != CACHE_MAGIC:
        raise DataError(f"bad feature cache magic in {path}")
    version, k, count = struct.unpack_from("<HIQ", raw, 4)
    if version != CACHE_VERSION:
        raise DataError(f"unsupported feature cache version {version}")
    body = raw[4 + struct.calcsize("<HIQ"):]
    expected = count * k * 4
    if len(body) != expected:
        raise DataError(f"feature cache truncated: expected {expected} payload bytes, got {len(body)}")
    values = np.frombuffer(body, dtype="<f4").reshape(count, k).copy()
    return FeatureBatch(torch.from_numpy(values), source)


def cache_key(dataset_id: str, teacher_id: str, feature_dim: int) -> str:
    """Stable file stem for a (dataset, teacher) feature cache."""
    return f"features_{dataset_id}_{teacher_id}_{feature_dim}.bin"
