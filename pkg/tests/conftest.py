"""Shared test helpers: deterministic RNGs, random spec generation,
finite-difference gradients."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from hashdistill.errors import ShapeCollapseError
from hashdistill.model_spec import (
    ModelSpec, StageSpec, TensorShape,
    basic_block, flatten, initial_module, maxpool, plain_conv, shape_trace,
)

torch.set_num_threads(1)


def random_model_spec(rng: np.random.Generator, input_size: int = 32) -> ModelSpec:
    """Small random but valid spec (checked against collapse at the given
    input size). Exercises every block kind."""
    while True:
        in_channels = int(rng.integers(1, 4))
        stages = []
        if rng.random() < 0.5:
            stages.append(StageSpec("initial_module", (initial_module(int(rng.integers(2, 9))),)))
        if rng.random() < 0.4:
            stages.append(StageSpec("max_pool", (maxpool(),)))
        n_stages = int(rng.integers(1, 5))
        for i in range(n_stages):
            kind = rng.choice(["basic", "conv"])
            if kind == "basic":
                f = int(rng.integers(2, 17))
                blocks = tuple(basic_block(f) for _ in range(int(rng.integers(1, 3))))
                stages.append(StageSpec(f"layer_{i}", blocks))
            else:
                stages.append(StageSpec(f"conv_{i}", (plain_conv(
                    int(rng.integers(2, 17)),
                    kernel=int(rng.choice([1, 3, 5])),
                    stride=int(rng.choice([1, 2])),
                    padding=int(rng.integers(0, 3)),
                    has_norm=bool(rng.random() < 0.7),
                    has_activation=bool(rng.random() < 0.5)),)))
        stages.append(StageSpec("flatten", (flatten(),)))
        spec = ModelSpec(f"random_{rng.integers(1 << 30)}", in_channels, tuple(stages))
        try:
            shape_trace(spec, TensorShape(in_channels, input_size, input_size))
        except ShapeCollapseError:
            continue
        return spec


def finite_diff_grad(fn, x: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """Central finite differences of a scalar function, elementwise."""
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.numel()):
        orig = float(flat[i])
        flat[i] = orig + eps
        f_plus = float(fn(x))
        flat[i] = orig - eps
        f_minus = float(fn(x))
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2 * eps)
    return grad


def relative_error(a: torch.Tensor, b: torch.Tensor) -> float:
    denom = max(float(a.norm()), float(b.norm()), 1e-12)
    return float((a - b).norm()) / denom


@pytest.fixture
def rng():
    return np.random.default_rng(0)
