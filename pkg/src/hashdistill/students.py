"""The two compact student networks and the retrieval hash head.

Both students stack five layers of basic blocks ([2, 3, 5, 3, 2] blocks)
behind a 7x7 stride-2 initial module and a max pool; every layer except the
fifth is followed by a 3x3 stride-2 conv + BN that halves the spatial size.
V1 ends at 128 filters (2048-dim flatten at 224x224), V2 at 256 filters
(4096-dim flatten); that fifth-layer width is their only difference.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .blocks import instantiate
from .errors import ConfigError
from .model_spec import (
    ModelSpec, StageSpec, TensorShape,
    basic_block, flatten, initial_module, maxpool, plain_conv, shape_trace,
)

STUDENT_VARIANTS = ("V1", "V2")
BLOCKS_PER_LAYER = (2, 3, 5, 3, 2)
LAYER_FILTERS = {"V1": (64, 64, 128, 128, 128), "V2": (64, 64, 128, 128, 256)}
# Stride-2 convs between layers; shared by both variants (they differ only
# in layer_5, which sits after the last downsampling conv).
DOWNSAMPLE_FILTERS = (64, 128, 128, 128)
FEATURE_DIM = {"V1": 2048, "V2": 4096}


def student_spec(variant: str) -> ModelSpec:
    if variant not in STUDENT_VARIANTS:
        raise ConfigError(f"unknown student variant {variant!r}; expected one of {STUDENT_VARIANTS}")
    filters = LAYER_FILTERS[variant]
    stages = [
        StageSpec("initial_module", (initial_module(64),)),
        StageSpec("max_pool", (maxpool(),)),
    ]
    for i, (n_blocks, f) in enumerate(zip(BLOCKS_PER_LAYER, filters), start=1):
        stages.append(StageSpec(f"layer_{i}", tuple(basic_block(f) for _ in range(n_blocks))))
        if i < 5:
            stages.append(StageSpec(f"conv_2d_{i}", (plain_conv(
                DOWNSAMPLE_FILTERS[i - 1], kernel=3, stride=2, padding=1,
                has_norm=True),)))
    stages.append(StageSpec("flatten", (flatten(),)))
    return ModelSpec(
        name=f"Student{variant}",
        in_channels=3,
        stages=tuple(stages),
        blocks_per_layer=BLOCKS_PER_LAYER,
        layer_filters=filters,
        feature_dim=FEATURE_DIM[variant],
    )


class StudentNet(nn.Module):
    """Student backbone; forward returns the flattened feature vector."""

    def __init__(self, spec: ModelSpec, input_hw: tuple[int, int] = (224, 224), seed: int = 0):
        super().__init__()
        self.spec = spec
        self.input_hw = input_hw
        self.body = instantiate(spec, seed=seed)
        shape = TensorShape(spec.in_channels, *input_hw)
        self.out_features = shape_trace(spec, shape)[-1][1].channels

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)


def build_student(variant: str, input_hw: tuple[int, int] = (224, 224), seed: int = 0) -> StudentNet:
    return StudentNet(student_spec(variant), input_hw=input_hw, seed=seed)


class HashModel(nn.Module):
    """Backbone plus a fully connected hash head of n_bits outputs."""

    def __init__(self, backbone: nn.Module, n_bits: int, seed: int = 0):
        super().__init__()
        if n_bits <= 0:
            raise ConfigError(f"n_bits must be positive, got {n_bits}")
        if not hasattr(backbone, "out_features"):
            raise ConfigError("backbone must expose a flattened feature length via .out_features")
        self.backbone = backbone
        self.n_bits = n_bits
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.head = nn.Linear(backbone.out_features, n_bits)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        return self.backbone(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.backbone(x))


def attach_hash_head(model: nn.Module, n_bits: int, seed: int = 0) -> HashModel:
    """Append a fresh n_bits-output FC stage; backbone weights untouched."""
    return HashModel(model, n_bits, seed=seed)
