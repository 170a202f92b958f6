"""Torch modules instantiated from BlockSpecs."""

from __future__ import annotations

from collections import OrderedDict

import torch
import torch.nn as nn

from .model_spec import (
    BASIC_BLOCK, FLATTEN, INITIAL_MODULE, MAXPOOL, PLAIN_CONV,
    BlockSpec, ModelSpec,
)


class BasicBlock(nn.Module):
    """Residual-style unit: two 3x3 stride-1 convs with BN, ReLU after the
    first conv and after the identity addition. A 1x1 projection (+ BN)
    carries the shortcut when the channel count changes."""

    def __init__(self, in_channels: int, filters: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, filters, 3, stride=1, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(filters)
        self.conv2 = nn.Conv2d(filters, filters, 3, stride=1, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(filters)
        self.relu = nn.ReLU(inplace=True)
        if in_channels != filters:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_channels, filters, 1, stride=1, bias=False),
                nn.BatchNorm2d(filters),
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        out = out + self.shortcut(x)
        return self.relu(out)


class ConvUnit(nn.Module):
    """Plain conv with optional BN and ReLU (the students' stride-2
    downsampling stages use conv + BN without activation)."""

    def __init__(self, in_channels: int, spec: BlockSpec):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, spec.filters, spec.kernel,
                              stride=spec.stride, padding=spec.padding,
                              bias=spec.bias)
        self.bn = nn.BatchNorm2d(spec.filters) if spec.has_norm else None
        self.relu = nn.ReLU(inplace=True) if spec.has_activation else None

    def forward(self, x):
        x = self.conv(x)
        if self.bn is not None:
            x = self.bn(x)
        if self.relu is not None:
            x = self.relu(x)
        return x


def _build_block(block: BlockSpec, in_channels: int) -> tuple[nn.Module, int]:
    if block.kind == BASIC_BLOCK:
        return BasicBlock(in_channels, block.filters), block.filters
    if block.kind in (PLAIN_CONV, INITIAL_MODULE):
        return ConvUnit(in_channels, block), block.filters
    if block.kind == MAXPOOL:
        return nn.MaxPool2d(block.kernel, block.stride, block.padding), in_channels
    if block.kind == FLATTEN:
        return nn.Flatten(), in_channels
    raise AssertionError(block.kind)


def init_weights(module: nn.Module) -> None:
    """Fan-in scaled init for convs/linears, unit/zero for norm layers."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


def instantiate(spec: ModelSpec, seed: int = 0) -> nn.Sequential:
    """Build the trainable network for a ModelSpec, stages by name."""
    stages = OrderedDict()
    channels = spec.in_channels
    for stage in spec.stages:
        mods = []
        for block in stage.blocks:
            mod, channels = _build_block(block, channels)
            mods.append(mod)
        stages[stage.name] = mods[0] if len(mods) == 1 else nn.Sequential(*mods)
    net = nn.Sequential(stages)
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        init_weights(net)
    return net
