"""Declarative network descriptions and convolution shape arithmetic.

A ModelSpec is an ordered list of named stages; each stage groups one or
more BlockSpecs. Models, parameter counts, and FLOP counts all derive from
the same spec, so the analytic numbers and the instantiated networks cannot
drift apart.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConfigError, ShapeCollapseError

SCHEMA = "hashdistill/model-spec/v1"

BASIC_BLOCK = "basic-block"
PLAIN_CONV = "plain-conv"
INITIAL_MODULE = "initial-module"
MAXPOOL = "maxpool"
FLATTEN = "flatten"

_KINDS = (BASIC_BLOCK, PLAIN_CONV, INITIAL_MODULE, MAXPOOL, FLATTEN)


@dataclass(frozen=True)
class BlockSpec:
    """One building block: a residual-style basic block, a plain conv,
    the stride-2 initial module, a max pool, or a flatten."""

    kind: str
    filters: int = 0
    kernel: int = 1
    stride: int = 1
    padding: int = 0
    has_norm: bool = False
    has_activation: bool = False
    has_bias: bool | None = None  # default: bias only when there is no norm

    @property
    def bias(self) -> bool:
        return (not self.has_norm) if self.has_bias is None else self.has_bias

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown block kind {self.kind!r}")
        if self.kind in (BASIC_BLOCK, PLAIN_CONV, INITIAL_MODULE) and self.filters <= 0:
            raise ConfigError(f"{self.kind} needs a positive filter count")
        if self.kind == BASIC_BLOCK:
            # 3x3 stride-1 convs, padding 1, so the block is shape preserving.
            if (self.kernel, self.stride, self.padding) != (3, 1, 1):
                raise ConfigError("basic-block must have kernel=3, stride=1, padding=1")
        if self.kind == INITIAL_MODULE:
            if (self.kernel, self.stride, self.padding) != (7, 2, 3):
                raise ConfigError("initial-module must have kernel=7, stride=2, padding=3")
        if self.kernel <= 0 or self.stride <= 0 or self.padding < 0:
            raise ConfigError("kernel/stride must be positive, padding non-negative")


def basic_block(filters: int) -> BlockSpec:
    return BlockSpec(BASIC_BLOCK, filters, kernel=3, stride=1, padding=1,
                     has_norm=True, has_activation=True)


def plain_conv(filters: int, kernel: int = 3, stride: int = 1, padding: int = 0,
               has_norm: bool = True, has_activation: bool = False,
               has_bias: bool | None = None) -> BlockSpec:
    return BlockSpec(PLAIN_CONV, filters, kernel, stride, padding, has_norm,
                     has_activation, has_bias)


def initial_module(filters: int) -> BlockSpec:
    return BlockSpec(INITIAL_MODULE, filters, kernel=7, stride=2, padding=3,
                     has_norm=True, has_activation=True)


def maxpool(kernel: int = 3, stride: int = 2, padding: int = 1) -> BlockSpec:
    return BlockSpec(MAXPOOL, kernel=kernel, stride=stride, padding=padding)


def flatten() -> BlockSpec:
    return BlockSpec(FLATTEN)


@dataclass(frozen=True)
class StageSpec:
    name: str
    blocks: tuple[BlockSpec, ...]


@dataclass(frozen=True)
class TensorShape:
    channels: int
    height: int
    width: int

    def __post_init__(self):
        if self.channels < 1 or self.height < 1 or self.width < 1:
            raise ConfigError(f"tensor dimensions must be >= 1, got {self}")

    def numel(self) -> int:
        return self.channels * self.height * self.width


@dataclass(frozen=True)
class ModelSpec:
    """Full network description.

    blocks_per_layer / layer_filters / feature_dim summarize the student
    layout (five layers of stacked basic blocks); they stay empty for
    free-form specs built directly from stages.
    """

    name: str
    in_channels: int
    stages: tuple[StageSpec, ...]
    blocks_per_layer: tuple[int, ...] = ()
    layer_filters: tuple[int, ...] = ()
    feature_dim: int = 0

    def stage_names(self) -> list[str]:
        return [s.name for s in self.stages]


def conv_out(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _block_out_shape(block: BlockSpec, shape: TensorShape) -> TensorShape:
    if block.kind == FLATTEN:
        return TensorShape(shape.numel(), 1, 1)
    if block.kind == BASIC_BLOCK:
        # Spatially preserving; channels move to the block's filter count
        # (identity shortcut when counts already match).
        return TensorShape(block.filters, shape.height, shape.width)
    h = conv_out(shape.height, block.kernel, block.stride, block.padding)
    w = conv_out(shape.width, block.kernel, block.stride, block.padding)
    channels = shape.channels if block.kind == MAXPOOL else block.filters
    if h < 1 or w < 1:
        raise ShapeCollapseError("", f"spatial size collapses to {h}x{w}")
    return TensorShape(channels, h, w)


def shape_trace(spec: ModelSpec, input_shape: TensorShape) -> list[tuple[str, TensorShape]]:
    """Per-stage output shapes under standard convolution arithmetic.

    Raises ShapeCollapseError naming the first stage whose output would
    drop below 1x1.
    """
    if input_shape.channels != spec.in_channels:
        raise ConfigError(
            f"spec {spec.name} expects {spec.in_channels} input channels, "
            f"got {input_shape.channels}")
    trace = []
    shape = input_shape
    for stage in spec.stages:
        for block in stage.blocks:
            try:
                shape = _block_out_shape(block, shape)
            except ShapeCollapseError as exc:
                raise ShapeCollapseError(
                    stage.name, f"stage {stage.name!r}: {exc}") from None
        trace.append((stage.name, shape))
    return trace


def output_shape(spec: ModelSpec, input_shape: TensorShape) -> TensorShape:
    return shape_trace(spec, input_shape)[-1][1]


def spec_to_json(spec: ModelSpec) -> str:
    doc = {
        "schema": SCHEMA,
        "name": spec.name,
        "in_channels": spec.in_channels,
        "stages": [
            {
                "name": stage.name,
                "blocks": [
                    {
                        "kind": b.kind,
                        "filters": b.filters,
                        "kernel": b.kernel,
                        "stride": b.stride,
                        "padding": b.padding,
                        "has_norm": b.has_norm,
                        "has_activation": b.has_activation,
                        "has_bias": b.has_bias,
                    }
                    for b in stage.blocks
                ],
            }
            for stage in spec.stages
        ],
        "blocks_per_layer": list(spec.blocks_per_layer),
        "layer_filters": list(spec.layer_filters),
        "feature_dim": spec.feature_dim,
    }
    return json.dumps(doc, indent=2)


def spec_from_json(text: str) -> ModelSpec:
    doc = json.loads(text)
    if doc.get("schema") != SCHEMA:
        raise ConfigError(f"unsupported model-spec schema: {doc.get('schema')!r}")
    stages = tuple(
        StageSpec(s["name"], tuple(BlockSpec(**b) for b in s["blocks"]))
        for s in doc["stages"]
    )
    return ModelSpec(
        name=doc["name"],
        in_channels=doc["in_channels"],
        stages=stages,
        blocks_per_layer=tuple(doc.get("blocks_per_layer", ())),
        layer_filters=tuple(doc.get("layer_filters", ())),
        feature_dim=doc.get("feature_dim", 0),
    )
