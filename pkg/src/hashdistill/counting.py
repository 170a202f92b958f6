"""Analytic parameter and FLOP accounting for ModelSpecs.

Conventions (documented because they decide the totals): convolutions carry
no bias when followed by a norm layer; a norm layer contributes 2 trainable
parameters per channel; one FLOP = one multiply-accumulate; only conv and
fully connected stages contribute FLOPs (norm, activation, pooling, and
identity additions are free).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch.nn as nn

from .model_spec import (
    BASIC_BLOCK, FLATTEN, INITIAL_MODULE, MAXPOOL, PLAIN_CONV,
    BlockSpec, ModelSpec, TensorShape, _block_out_shape, shape_trace,
)


@dataclass(frozen=True)
class StageCount:
    name: str
    parameters: int
    flops: int


@dataclass(frozen=True)
class CountReport:
    trainable_parameters: int
    flops: int
    per_stage: tuple[StageCount, ...]

    def validate(self) -> None:
        assert sum(s.parameters for s in self.per_stage) == self.trainable_parameters
        assert sum(s.flops for s in self.per_stage) == self.flops


def conv_params(in_ch: int, out_ch: int, kernel: int, bias: bool) -> int:
    return kernel * kernel * in_ch * out_ch + (out_ch if bias else 0)


def norm_params(channels: int) -> int:
    return 2 * channels


def fc_params(in_features: int, out_features: int, bias: bool = True) -> int:
    return in_features * out_features + (out_features if bias else 0)


def conv_macs(in_ch: int, out_ch: int, kernel: int, out_h: int, out_w: int) -> int:
    return kernel * kernel * in_ch * out_ch * out_h * out_w


def fc_macs(in_features: int, out_features: int) -> int:
    return in_features * out_features


def _block_params(block: BlockSpec, in_ch: int) -> int:
    if block.kind == BASIC_BLOCK:
        f = block.filters
        total = conv_params(in_ch, f, 3, bias=False) + norm_params(f)
        total += conv_params(f, f, 3, bias=False) + norm_params(f)
        if in_ch != f:
            total += conv_params(in_ch, f, 1, bias=False) + norm_params(f)
        return total
    if block.kind in (PLAIN_CONV, INITIAL_MODULE):
        total = conv_params(in_ch, block.filters, block.kernel, bias=block.bias)
        if block.has_norm:
            total += norm_params(block.filters)
        return total
    return 0


def _block_macs(block: BlockSpec, in_ch: int, out_shape: TensorShape) -> int:
    h, w = out_shape.height, out_shape.width
    if block.kind == BASIC_BLOCK:
        f = block.filters
        total = conv_macs(in_ch, f, 3, h, w) + conv_macs(f, f, 3, h, w)
        if in_ch != f:
            total += conv_macs(in_ch, f, 1, h, w)
        return total
    if block.kind in (PLAIN_CONV, INITIAL_MODULE):
        return conv_macs(in_ch, block.filters, block.kernel, h, w)
    return 0


def _out_channels(block: BlockSpec, in_ch: int) -> int:
    if block.kind in (MAXPOOL, FLATTEN):
        return in_ch
    return block.filters


def count_parameters(spec: ModelSpec) -> CountReport:
    """Trainable parameter count with per-stage breakdown; matches an
    enumeration over the instantiated model exactly."""
    stages = []
    ch = spec.in_channels
    for stage in spec.stages:
        params = 0
        for block in stage.blocks:
            params += _block_params(block, ch)
            ch = _out_channels(block, ch)
        stages.append(StageCount(stage.name, params, 0))
    return CountReport(sum(s.parameters for s in stages), 0, tuple(stages))


def count_flops(spec: ModelSpec, input_shape: TensorShape) -> CountReport:
    """MAC count at a given input shape, with per-stage breakdown.

    Shape errors from downsampling below 1x1 propagate from shape_trace.
    """
    shape_trace(spec, input_shape)  # surfaces collapse errors with stage names
    stages = []
    ch = spec.in_channels
    shape = input_shape
    for stage in spec.stages:
        params = 0
        macs = 0
        for block in stage.blocks:
            out = _block_out_shape(block, shape)
            params += _block_params(block, ch)
            macs += _block_macs(block, ch, out)
            ch = _out_channels(block, ch)
            shape = out
        stages.append(StageCount(stage.name, params, macs))
    return CountReport(
        sum(s.parameters for s in stages),
        sum(s.flops for s in stages),
        tuple(stages),
    )


def enumerate_parameters(module: nn.Module) -> int:
    """Independent oracle: sum of element counts over trainable tensors."""
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


def compression_ratio(student: CountReport, teacher: CountReport) -> float:
    """Fractional reduction in trainable parameters, student vs teacher."""
    return 1.0 - student.trainable_parameters / teacher.trainable_parameters


def per_stage_csv(report: CountReport) -> str:
    lines = ["stage,parameters,flops"]
    for s in report.per_stage:
        lines.append(f"{s.name},{s.parameters},{s.flops}")
    lines.append(f"total,{report.trainable_parameters},{report.flops}")
    return "\n".join(lines) + "\n"


def comparison_csv(reports: dict[str, CountReport]) -> str:
    """Model/parameters/FLOPs table, one model per row."""
    lines = ["Model,Trainable Parameters,FLOPs"]
    for name, rep in reports.items():
        lines.append(f"{name},{rep.trainable_parameters},{rep.flops}")
    return "\n".join(lines) + "\n"
