"""Teacher models and their accounting.

Teachers are consumed as frozen black boxes exposing last-layer features
(.out_features tells the width). Their parameter/FLOP reports are computed
analytically over the backbone only, since the classifier head never
participates in distillation.
"""

from __future__ import annotations

import hashlib

import torch
import torch.nn as nn

from .counting import (
    CountReport, StageCount, conv_macs, conv_params, fc_macs, fc_params,
    norm_params,
)
from .errors import ConfigError, MissingArtifactError


class TinyTeacher(nn.Module):
    """Small conv classifier for desk-scale runs. forward() yields the
    pooled feature vector; logits() adds the classification head."""

    def __init__(self, feature_dim: int = 128, num_classes: int = 10, seed: int = 0):
        super().__init__()
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.features = nn.Sequential(
                nn.Conv2d(3, 32, 3, stride=2, padding=1, bias=False),
                nn.BatchNorm2d(32),
                nn.ReLU(inplace=True),
                nn.Conv2d(32, 64, 3, stride=2, padding=1, bias=False),
                nn.BatchNorm2d(64),
                nn.ReLU(inplace=True),
                nn.Conv2d(64, feature_dim, 3, stride=2, padding=1, bias=False),
                nn.BatchNorm2d(feature_dim),
                nn.ReLU(inplace=True),
                nn.AdaptiveAvgPool2d(1),
                nn.Flatten(),
            )
            self.classifier = nn.Linear(feature_dim, num_classes)
        self.out_features = feature_dim

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.features(x)

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        return self.classifier(self.features(x))


def parameter_checksum(model: nn.Module) -> str:
    """SHA-256 over all state tensors (weights and running stats), in
    state_dict order. Bit-identical weights give identical digests."""
    digest = hashlib.sha256()
    for name, tensor in model.state_dict().items():
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def _bottleneck(in_ch: int, mid: int, out_ch: int, in_spatial: int,
                out_spatial: int, project: bool) -> tuple[int, int]:
    """Params and MACs of one ResNet bottleneck. The 3x3 conv carries the
    stride, so the leading 1x1 runs at the input spatial size."""
    params = conv_params(in_ch, mid, 1, False) + norm_params(mid)
    params += conv_params(mid, mid, 3, False) + norm_params(mid)
    params += conv_params(mid, out_ch, 1, False) + norm_params(out_ch)
    macs = conv_macs(in_ch, mid, 1, in_spatial, in_spatial)
    macs += conv_macs(mid, mid, 3, out_spatial, out_spatial)
    macs += conv_macs(mid, out_ch, 1, out_spatial, out_spatial)
    if project:
        params += conv_params(in_ch, out_ch, 1, False) + norm_params(out_ch)
        macs += conv_macs(in_ch, out_ch, 1, out_spatial, out_spatial)
    return params, macs


def resnet50_count_report(input_size: int = 224) -> CountReport:
    """ResNet-50 backbone (conv1 through the 2048-dim pooled features)."""
    stages = []
    s = input_size // 2  # conv1 output
    conv1_p = conv_params(3, 64, 7, False) + norm_params(64)
    stages.append(StageCount("conv1", conv1_p, conv_macs(3, 64, 7, s, s)))
    s = s // 2  # 3x3 stride-2 max pool, padding 1
    plan = [  # (blocks, mid, out, downsamples_spatially)
        (3, 64, 256, False),
        (4, 128, 512, True),
        (6, 256, 1024, True),
        (3, 512, 2048, True),
    ]
    in_ch = 64
    for idx, (blocks, mid, out_ch, down) in enumerate(plan, start=1):
        in_s = s
        if down:
            s = s // 2
        params = 0
        macs = 0
        for b in range(blocks):
            p, m = _bottleneck(in_ch if b == 0 else out_ch, mid, out_ch,
                               in_spatial=in_s if b == 0 else s,
                               out_spatial=s,
                               project=(b == 0))
            params += p
            macs += m
        stages.append(StageCount(f"layer{idx}", params, macs))
        in_ch = out_ch
    total_p = sum(st.parameters for st in stages)
    total_m = sum(st.flops for st in stages)
    return CountReport(total_p, total_m, tuple(stages))


def alexnet_count_report(input_size: int = 224) -> CountReport:
    """AlexNet through fc7 (the 4096-dim feature layer); conv layers carry
    biases, there is no norm layer."""
    convs = [  # (in, out, kernel, out_spatial at 224)
        (3, 64, 11, 55),
        (64, 192, 5, 27),
        (192, 384, 3, 13),
        (384, 256, 3, 13),
        (256, 256, 3, 13),
    ]
    if input_size != 224:
        raise ConfigError("alexnet accounting is defined at 224x224 input")
    stages = []
    for i, (cin, cout, k, s) in enumerate(convs, start=1):
        p = conv_params(cin, cout, k, bias=True)
        stages.append(StageCount(f"conv{i}", p, conv_macs(cin, cout, k, s, s)))
    stages.append(StageCount("fc6", fc_params(256 * 6 * 6, 4096), fc_macs(256 * 6 * 6, 4096)))
    stages.append(StageCount("fc7", fc_params(4096, 4096), fc_macs(4096, 4096)))
    total_p = sum(st.parameters for st in stages)
    total_m = sum(st.flops for st in stages)
    return CountReport(total_p, total_m, tuple(stages))


TEACHER_FEATURE_DIM = {"resnet50": 2048, "alexnet": 4096}


class _FeatureWrapper(nn.Module):
    def __init__(self, body: nn.Module, out_features: int):
        super().__init__()
        self.body = body
        self.out_features = out_features

    def forward(self, x):
        return self.body(x)


def load_torchvision_teacher(name: str, weights_path: str | None = None) -> nn.Module:
    """Wrap a torchvision ResNet-50 or AlexNet as a feature extractor
    (pooled 2048-dim / fc7 4096-dim outputs). Weights come from a local
    state-dict file; random init without one (useful only for tests)."""
    try:
        import torchvision.models as tvm
    except ImportError as exc:
        raise MissingArtifactError("torchvision is not installed") from exc
    if name == "resnet50":
        net = tvm.resnet50()
        if weights_path:
            net.load_state_dict(torch.load(weights_path, map_location="cpu", weights_only=True))
        body = nn.Sequential(
            net.conv1, net.bn1, net.relu, net.maxpool,
            net.layer1, net.layer2, net.layer3, net.layer4,
            net.avgpool, nn.Flatten(),
        )
        return _FeatureWrapper(body, 2048)
    if name == "alexnet":
        net = tvm.alexnet()
        if weights_path:
            net.load_state_dict(torch.load(weights_path, map_location="cpu", weights_only=True))
        body = nn.Sequential(
            net.features, net.avgpool, nn.Flatten(),
            *list(net.classifier.children())[:-1],  # stop before the class logits
        )
        return _FeatureWrapper(body, 4096)
    raise ConfigError(f"unknown teacher {name!r}")
