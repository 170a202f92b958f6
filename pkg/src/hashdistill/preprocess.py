"""Image preprocessing: resize to the teacher's native input size and
normalize with its pretraining channel statistics; optional flip/crop
augmentation for fine-tuning (off by default, seeded when on)."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ConfigError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def to_float_chw(images) -> torch.Tensor:
    """Accept uint8 NHWC or float NCHW and return float32 NCHW in [0,1]."""
    if isinstance(images, np.ndarray):
        images = torch.from_numpy(images)
    if images.dtype == torch.uint8:
        if images.dim() != 4 or images.shape[-1] != 3:
            raise ConfigError(f"expected NHWC uint8 images, got {tuple(images.shape)}")
        return images.permute(0, 3, 1, 2).to(torch.float32) / 255.0
    if images.dim() != 4 or images.shape[1] != 3:
        raise ConfigError(f"expected NCHW float images, got {tuple(images.shape)}")
    return images.to(torch.float32)


def preprocess(images, size: int = 224,
               mean: tuple[float, ...] = IMAGENET_MEAN,
               std: tuple[float, ...] = IMAGENET_STD,
               augment: bool = False, seed: int = 0) -> torch.Tensor:
    """Deterministic when augment is off: the same raw input and config
    produce a bitwise-identical tensor."""
    x = to_float_chw(images)
    if x.shape[-1] != size or x.shape[-2] != size:
        x = F.interpolate(x, size=(size, size), mode="bilinear", align_corners=False)
    if augment:
        gen = torch.Generator().manual_seed(seed)
        flip = torch.rand(x.shape[0], generator=gen) < 0.5
        x = torch.where(flip[:, None, None, None], x.flip(-1), x)
        pad = max(1, size // 8)
        padded = F.pad(x, (pad, pad, pad, pad), mode="reflect")
        offsets = torch.randint(0, 2 * pad + 1, (x.shape[0], 2), generator=gen)
        crops = [padded[i:i + 1, :, oy:oy + size, ox:ox + size]
                 for i, (oy, ox) in enumerate(offsets.tolist())]
        x = torch.cat(crops)
    m = torch.tensor(mean, dtype=torch.float32).view(1, 3, 1, 1)
    s = torch.tensor(std, dtype=torch.float32).view(1, 3, 1, 1)
    return (x - m) / s
