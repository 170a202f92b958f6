"""Retrieval fine-tuning objectives for the hash head.

Two frameworks: central-similarity (per-class hash-center targets with a
bit-wise cross entropy plus a log-cosh quantization penalty) and Cauchy
pairwise (cosine-derived Hamming distance pushed through a Cauchy
probability, with inverse-frequency pair weighting and a Cauchy prior
quantization penalty).
"""

from __future__ import annotations

import numpy as np
import torch

from .errors import ConfigError
from .hash_centers import HashCenterSet

_EPS = 1e-7


def label_sets(labels, num_classes: int | None = None) -> list[frozenset[int]]:
    """Normalize labels to per-sample sets. Accepts 1-D class ids, a list
    of sets/iterables, or a 2-D multi-hot matrix."""
    if isinstance(labels, (list, tuple)) and labels and isinstance(labels[0], (set, frozenset, list, tuple)):
        return [frozenset(int(x) for x in ls) for ls in labels]
    arr = labels.detach().cpu().numpy() if isinstance(labels, torch.Tensor) else np.asarray(labels)
    if arr.ndim == 1:
        return [frozenset([int(x)]) for x in arr]
    if arr.ndim == 2:
        return [frozenset(np.nonzero(row)[0].tolist()) for row in arr]
    raise ConfigError(f"cannot interpret labels with shape {arr.shape}")


def csq_center_targets(labels, centers: HashCenterSet) -> torch.Tensor:
    """Per-sample 0/1 target codes. Single-label samples take their class
    center; multi-label samples take the elementwise majority of their
    classes' centers, ties resolved to 1."""
    sets = label_sets(labels)
    targets = np.zeros((len(sets), centers.k_bits), dtype=np.float64)
    for i, ls in enumerate(sets):
        if not ls:
            raise ConfigError(f"sample {i} has no labels")
        for c in ls:
            if c < 0 or c >= centers.num_classes:
                raise ConfigError(
                    f"label {c} outside the {centers.num_classes}-class center set")
        stack = centers.centers[sorted(ls)].astype(np.int64)
        ones = stack.sum(axis=0)
        targets[i] = (2 * ones >= len(ls)).astype(np.float64)
    return torch.from_numpy(targets)


def csq_loss(output: torch.Tensor, targets: torch.Tensor,
             lambda_q: float = 1e-4) -> torch.Tensor:
    """Central-similarity objective: bit-wise cross entropy between the
    squashed code (tanh mapped to [0,1]) and the target center bits,
    averaged over samples and bits, plus lambda_q times the mean log-cosh
    distance of |tanh| from 1."""
    if lambda_q < 0:
        raise ConfigError("lambda_q must be non-negative")
    if output.shape != targets.shape:
        raise ConfigError(f"output {tuple(output.shape)} vs targets {tuple(targets.shape)}")
    tvals = targets.detach()
    if not ((tvals == 0) | (tvals == 1)).all():
        raise ConfigError("target bits must be 0/1")
    code = torch.tanh(output)
    p = ((code + 1) / 2).clamp(_EPS, 1 - _EPS)
    central = -(targets * torch.log(p) + (1 - targets) * torch.log(1 - p)).mean()
    quant = torch.log(torch.cosh(code.abs() - 1)).mean()
    return central + lambda_q * quant


def pairwise_similarity(labels) -> torch.Tensor:
    """s_ij = 1 iff the two samples share at least one label (single-label:
    same class). Symmetric with unit diagonal."""
    sets = label_sets(labels)
    n = len(sets)
    s = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(n):
            s[i, j] = 1.0 if sets[i] & sets[j] else 0.0
    return torch.from_numpy(s)


def _cauchy_distance(a: torch.Tensor, b: torch.Tensor, k_bits: int) -> torch.Tensor:
    cos = (a * b).sum(dim=-1)
    return (k_bits / 2) * (1 - cos).clamp(min=0.0)


def dch_loss(output: torch.Tensor, similarity: torch.Tensor,
             gamma: float = 20.0, lambda_q: float = 0.1) -> torch.Tensor:
    """Cauchy pairwise objective over all unordered sample pairs plus the
    Cauchy-prior quantization penalty.

    d(h_i, h_j) = (K/2) (1 - cos(h_i, h_j)), p = gamma / (gamma + d);
    pair weights balance similar/dissimilar pairs by inverse frequency.
    """
    if gamma <= 0:
        raise ConfigError("gamma must be positive")
    if lambda_q < 0:
        raise ConfigError("lambda_q must be non-negative")
    n, k = output.shape
    if n < 2:
        raise ConfigError("need at least 2 samples for pairwise loss")
    if similarity.shape != (n, n):
        raise ConfigError(f"similarity must be {n}x{n}, got {tuple(similarity.shape)}")
    norms = output.norm(dim=1)
    bad = (norms == 0).nonzero().flatten()
    if len(bad):
        raise ConfigError(f"hash vector {int(bad[0])} has zero norm; cosine undefined")

    unit = output / norms.unsqueeze(1)
    iu, ju = torch.triu_indices(n, n, offset=1)
    d = _cauchy_distance(unit[iu], unit[ju], k)
    p = gamma / (gamma + d)
    s = similarity.to(output.dtype)[iu, ju]

    n_pairs = s.numel()
    n_sim = s.sum()
    n_dis = n_pairs - n_sim
    w_sim = n_pairs / n_sim.clamp(min=1.0)
    w_dis = n_pairs / n_dis.clamp(min=1.0)
    # where() keeps 0 * log(0) out of the similar branch when d == 0
    per_pair = torch.where(s > 0.5, -torch.log(p), -torch.log1p(-p))
    weights = torch.where(s > 0.5, w_sim, w_dis)
    pairwise = (weights * per_pair).sum()

    ones = torch.ones_like(output)
    ones_unit = ones / ones.norm(dim=1, keepdim=True)
    abs_unit = output.abs() / norms.unsqueeze(1)
    d_q = _cauchy_distance(abs_unit, ones_unit, k)
    quant = torch.log1p(d_q / gamma).sum()
    return pairwise + lambda_q * quant
