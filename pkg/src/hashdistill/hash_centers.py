"""Per-class binary hash centers with pairwise-distance guarantees.

Centers are K-bit 0/1 vectors, one per class, mutually far apart in
Hamming space: all distinct, average pairwise distance >= K/2. For
power-of-two K the rows of a Sylvester Hadamard matrix (and their
negations) give minimum pairwise distance exactly K/2; otherwise seeded
balanced-bit sampling retries until the average-distance bound holds.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CenterGenerationError, ConfigError


@dataclass(frozen=True)
class HashCenterSet:
    centers: np.ndarray  # uint8 {0,1}, num_classes x k_bits
    k_bits: int

    def __post_init__(self):
        c = self.centers
        if c.ndim != 2 or c.shape[1] != self.k_bits:
            raise ConfigError(f"centers must be num_classes x {self.k_bits}")
        if not np.isin(c, (0, 1)).all():
            raise ConfigError("center entries must be 0/1")

    @property
    def num_classes(self) -> int:
        return self.centers.shape[0]


def pairwise_hamming(centers: np.ndarray) -> np.ndarray:
    """Exhaustive pairwise Hamming distances (condensed upper triangle)."""
    n = centers.shape[0]
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            out.append(int((centers[i] != centers[j]).sum()))
    return np.asarray(out, dtype=np.int64)


def min_pairwise_distance(cs: HashCenterSet) -> int:
    return int(pairwise_hamming(cs.centers).min())


def average_pairwise_distance(cs: HashCenterSet) -> float:
    return float(pairwise_hamming(cs.centers).mean())


def validate_centers(cs: HashCenterSet) -> None:
    """Distinctness plus the average-distance bound, by pair enumeration."""
    d = pairwise_hamming(cs.centers)
    if (d == 0).any():
        raise ConfigError("duplicate hash centers")
    if d.mean() < cs.k_bits / 2:
        raise ConfigError(
            f"average pairwise distance {d.mean():.3f} < {cs.k_bits / 2}")


def hadamard_matrix(order: int) -> np.ndarray:
    """Sylvester construction; order must be a power of two."""
    if order < 1 or order & (order - 1):
        raise ConfigError(f"Hadamard order must be a power of two, got {order}")
    h = np.array([[1]], dtype=np.int8)
    while h.shape[0] < order:
        h = np.block([[h, h], [h, -h]])
    return h


def generate_hash_centers(num_classes: int, k_bits: int, seed: int = 0,
                          max_rounds: int = 1000) -> HashCenterSet:
    if num_classes < 2:
        raise ConfigError("need at least 2 classes")
    if k_bits < 1:
        raise ConfigError("k_bits must be positive")

    power_of_two = k_bits & (k_bits - 1) == 0
    if power_of_two and 2 * k_bits >= num_classes:
        h = hadamard_matrix(k_bits)
        rows = np.vstack([h, -h])[:num_classes]
        centers = ((rows + 1) // 2).astype(np.uint8)
        cs = HashCenterSet(centers, k_bits)
        validate_centers(cs)
        return cs

    rng = np.random.default_rng(seed)
    ones = k_bits // 2
    best_min = -1
    best_avg = -1.0
    for _ in range(max_rounds):
        centers = np.zeros((num_classes, k_bits), dtype=np.uint8)
        for i in range(num_classes):
            pos = rng.permutation(k_bits)[:ones]
            centers[i, pos] = 1
        d = pairwise_hamming(centers)
        if int(d.min()) > best_min:
            best_min = int(d.min())
            best_avg = float(d.mean())
        if (d > 0).all() and d.mean() >= k_bits / 2:
            return HashCenterSet(centers, k_bits)
    raise CenterGenerationError(
        f"no valid center set for {num_classes} classes at {k_bits} bits after "
        f"{max_rounds} rounds (best min distance {best_min}, best average {best_avg:.3f})",
        best_min_distance=best_min, best_avg_distance=best_avg)


def save_centers(path, cs: HashCenterSet) -> None:
    """One center per line as a 0/1 string."""
    lines = ["".join(str(int(b)) for b in row) for row in cs.centers]
    Path(path).write_text("\n".join(lines) + "\n")


def load_centers(path) -> HashCenterSet:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln]
    if not lines:
        raise ConfigError(f"empty center file {path}")
    k = len(lines[0])
    if any(len(ln) != k or set(ln) - {"0", "1"} for ln in lines):
        raise ConfigError(f"malformed center file {path}")
    centers = np.array([[int(ch) for ch in ln] for ln in lines], dtype=np.uint8)
    return HashCenterSet(centers, k)
