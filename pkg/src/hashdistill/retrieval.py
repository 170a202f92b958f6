"""Correctness-first retrieval: sign binarization, packed Hamming ranking,
and average precision / mean average precision over the top N.

AP@N = sum_i P(i) alpha(i) / sum_i alpha(i) with P(i) the running
precision and alpha(i) the relevance indicator; a query with no relevant
item in the top N scores 0. mAP@N is the plain mean over queries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ConfigError


def words_per_code(k_bits: int) -> int:
    return (k_bits + 63) // 64


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack 0/1 bit rows into little-endian 64-bit words; bit j of a code
    lands in bit (j mod 64) of word (j div 64)."""
    bits = np.asarray(bits, dtype=np.uint64)
    count, k = bits.shape
    words = np.zeros((count, words_per_code(k)), dtype=np.uint64)
    for j in range(k):
        words[:, j // 64] |= bits[:, j] << np.uint64(j % 64)
    return words


def unpack_bits(words: np.ndarray, k_bits: int) -> np.ndarray:
    words = np.asarray(words, dtype=np.uint64)
    bits = np.zeros((words.shape[0], k_bits), dtype=np.uint8)
    for j in range(k_bits):
        bits[:, j] = (words[:, j // 64] >> np.uint64(j % 64)) & np.uint64(1)
    return bits


@dataclass
class CodeMatrix:
    """Bit-packed binary codes plus label sets and stable item ids."""

    codes: np.ndarray  # uint64, count x words_per_code(k_bits)
    k_bits: int
    labels: tuple[frozenset[int], ...]
    ids: np.ndarray  # uint64, count

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.uint64)
        self.ids = np.asarray(self.ids, dtype=np.uint64)
        count = self.codes.shape[0]
        if len(self.labels) != count or self.ids.shape[0] != count:
            raise ConfigError("codes, labels, and ids must have equal counts")
        if self.codes.shape[1] != words_per_code(self.k_bits):
            raise ConfigError(
                f"expected {words_per_code(self.k_bits)} words for {self.k_bits} bits")

    @property
    def count(self) -> int:
        return self.codes.shape[0]


def binarize(features) -> np.ndarray:
    """Sign binarization: bit = 1 iff the activation is >= 0 (the bit for
    an exact zero is 1 by convention). Returns 0/1 rows."""
    if isinstance(features, torch.Tensor):
        values = features.detach().cpu().numpy()
    else:
        values = np.asarray(getattr(features, "values", features))
        if isinstance(values, torch.Tensor):
            values = values.detach().cpu().numpy()
    if not np.isfinite(values).all():
        raise ConfigError("cannot binarize non-finite features")
    return (values >= 0).astype(np.uint8)


def codes_from_features(features, labels, ids=None) -> CodeMatrix:
    """Binarize and pack a feature batch into a CodeMatrix."""
    bits = binarize(features)
    from .hash_losses import label_sets
    sets = tuple(label_sets(labels))
    if ids is None:
        ids = np.arange(bits.shape[0], dtype=np.uint64)
    return CodeMatrix(pack_bits(bits), bits.shape[1], sets, np.asarray(ids, dtype=np.uint64))


@dataclass
class RankedList:
    """Top-N database items: non-decreasing distances, ids break ties."""

    ids: np.ndarray
    distances: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)


def hamming_rank(query_code: np.ndarray, database: CodeMatrix, n: int) -> RankedList:
    """The n database items nearest the query in Hamming distance,
    ties broken by ascending database id."""
    query_code = np.asarray(query_code, dtype=np.uint64).reshape(-1)
    if query_code.shape[0] != database.codes.shape[1]:
        raise ConfigError(
            f"query has {query_code.shape[0]} words, database codes have "
            f"{database.codes.shape[1]}")
    if n > database.count:
        raise ConfigError(f"requested top {n} from a {database.count}-item database")
    dists = np.bitwise_count(database.codes ^ query_code[None, :]).sum(axis=1, dtype=np.int64)
    order = np.lexsort((database.ids, dists))[:n]
    return RankedList(database.ids[order].copy(), dists[order].astype(np.int32))


def average_precision_at_n(ranked: RankedList, relevance) -> float:
    """Average precision over a ranked list given per-item 0/1 relevance;
    0 when nothing relevant was retrieved."""
    rel = np.asarray(relevance, dtype=np.float64)
    if len(ranked) == 0:
        raise ConfigError("empty ranked list")
    if rel.shape[0] != len(ranked):
        raise ConfigError("relevance length must match the ranked list")
    hits = rel.sum()
    if hits == 0:
        return 0.0
    cum = np.cumsum(rel)
    precision = cum / np.arange(1, len(rel) + 1)
    return float((precision * rel).sum() / hits)


def map_at_n(queries: CodeMatrix, database: CodeMatrix, n: int) -> tuple[float, np.ndarray]:
    """Mean of per-query AP@N; returns (mAP, per-query AP vector)."""
    if queries.count == 0:
        raise ConfigError("zero queries")
    if queries.k_bits != database.k_bits:
        raise ConfigError(
            f"query codes are {queries.k_bits}-bit, database codes {database.k_bits}-bit")
    id_to_index = {int(i): idx for idx, i in enumerate(database.ids)}
    aps = np.zeros(queries.count, dtype=np.float64)
    for qi in range(queries.count):
        ranked = hamming_rank(queries.codes[qi], database, n)
        q_labels = queries.labels[qi]
        rel = [1.0 if q_labels & database.labels[id_to_index[int(i)]] else 0.0
               for i in ranked.ids]
        aps[qi] = average_precision_at_n(ranked, rel)
    return float(aps.mean()), aps
