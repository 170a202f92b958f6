"""Shared binary code file format (bit-exact with the standalone engine).

Layout, little-endian throughout:
  magic "CUKD" | u16 format version | u16 K_bits | u64 item count
  per item: u64 id, ceil(K_bits/64) x u64 code words
  label block, per item in order: u16 label count, then u32 label ids
    (written sorted ascending)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError
from .retrieval import CodeMatrix, words_per_code

MAGIC = b"CUKD"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHHQ")


def write_code_file(path, matrix: CodeMatrix) -> None:
    words = words_per_code(matrix.k_bits)
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, matrix.k_bits, matrix.count)]
    item = struct.Struct(f"<Q{words}Q")
    for i in range(matrix.count):
        parts.append(item.pack(int(matrix.ids[i]), *(int(w) for w in matrix.codes[i])))
    for i in range(matrix.count):
        labels = sorted(matrix.labels[i])
        parts.append(struct.pack(f"<H{len(labels)}I", len(labels), *labels))
    Path(path).write_bytes(b"".join(parts))


def read_code_file(path) -> CodeMatrix:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated header, expected {_HEADER.size} bytes, got {len(raw)}")
    magic, version, k_bits, count = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {version}")
    words = words_per_code(k_bits)
    item = struct.Struct(f"<Q{words}Q")
    codes_end = _HEADER.size + count * item.size
    if len(raw) < codes_end:
        raise DataError(
            f"{path}: truncated code section, expected at least {codes_end} bytes, "
            f"got {len(raw)}")
    ids = np.zeros(count, dtype=np.uint64)
    codes = np.zeros((count, words), dtype=np.uint64)
    offset = _HEADER.size
    for i in range(count):
        fields = item.unpack_from(raw, offset)
        ids[i] = fields[0]
        codes[i] = fields[1:]
        offset += item.size
    labels = []
    for i in range(count):
        if offset + 2 > len(raw):
            raise DataError(f"{path}: truncated label block at item {i}")
        (n_labels,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        end = offset + 4 * n_labels
        if end > len(raw):
            raise DataError(
                f"{path}: truncated label list at item {i}, expected {end} bytes, "
                f"got {len(raw)}")
        labels.append(frozenset(struct.unpack_from(f"<{n_labels}I", raw, offset)))
        offset = end
    if offset != len(raw):
        raise DataError(f"{path}: {len(raw) - offset} trailing bytes after label block")
    return CodeMatrix(codes, k_bits, tuple(labels), ids)
