"""Dataset split protocol: per-class query/train quotas with the remainder
as the retrieval database, plus loaders for the two benchmark datasets.

CIFAR-10: 100 query + 500 train images per class, 54,000 database images.
NUS-WIDE (21 frequent categories): 100 query + 500 train per category;
multi-label images are charged to exactly one of their labels by the
sampler, so the quotas stay exact.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

SPLIT_MANIFEST_HEADER = "# hashdistill split-manifest v1"
NUSWIDE_MANIFEST_HEADER = "# nuswide-manifest v1"
NUSWIDE_CATEGORIES = 21

CIFAR10_FILES = [f"data_batch_{i}" for i in range(1, 6)] + ["test_batch"]


@dataclass
class DatasetSplit:
    """Disjoint id sets over one global id space, with per-id label sets."""

    query_ids: np.ndarray
    train_ids: np.ndarray
    database_ids: np.ndarray
    labels: tuple[frozenset[int], ...]
    num_classes: int
    paths: tuple[str, ...] | None = None

    def __post_init__(self):
        q, t, d = set(self.query_ids.tolist()), set(self.train_ids.tolist()), set(self.database_ids.tolist())
        if q & t or q & d or t & d:
            raise ConfigError("query/train/database id sets overlap")
        n = len(self.labels)
        for ids in (self.query_ids, self.train_ids, self.database_ids):
            if len(ids) and (ids.min() < 0 or ids.max() >= n):
                raise ConfigError("split ids outside the label table")

    def labels_for(self, ids: np.ndarray) -> tuple[frozenset[int], ...]:
        return tuple(self.labels[int(i)] for i in ids)


def split_by_class_quota(labels: np.ndarray, query_per_class: int,
                         train_per_class: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Single-label quota split; remainder becomes the database."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    query, train = [], []
    for c in np.unique(labels):
        pool = np.flatnonzero(labels == c)
        if len(pool) < query_per_class + train_per_class:
            raise DataError(
                f"class {c} has {len(pool)} images, needs "
                f"{query_per_class + train_per_class}")
        pool = rng.permutation(pool)
        query.extend(pool[:query_per_class].tolist())
        train.extend(pool[query_per_class:query_per_class + train_per_class].tolist())
    taken = set(query) | set(train)
    database = np.array([i for i in range(len(labels)) if i not in taken], dtype=np.int64)
    return np.array(query, dtype=np.int64), np.array(train, dtype=np.int64), database


def multilabel_quota_split(label_sets, num_classes: int, query_per_class: int,
                           train_per_class: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quota split for overlapping labels: each selected image is charged
    to exactly one of its labels (the class whose quota consumed it)."""
    n = len(label_sets)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    used = np.zeros(n, dtype=bool)
    out = {"query": [], "train": []}
    for role, quota in (("query", query_per_class), ("train", train_per_class)):
        for c in range(num_classes):
            picked = 0
            for i in order:
                if picked == quota:
                    break
                if not used[i] and c in label_sets[i]:
                    used[i] = True
                    out[role].append(int(i))
                    picked += 1
            if picked < quota:
                raise DataError(
                    f"category {c} ran out of images: {picked}/{quota} for {role}")
    database = np.flatnonzero(~used).astype(np.int64)
    return (np.array(out["query"], dtype=np.int64),
            np.array(out["train"], dtype=np.int64), database)


def _load_cifar_batch(path: Path) -> tuple[np.ndarray, list[int]]:
    try:
        with open(path, "rb") as fh:
            batch = pickle.load(fh, encoding="bytes")
        data = batch[b"data"]
        labels = batch[b"labels"]
    except (OSError, pickle.UnpicklingError, KeyError, EOFError) as exc:
        raise DataError(f"corrupt CIFAR-10 batch {path}: {exc}") from exc
    data = np.asarray(data, dtype=np.uint8)
    if data.ndim != 2 or data.shape[1] != 3072:
        raise DataError(f"{path}: expected Nx3072 pixel rows, got {data.shape}")
    return data, list(labels)


def load_cifar10(root) -> tuple[np.ndarray, np.ndarray]:
    """All 60,000 images (N x 32 x 32 x 3 uint8) and labels, train batches
    first then the test batch."""
    base = Path(root) / "cifar-10-batches-py"
    if not base.is_dir():
        raise DataError(f"CIFAR-10 directory not found: {base}")
    rows, labels = [], []
    for name in CIFAR10_FILES:
        path = base / name
        if not path.exists():
            raise DataError(f"missing CIFAR-10 batch file: {path}")
        data, batch_labels = _load_cifar_batch(path)
        rows.append(data)
        labels.extend(batch_labels)
    images = np.concatenate(rows).reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
    return images, np.asarray(labels, dtype=np.int64)


def cifar10_labels(root) -> np.ndarray:
    return load_cifar10(root)[1]


def make_cifar10_split(root, seed: int) -> DatasetSplit:
    """100 query and 500 train images per class; the remaining images form
    the database."""
    labels = cifar10_labels(root)
    query, train, database = split_by_class_quota(labels, 100, 500, seed)
    return DatasetSplit(query, train, database,
                        tuple(frozenset([int(c)]) for c in labels), 10)


def read_nuswide_manifest(path) -> tuple[list[str], list[frozenset[int]]]:
    """Manifest rows: <relative path>\t<comma-separated label ids>."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != NUSWIDE_MANIFEST_HEADER:
        raise DataError(f"{path}: expected header {NUSWIDE_MANIFEST_HEADER!r}")
    paths, labels = [], []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rel, label_text = line.split("\t")
            label_set = frozenset(int(x) for x in label_text.split(","))
        except ValueError as exc:
            raise DataError(f"{path}:{ln}: malformed manifest row") from exc
        if not label_set:
            raise DataError(f"{path}:{ln}: image with no labels")
        paths.append(rel)
        labels.append(label_set)
    return paths, labels


def make_nuswide_split(manifest_path, seed: int) -> DatasetSplit:
    """100 query and 500 train images per category over the 21 frequent
    categories; multi-label images count toward one sampled category."""
    paths, labels = read_nuswide_manifest(manifest_path)
    present = set().union(*labels) if labels else set()
    missing = [c for c in range(NUSWIDE_CATEGORIES) if c not in present]
    if missing:
        raise DataError(f"manifest missing categories: {missing}")
    if max(present) >= NUSWIDE_CATEGORIES:
        raise DataError(
            f"manifest labels exceed the {NUSWIDE_CATEGORIES}-category subset")
    query, train, database = multilabel_quota_split(
        labels, NUSWIDE_CATEGORIES, 100, 500, seed)
    return DatasetSplit(query, train, database, tuple(labels),
                        NUSWIDE_CATEGORIES, paths=tuple(paths))


def save_split_manifest(path, split: DatasetSplit) -> None:
    """Versioned text manifest: id, role, path (or -), labels."""
    role_of = {}
    for role, ids in (("query", split.query_ids), ("train", split.train_ids),
                      ("database", split.database_ids)):
        for i in ids:
            role_of[int(i)] = role
    lines = [SPLIT_MANIFEST_HEADER]
    for i in sorted(role_of):
        ref = split.paths[i] if split.paths else "-"
        label_text = ",".join(str(c) for c in sorted(split.labels[i]))
        lines.append(f"{i}\t{role_of[i]}\t{ref}\t{label_text}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_split_manifest(path, num_classes: int) -> DatasetSplit:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != SPLIT_MANIFEST_HEADER:
        raise DataError(f"{path}: expected header {SPLIT_MANIFEST_HEADER!r}")
    ids = {"query": [], "train": [], "database": []}
    entries = {}
    paths = {}
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            ident, role, ref, label_text = line.split("\t")
            ident = int(ident)
            labels = frozenset(int(x) for x in label_text.split(","))
        except ValueError as exc:
            raise DataError(f"{path}:{ln}: malformed manifest row") from exc
        if role not in ids:
            raise DataError(f"{path}:{ln}: unknown role {role!r}")
        ids[role].append(ident)
        entries[ident] = labels
        paths[ident] = ref
    n = max(entries) + 1 if entries else 0
    if sorted(entries) != list(range(n)):
        raise DataError(f"{path}: manifest ids are not contiguous from 0")
    label_table = tuple(entries[i] for i in range(n))
    path_table = tuple(paths[i] for i in range(n))
    return DatasetSplit(
        np.array(ids["query"], dtype=np.int64),
        np.array(ids["train"], dtype=np.int64),
        np.array(ids["database"], dtype=np.int64),
        label_table, num_classes,
        paths=None if all(p == "-" for p in path_table) else path_table)
