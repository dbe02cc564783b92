"""Synthetic datasets, client partitioning, and an optional IDX loader."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (n, d) float32
    labels: np.ndarray  # (n,) int64 class indices
    num_classes: int

    def __post_init__(self) -> None:
        feats = np.ascontiguousarray(self.features, dtype=np.float32)
        labs = np.ascontiguousarray(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if feats.shape[0] != labs.shape[0]:
            raise ValueError("features and labels must have equal length")
        if labs.size and (labs.min() < 0 or labs.max() >= self.num_classes):
            raise ValueError("every label must lie in [0, num_classes)")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def subset(self, indices: np.ndarray) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)


def concat_datasets(datasets: "list[Dataset]") -> "Dataset":
    if not datasets:
        raise ValueError("cannot concatenate zero datasets")
    classes = {d.num_classes for d in datasets}
    if len(classes) != 1:
        raise ValueError("datasets disagree on num_classes")
    return Dataset(
        np.concatenate([d.features for d in datasets]),
        np.concatenate([d.labels for d in datasets]),
        classes.pop(),
    )


def split_train_heldout(dataset: Dataset, train_per_class: int) -> "tuple[Dataset, Dataset]":
    """Per class, the first train_per_class samples train; the rest hold out."""
    train_idx: list[np.ndarray] = []
    held_idx: list[np.ndarray] = []
    for cls in range(dataset.num_classes):
        idx = np.flatnonzero(dataset.labels == cls)
        if len(idx) <= train_per_class:
            raise ValueError(
                f"class {cls} has {len(idx)} samples, need more than {train_per_class}"
            )
        train_idx.append(idx[:train_per_class])
        held_idx.append(idx[train_per_class:])
    return dataset.subset(np.concatenate(train_idx)), dataset.subset(np.concatenate(held_idx))


class PartitionMode(enum.Enum):
    IID = "iid"
    NON_IID = "non_iid"


@dataclass(frozen=True)
class PartitionSpec:
    mode: PartitionMode
    num_clients: int
    primary_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        if not 0.0 < self.primary_fraction <= 1.0:
            raise ValueError("primary_fraction must lie in (0, 1]")


def class_center(seed: int, cls: int, feature_dim: int) -> np.ndarray:
    """Deterministic cluster center for (seed, class), scaled for separation."""
    rng = np.random.default_rng([seed, cls, 0xC3A7])
    return (rng.standard_normal(feature_dim) * 2.0).astype(np.float64)


def make_synthetic_dataset(
    num_classes: int,
    samples_per_class: int,
    feature_dim: int,
    cluster_spread: float,
    seed: int,
) -> Dataset:
    """Gaussian-blob classification set, reproducible bit-for-bit from seed.

    Class c is centred at a point derived only from (seed, c); spread 0
    puts every sample exactly on its centre.
    """
    if num_classes < 1 or samples_per_class < 1:
        raise ValueError("num_classes and samples_per_class must be >= 1")
    if feature_dim < 1:
        raise ValueError("feature_dim must be >= 1")
    if cluster_spread < 0:
        raise ValueError("cluster_spread must be >= 0")
    feats = np.empty((num_classes * samples_per_class, feature_dim), dtype=np.float64)
    labels = np.empty(num_classes * samples_per_class, dtype=np.int64)
    for cls in range(num_classes):
        center = class_center(seed, cls, feature_dim)
        rng = np.random.default_rng([seed, cls, 0x5A11])
        noise = rng.standard_normal((samples_per_class, feature_dim)) * cluster_spread
        lo = cls * samples_per_class
        feats[lo : lo + samples_per_class] = center + noise
        labels[lo : lo + samples_per_class] = cls
    return Dataset(feats.astype(np.float32), labels, num_classes)


def partition(dataset: Dataset, spec: PartitionSpec) -> list[Dataset]:
    """Split a dataset into per-client datasets, disjoint and exhaustive."""
    n = len(dataset)
    if n < spec.num_clients:
        raise ValueError(f"dataset of {n} samples cannot feed {spec.num_clients} clients")
    if spec.mode is PartitionMode.IID:
        index_parts = _split_iid(n, spec)
    else:
        if dataset.num_classes < 2:
            raise ValueError("non-IID partition needs at least 2 classes")
        index_parts = _split_non_iid(dataset, spec)
    return [dataset.subset(part) for part in index_parts]


def _client_sizes(n: int, k: int) -> list[int]:
    base, extra = divmod(n, k)
    return [base + (1 if j < extra else 0) for j in range(k)]


def _split_iid(n: int, spec: PartitionSpec) -> list[np.ndarray]:
    rng = np.random.default_rng([spec.seed, 0x11D])
    order = rng.permutation(n)
    sizes = _client_sizes(n, spec.num_clients)
    parts, start = [], 0
    for size in sizes:
        parts.append(np.sort(order[start : start + size]))
        start += size
    return parts


def _split_non_iid(dataset: Dataset, spec: PartitionSpec) -> list[np.ndarray]:
    # Primary classes round-robin over clients; each client first takes its
    # primary quota, then fills up uniformly from the other classes' leftovers.
    rng = np.random.default_rng([spec.seed, 0xAD])
    num_classes = dataset.num_classes
    pools: list[list[int]] = []
    for cls in range(num_classes):
        pool = np.flatnonzero(dataset.labels == cls)
        pools.append([int(i) for i in rng.permutation(pool)])
    sizes = _client_sizes(len(dataset), spec.num_clients)
    primaries = [j % num_classes for j in range(spec.num_clients)]

    parts: list[list[int]] = [[] for _ in range(spec.num_clients)]
    for j, size in enumerate(sizes):
        quota = int(np.ceil(spec.primary_fraction * size))
        pool = pools[primaries[j]]
        if len(pool) < quota:
            raise ValueError(
                f"class {primaries[j]} exhausted: client {j} needs {quota} primary "
                f"samples but only {len(pool)} remain"
            )
        parts[j].extend(pool[:quota])
        del pool[:quota]

    for j, size in enumerate(sizes):
        need = size - len(parts[j])
        if need <= 0:
            continue
        others = np.array(
            [i for cls in range(num_classes) if cls != primaries[j] for i in pools[cls]],
            dtype=np.int64,
        )
        k = min(need, len(others))
        taken = {int(i) for i in rng.choice(others, size=k, replace=False)} if k else set()
        parts[j].extend(taken)
        for cls in range(num_classes):
            if cls != primaries[j]:
                pools[cls] = [i for i in pools[cls] if i not in taken]
        if need > k:
            # Other classes ran dry; top up from the client's own primary pool.
            pool = pools[primaries[j]]
            parts[j].extend(pool[: need - k])
            del pool[: need - k]
    if any(pools[cls] for cls in range(num_classes)):
        raise AssertionError("partition left unassigned samples")
    return [np.sort(np.array(part, dtype=np.int64)) for part in parts]


# ---------------------------------------------------------------------------
# Optional reader for IDX-format image/label files (MNIST-family subsets).

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


def load_idx_dataset(image_path, label_path, limit: int | None = None, num_classes: int = 10) -> Dataset:
    """Read big-endian IDX image/label files into a flat float32 Dataset."""
    with open(image_path, "rb") as fh:
        magic, count, rows, cols = struct.unpack(">IIII", fh.read(16))
        if magic != IDX_IMAGE_MAGIC:
            raise ValueError(f"bad image magic 0x{magic:08x}")
        if limit is not None:
            count = min(count, limit)
        raw = np.frombuffer(fh.read(count * rows * cols), dtype=np.uint8)
    images = raw.reshape(count, rows * cols).astype(np.float32) / 255.0
    with open(label_path, "rb") as fh:
        magic, lcount = struct.unpack(">II", fh.read(8))
        if magic != IDX_LABEL_MAGIC:
            raise ValueError(f"bad label magic 0x{magic:08x}")
        if lcount < count:
            raise ValueError("fewer labels than images")
        labels = np.frombuffer(fh.read(count), dtype=np.uint8).astype(np.int64)
    return Dataset(images, labels, num_classes)
