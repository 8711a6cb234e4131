"""Datasets: synthetic blobs, IDX ingestion and client partitioning."""
from __future__ import annotations

import gzip
import itertools
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "LabeledDataset",
    "SyntheticSpec",
    "PartitionSpec",
    "IdxFormatError",
    "PartitionError",
    "generate_blobs",
    "class_centroids",
    "load_idx",
    "write_idx",
    "partition",
    "partition_indices",
    "assign_labels",
]

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int = 10

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {x.shape}")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ValueError(f"{x.shape[0]} feature rows but labels of shape {y.shape}")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.num_classes)

    def label_set(self) -> set[int]:
        return set(np.unique(self.labels).tolist())


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian blobs, one cluster per class."""

    input_dim: int = 20
    num_classes: int = 10
    cluster_spread: float = 0.5
    samples: int = 6000
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1 or self.num_classes < 2 or self.samples < 1:
            raise ValueError("input_dim >= 1, num_classes >= 2 and samples >= 1 required")
        if not (self.cluster_spread >= 0 and math.isfinite(self.cluster_spread)):
            raise ValueError("cluster_spread must be a finite non-negative number")


def class_centroids(input_dim: int, num_classes: int) -> np.ndarray:
    """Pairwise-distinct class centres.

    Scaled simplex vertices (unit basis vectors) when there are enough
    dimensions, otherwise the first points of an integer grid.
    """
    if input_dim >= num_classes:
        c = np.zeros((num_classes, input_dim))
        c[np.arange(num_classes), np.arange(num_classes)] = 1.0
        return c
    side = math.ceil(num_classes ** (1.0 / input_dim))
    while side**input_dim < num_classes:
        side += 1
    pts = list(itertools.islice(itertools.product(range(side), repeat=input_dim), num_classes))
    return np.asarray(pts, dtype=np.float64) / max(side - 1, 1)


def generate_blobs(spec: SyntheticSpec) -> LabeledDataset:
    rng = np.random.default_rng(spec.seed)
    per_class, extra = divmod(spec.samples, spec.num_classes)
    labels = np.concatenate(
        [np.full(per_class + (c < extra), c, dtype=np.int64) for c in range(spec.num_classes)]
    )
    labels = labels[rng.permutation(labels.shape[0])]
    centres = class_centroids(spec.input_dim, spec.num_classes)
    noise = rng.standard_normal((labels.shape[0], spec.input_dim))
    features = centres[labels] + spec.cluster_spread * noise
    return LabeledDataset(features, labels, spec.num_classes)


def _open(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise IdxFormatError(f"truncated {what}: expected {n} bytes, got {len(buf)}")
    return buf


def load_idx(images_path, labels_path, num_classes: int = 10) -> LabeledDataset:
    """Read an IDX image/label file pair (MNIST layout, optionally gzipped).

    Pixels are unsigned bytes scaled to [0, 1]; each image is flattened
    row-major into one feature row.
    """
    with _open(images_path) as fh:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, "image header"))
        if magic != IMAGES_MAGIC:
            raise IdxFormatError(f"bad image magic 0x{magic:08x}, expected 0x{IMAGES_MAGIC:08x}")
        pixels = _read_exact(fh, count * rows * cols, "image data")
    with _open(labels_path) as fh:
        magic, n_labels = struct.unpack(">II", _read_exact(fh, 8, "label header"))
        if magic != LABELS_MAGIC:
            raise IdxFormatError(f"bad label magic 0x{magic:08x}, expected 0x{LABELS_MAGIC:08x}")
        raw_labels = _read_exact(fh, n_labels, "label data")
    if n_labels != count:
        raise IdxFormatError(f"image count {count} does not match label count {n_labels}")

    x = np.frombuffer(pixels, dtype=np.uint8).reshape(count, rows * cols) / 255.0
    y = np.frombuffer(raw_labels, dtype=np.uint8).astype(np.int64)
    return LabeledDataset(x, y, num_classes)


def write_idx(images: np.ndarray, labels: Sequence[int], images_path, labels_path) -> None:
    """Write uint8 images of shape (count, rows, cols) and labels as IDX files."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    count, rows, cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGES_MAGIC, count, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


@dataclass(frozen=True)
class PartitionSpec:
    """How client datasets are carved out of a source dataset.

    ``labels_per_client`` of ``None`` means iid; otherwise client ``i`` gets
    exactly ``labels_per_client[i]`` distinct labels.
    """

    clients: int = 8
    samples_per_client: int = 200
    labels_per_client: tuple[int, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.clients < 1 or self.samples_per_client < 1:
            raise ValueError("clients and samples_per_client must be positive")
        if self.labels_per_client is not None:
            counts = tuple(int(c) for c in self.labels_per_client)
            object.__setattr__(self, "labels_per_client", counts)
            if len(counts) != self.clients:
                raise ValueError(
                    f"labels_per_client has {len(counts)} entries for {self.clients} clients"
                )
            if any(c < 1 for c in counts):
                raise ValueError("labels_per_client entries must be positive")

    @property
    def scheme(self) -> str:
        return "iid" if self.labels_per_client is None else "labels_per_client"


def assign_labels(counts: Sequence[int], num_classes: int, rng: np.random.Generator) -> list[list[int]]:
    """Choose the distinct label set held by each client.

    Labels are first dealt round-robin over clients with free slots until
    every class is held by someone; leftover slots are then filled with
    labels the client does not yet hold, drawn uniformly from ``rng``.
    """
    if any(c > num_classes for c in counts):
        raise PartitionError(f"a client cannot hold more than {num_classes} distinct labels")
    if sum(counts) < num_classes:
        raise PartitionError(
            f"label slots ({sum(counts)}) cannot cover all {num_classes} classes"
        )
    held: list[list[int]] = [[] for _ in counts]
    pending = list(range(num_classes))
    while pending:
        for i, c in enumerate(counts):
            if pending and len(held[i]) < c:
                held[i].append(pending.pop(0))
    for i, c in enumerate(counts):
        need = c - len(held[i])
        if need > 0:
            free = np.array([lab for lab in range(num_classes) if lab not in held[i]])
            held[i].extend(int(x) for x in rng.choice(free, size=need, replace=False))
    return [sorted(h) for h in held]


def _split_even(total: int, parts: int) -> list[int]:
    q, r = divmod(total, parts)
    return [q + (j < r) for j in range(parts)]


def partition(data: LabeledDataset, spec: PartitionSpec) -> list[LabeledDataset]:
    """Split ``data`` into disjoint, equally sized client datasets.

    Each client's samples are spread evenly (to within one) across its
    labels; under iid every client holds every label.
    """
    return [data.subset(idx) for idx in partition_indices(data, spec)]


def partition_indices(data: LabeledDataset, spec: PartitionSpec) -> list[np.ndarray]:
    """Row indices into ``data`` for each client (sorted, pairwise disjoint)."""
    rng = np.random.default_rng(spec.seed)
    k = data.num_classes
    if spec.labels_per_client is None:
        label_sets = [list(range(k)) for _ in range(spec.clients)]
    else:
        label_sets = assign_labels(spec.labels_per_client, k, rng)

    pools = {c: rng.permutation(np.flatnonzero(data.labels == c)).tolist() for c in range(k)}
    demand = dict.fromkeys(range(k), 0)
    plans = []
    for labels in label_sets:
        if len(labels) > spec.samples_per_client:
            raise PartitionError(
                f"{spec.samples_per_client} samples cannot cover {len(labels)} labels"
            )
        plan = list(zip(labels, _split_even(spec.samples_per_client, len(labels))))
        for lab, n in plan:
            demand[lab] += n
        plans.append(plan)
    short = {c: (demand[c], len(pools[c])) for c in range(k) if demand[c] > len(pools[c])}
    if short:
        detail = ", ".join(f"label {c}: need {d}, have {h}" for c, (d, h) in short.items())
        raise PartitionError(f"insufficient samples ({detail})")

    out = []
    for plan in plans:
        idx = []
        for lab, n in plan:
            idx.extend(pools[lab][:n])
            del pools[lab][:n]
        out.append(np.array(sorted(idx), dtype=np.int64))
    return out
