"""Datasets and device partitioning.

Real data arrives as IDX image/label files (gzipped or raw); a synthetic
Gaussian-blob generator with the same shape contract (10 classes, 784 dims,
features in [0, 1]) backs tests and environments without the files.
"""

from __future__ import annotations

import gzip
import math
import os
import struct
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .numerics import PURPOSE_DATASET, PURPOSE_PARTITION, SeededRng

_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801

IMAGES_TRAIN = "train-images-idx3-ubyte"
LABELS_TRAIN = "train-labels-idx1-ubyte"
IMAGES_TEST = "t10k-images-idx3-ubyte"
LABELS_TEST = "t10k-labels-idx1-ubyte"


@dataclass
class Dataset:
    """Feature matrix (n, dim) scaled to [0, 1] plus integer labels (n,)."""

    features: NDArray[np.float64]
    labels: NDArray[np.int64]

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ValueError("features must be 2-d")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must be 1-d and match feature count")

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def _read_maybe_gzip(path: str) -> bytes:
    with open(path, "rb") as fh:
        head = fh.read(2)
        fh.seek(0)
        if head == b"\x1f\x8b":
            with gzip.open(fh) as gz:
                return gz.read()
        return fh.read()


def read_idx_images(path: str) -> NDArray[np.float64]:
    """Parse an IDX image file into an (n, rows*cols) float matrix in [0, 1].

    Header is big-endian: magic 0x00000803, then count, rows, cols as u32.
    Gzipped files are detected by their magic bytes.
    """
    raw = _read_maybe_gzip(path)
    if len(raw) < 16:
        raise ValueError(f"{path}: truncated IDX image header")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != _IDX_IMAGES_MAGIC:
        raise ValueError(f"{path}: bad IDX image magic {magic:#010x}")
    expected = count * rows * cols
    body = raw[16:]
    if len(body) != expected:
        raise ValueError(f"{path}: expected {expected} pixels, found {len(body)}")
    pixels = np.frombuffer(body, dtype=np.uint8).astype(np.float64)
    return (pixels / 255.0).reshape(count, rows * cols)


def read_idx_labels(path: str) -> NDArray[np.int64]:
    """Parse an IDX label file into an (n,) int array."""
    raw = _read_maybe_gzip(path)
    if len(raw) < 8:
        raise ValueError(f"{path}: truncated IDX label header")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != _IDX_LABELS_MAGIC:
        raise ValueError(f"{path}: bad IDX label magic {magic:#010x}")
    body = raw[8:]
    if len(body) != count:
        raise ValueError(f"{path}: expected {count} labels, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).astype(np.int64)


def load_mnist_pair(images_path: str, labels_path: str) -> Dataset:
    features = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if features.shape[0] != labels.shape[0]:
        raise ValueError(
            f"image/label count mismatch: {features.shape[0]} vs {labels.shape[0]}"
        )
    return Dataset(features, labels)


def _find_idx(directory: str, stem: str) -> str:
    for candidate in (stem, stem + ".gz"):
        path = os.path.join(directory, candidate)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"{stem}[.gz] not found in {directory}")


def load_mnist_dir(directory: str) -> tuple[Dataset, Dataset]:
    """Load the standard train/test IDX files (optionally .gz) from a directory."""
    train = load_mnist_pair(
        _find_idx(directory, IMAGES_TRAIN), _find_idx(directory, LABELS_TRAIN)
    )
    test = load_mnist_pair(
        _find_idx(directory, IMAGES_TEST), _find_idx(directory, LABELS_TEST)
    )
    return train, test


def synthetic_blobs(
    n_train: int,
    n_test: int,
    rng: SeededRng,
    n_classes: int = 10,
    dim: int = 784,
    rank: int = 16,
    style_scale: float = 1.1,
    clip_sigma: float = 1.8,
    ambient_std: float = 0.1,
) -> tuple[Dataset, Dataset]:
    """Gaussian-blob stand-in for the image data.

    Class signatures and per-sample "style" variation live in one shared
    rank-`rank` subspace: class means then differ strongly coordinate-wise
    (like bright strokes moving between digit classes) while classification
    stays imperfect, because the style noise acts along the same directions.
    A saturating clip at `clip_sigma` per-coordinate standard deviations
    mimics the bounded, high-contrast intensities of image pixels and sets
    the gradient scale; `ambient_std` fills the remaining dimensions with
    featureless noise. Class counts are exactly balanced, sample order is
    shuffled, and a fixed affine map puts all features in [0, 1].
    Deterministic in `rng`.
    """
    if n_train % n_classes or n_test % n_classes:
        raise ValueError("sample counts must be divisible by the class count")
    if not 1 <= rank <= dim:
        raise ValueError(f"require 1 <= rank <= dim, got rank={rank}, dim={dim}")
    gen = rng.stream(PURPOSE_DATASET).generator
    basis, _ = np.linalg.qr(gen.standard_normal((dim, rank)))  # orthonormal columns
    signatures = gen.standard_normal((n_classes, rank))
    # expected per-coordinate std of the subspace part plus ambient noise
    sd = math.sqrt((1.0 + style_scale**2) * rank / dim + ambient_std**2)
    bound = clip_sigma * sd

    def make(n):
        labels = np.repeat(np.arange(n_classes, dtype=np.int64), n // n_classes)
        latent = signatures[labels] + gen.standard_normal((n, rank)) * style_scale
        feats = latent @ basis.T + gen.standard_normal((n, dim)) * ambient_std
        np.clip(feats, -bound, bound, out=feats)
        feats += bound
        feats /= 2.0 * bound
        order = gen.permutation(n)
        return feats[order], labels[order]

    train_x, train_y = make(n_train)
    test_x, test_y = make(n_test)
    return Dataset(train_x, train_y), Dataset(test_x, test_y)


@dataclass
class DatasetPartition:
    """Per-device shards of training-sample indices."""

    shards: list[NDArray[np.int64]]
    mode: str  # "iid" | "non_iid"

    @property
    def m_devices(self) -> int:
        return len(self.shards)

    def union(self) -> NDArray[np.int64]:
        return np.concatenate(self.shards)


def partition(
    dataset: Dataset,
    m_devices: int,
    shard_size: int,
    mode: str,
    rng: SeededRng,
) -> DatasetPartition:
    """Split `m_devices * shard_size` training samples across devices.

    "iid": a uniform draw without replacement, split evenly.
    "non_iid": each device holds shard_size/2 samples from each of two labels
    picked for it, labels drawn uniformly among those with enough unassigned
    samples left. Samples are never assigned twice.
    """
    n = len(dataset)
    if m_devices <= 0 or shard_size <= 0:
        raise ValueError("m_devices and shard_size must be positive")
    if m_devices * shard_size > n:
        raise ValueError(
            f"cannot place {m_devices}x{shard_size} samples from a pool of {n}"
        )
    gen = rng.stream(PURPOSE_PARTITION).generator
    if mode == "iid":
        perm = gen.permutation(n)[: m_devices * shard_size]
        shards = [
            np.sort(perm[i * shard_size : (i + 1) * shard_size]).astype(np.int64)
            for i in range(m_devices)
        ]
        return DatasetPartition(shards, "iid")
    if mode != "non_iid":
        raise ValueError(f"unknown partition mode: {mode!r}")
    if shard_size % 2:
        raise ValueError("non_iid requires an even shard_size")
    half = shard_size // 2
    labels = np.unique(dataset.labels)
    pools = {}
    cursor = {}
    for lab in labels:
        idx = np.flatnonzero(dataset.labels == lab)
        pools[int(lab)] = idx[gen.permutation(len(idx))]
        cursor[int(lab)] = 0
    shards = []
    for _ in range(m_devices):
        feasible = [l for l in pools if len(pools[l]) - cursor[l] >= half]
        if len(feasible) < 2:
            raise ValueError("not enough label capacity for a non_iid split")
        pick = gen.choice(len(feasible), size=2, replace=False)
        chosen = [feasible[int(i)] for i in pick]
        parts = []
        for lab in chosen:
            start = cursor[lab]
            parts.append(pools[lab][start : start + half])
            cursor[lab] = start + half
        shards.append(np.sort(np.concatenate(parts)).astype(np.int64))
    return DatasetPartition(shards, "non_iid")
