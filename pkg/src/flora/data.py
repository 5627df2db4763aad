"""Datasets for the desk-scale experiments: IDX files and Gaussian blobs."""

import gzip
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError, FormatError
from .matcore import GaussStream, derive_seed

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

FASHION_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise DataError("features must be (N, d) with one label per row")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise DataError(f"labels must lie in [0, {self.n_classes})")
        if not np.isfinite(self.features).all():
            raise DataError("features contain NaN or Inf")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def subset(self, idx):
        return Dataset(self.features[idx], self.labels[idx], self.n_classes)


def _read_bytes(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _header(raw, magic, ndim, what):
    need = 4 + 4 * ndim
    if len(raw) < need:
        raise FormatError(f"{what}: truncated header", offset=len(raw))
    found = int.from_bytes(raw[0:4], "big")
    if found != magic:
        raise FormatError(f"{what}: magic 0x{found:08x}, expected 0x{magic:08x}", offset=0)
    dims = [int.from_bytes(raw[4 + 4 * i : 8 + 4 * i], "big") for i in range(ndim)]
    body = int(np.prod(dims))
    if len(raw) < need + body:
        raise FormatError(f"{what}: truncated payload, expected {body} bytes after header", offset=len(raw))
    return dims, np.frombuffer(raw, dtype=np.uint8, count=body, offset=need)


def load_idx(images_path, labels_path, n_classes=10):
    """Read an IDX image/label pair (plain or gzip). Pixels are scaled to [0, 1]."""
    (count, rows, cols), pixels = _header(_read_bytes(images_path), IMAGES_MAGIC, 3, "images")
    (n_labels,), labels = _header(_read_bytes(labels_path), LABELS_MAGIC, 1, "labels")
    if n_labels != count:
        raise FormatError(f"labels file holds {n_labels} items, images file {count}", offset=4)
    bad = np.flatnonzero(labels >= n_classes)
    if bad.size:
        raise FormatError(f"label {labels[bad[0]]} >= {n_classes}", offset=8 + int(bad[0]))
    features = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    return Dataset(features, labels.astype(np.int64), n_classes)


def _find(data_dir, stem):
    for name in (stem, stem + ".gz"):
        path = os.path.join(data_dir, name)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"{stem}[.gz] not found in {data_dir}")


def load_fashion_mnist(data_dir):
    """``(train, test)`` from the four standard Fashion-MNIST files in ``data_dir``."""
    out = []
    for split in ("train", "test"):
        images, labels = FASHION_FILES[split]
        out.append(load_idx(_find(data_dir, images), _find(data_dir, labels)))
    return tuple(out)


def seeded_permutation(n, seed):
    """Permutation of ``range(n)`` that depends only on ``seed``."""
    keys = GaussStream(seed).next(n)
    return np.argsort(keys, kind="stable")


def synth_blobs(seed, n_per_class, dim, classes, separation=1.0, noise=1.0):
    """Isotropic Gaussian clusters around random class means.

    Means are ``separation`` times a random unit vector; each sample adds
    N(0, noise^2) per coordinate. Rows are shuffled deterministically.
    """
    means = GaussStream(derive_seed(seed, 0)).next(classes * dim).reshape(classes, dim)
    means *= separation / np.linalg.norm(means, axis=1, keepdims=True)
    labels = np.repeat(np.arange(classes), n_per_class)
    z = GaussStream(derive_seed(seed, 1)).next(labels.size * dim).reshape(labels.size, dim)
    features = means[labels] + noise * z
    order = seeded_permutation(labels.size, derive_seed(seed, 2))
    return Dataset(features[order], labels[order], classes)
