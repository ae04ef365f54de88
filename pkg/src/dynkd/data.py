"""Datasets: IDX image/label files and synthetic Gaussian blobs.

IDX layout (big-endian)::

    images: u32 magic 0x00000803, u32 count, u32 rows, u32 cols, count*rows*cols u8
    labels: u32 magic 0x00000801, u32 count, count u8
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagicError, CountMismatchError, TruncatedFileError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64
    class_count: int
    name: str = ""
    image_shape: tuple[int, int] | None = None

    def __post_init__(self):
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ValueError("features must be (n, d) and labels (n,)")
        if len(self.labels) < 1:
            raise ValueError("dataset is empty")
        if self.labels.min() < 0 or self.labels.max() >= self.class_count:
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        if not np.isfinite(self.features).all():
            raise ValueError("non-finite features")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, index) -> "Dataset":
        return Dataset(self.features[index], self.labels[index], self.class_count, self.name, self.image_shape)


def _read_exact(buf: bytes, offset: int, size: int, path) -> bytes:
    if offset + size > len(buf):
        raise TruncatedFileError(f"{path}: truncated, needed {offset + size} bytes but file has {len(buf)}")
    return buf[offset : offset + size]


def read_idx_images(path) -> np.ndarray:
    """Raw u8 image tensor of shape (count, rows, cols)."""
    buf = Path(path).read_bytes()
    magic, count, rows, cols = struct.unpack(">IIII", _read_exact(buf, 0, 16, path))
    if magic != IDX_IMAGES_MAGIC:
        raise BadMagicError(f"{path}: bad IDX image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
    body = _read_exact(buf, 16, count * rows * cols, path)
    return np.frombuffer(body, dtype=np.uint8).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    magic, count = struct.unpack(">II", _read_exact(buf, 0, 8, path))
    if magic != IDX_LABELS_MAGIC:
        raise BadMagicError(f"{path}: bad IDX label magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
    return np.frombuffer(_read_exact(buf, 8, count, path), dtype=np.uint8)


def load_idx(images_path, labels_path, class_count: int | None = None) -> Dataset:
    """Load an IDX image/label pair; pixels are divided by 255.

    ``class_count`` defaults to ``max(label) + 1``.
    """
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise CountMismatchError(
            f"count mismatch: {images_path} holds {len(images)} images, {labels_path} holds {len(labels)} labels"
        )
    n, rows, cols = images.shape
    m = int(labels.max()) + 1 if class_count is None else class_count
    feats = images.reshape(n, rows * cols).astype(np.float64) / 255.0
    return Dataset(feats, labels.astype(np.int64), max(m, 2), Path(images_path).name, (rows, cols))


def write_idx(dataset: Dataset, images_path, labels_path) -> None:
    """Inverse of :func:`load_idx` for datasets whose features are multiples of 1/255."""
    if dataset.image_shape is None:
        raise ValueError("dataset has no image shape")
    rows, cols = dataset.image_shape
    n = len(dataset)
    pixels = np.rint(dataset.features * 255.0)
    if pixels.min() < 0 or pixels.max() > 255:
        raise ValueError("features outside [0, 1] cannot be written as u8 pixels")
    Path(images_path).write_bytes(
        struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + pixels.astype(np.uint8).tobytes()
    )
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, n) + dataset.labels.astype(np.uint8).tobytes())


def blob_centers(m: int, d: int) -> np.ndarray:
    """Class c sits on the hypercube vertex spelling c in binary, each bit tiled across the dims.

    Dim j of center c is bit ``j % B`` of c, with B = ceil(log2 m).
    """
    bits = max(1, math.ceil(math.log2(m)))
    if d < bits:
        raise ValueError(f"{m} classes need at least {bits} dims for distinct vertices, got d={d}")
    c = np.arange(m)[:, None]
    j = np.arange(d)[None, :] % bits
    return ((c >> j) & 1).astype(np.float64)


def synth_blobs(seed: int, m: int, n: int, d: int, spread: float, name: str = "blobs") -> Dataset:
    """``n`` samples per class around :func:`blob_centers`, Gaussian noise of std ``spread``.

    Samples are interleaved by class (sample i has label i % m), so any prefix
    of the dataset is close to balanced.
    """
    if m < 2 or n < 1 or d < 1:
        raise ValueError("need m >= 2, n >= 1, d >= 1")
    if spread < 0:
        raise ValueError("spread must be nonnegative")
    centers = blob_centers(m, d)
    labels = np.tile(np.arange(m), n)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((m * n, d)) * spread
    return Dataset(centers[labels] + noise, labels.astype(np.int64), m, name)


def nearest_center_accuracy(dataset: Dataset, centers: np.ndarray) -> float:
    d2 = ((dataset.features[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
    return float((d2.argmin(axis=1) == dataset.labels).mean())
