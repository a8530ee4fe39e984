"""Datasets: IDX parsing, synthetic blobs, one-hot targets and seeded batching."""

from __future__ import annotations

import gzip
import os
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import (
    IdxCountMismatchError,
    IdxError,
    IdxHeaderError,
    IdxMagicError,
    IdxTrailingDataError,
    IdxTruncatedError,
)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

# file names used by MNIST and Fashion-MNIST
SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
DATA_DIR_ENV = "PCFLOW_DATA_DIR"


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.labels.ndim != 1 or len(self.inputs) != len(self.labels):
            raise ValueError("inputs must be (N, d) and labels (N,)")
        if not np.all(np.isfinite(self.inputs)):
            raise ValueError("inputs must be finite")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("labels out of range")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, n: int | None) -> "Dataset":
        if n is None or n >= len(self):
            return self
        return Dataset(self.inputs[:n], self.labels[:n], self.num_classes)


@dataclass(frozen=True)
class BatchPlan:
    batch_size: int = 64
    seed: int = 0
    drop_last: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def _read_bytes(path: str | Path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".gz":
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError, zlib.error) as exc:
            raise IdxTruncatedError(f"{path}: corrupt gzip stream ({exc})") from exc
    return raw


def parse_idx(raw: bytes, expected_magic: int, what: str = "idx") -> np.ndarray:
    """Parse an unsigned-byte IDX payload into an array of the header's shape."""
    if len(raw) < 4:
        raise IdxTruncatedError(f"{what}: {len(raw)} bytes, too short for a magic number")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise IdxMagicError(f"{what}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxTruncatedError(f"{what}: header needs {header} bytes, got {len(raw)}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = 1
    for d in dims:
        size *= d
    have = len(raw) - header
    if have < size:
        raise IdxTruncatedError(f"{what}: payload has {have} bytes, header declares {size}")
    if have > size:
        raise IdxTrailingDataError(f"{what}: {have - size} bytes after the declared payload")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def load_idx(images_path: str | Path, labels_path: str | Path, num_classes: int = 10) -> Dataset:
    images = parse_idx(_read_bytes(images_path), IMAGES_MAGIC, str(images_path))
    labels = parse_idx(_read_bytes(labels_path), LABELS_MAGIC, str(labels_path))
    if images.shape[0] != labels.shape[0]:
        raise IdxCountMismatchError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if images.shape[0] == 0 or images.shape[1] * images.shape[2] == 0:
        raise IdxHeaderError("empty image set")
    if labels.size and labels.max() >= num_classes:
        raise IdxHeaderError(f"label {labels.max()} outside [0, {num_classes})")
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(x, labels.astype(np.int64), num_classes)


def write_idx(path: str | Path, array: np.ndarray) -> None:
    """Write a uint8 array as IDX (gzip-compressed if ``path`` ends in .gz)."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    head = struct.pack(">I", 0x00000800 | array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    blob = head + array.tobytes()
    path = Path(path)
    if path.suffix == ".gz":
        blob = gzip.compress(blob, mtime=0)
    path.write_bytes(blob)


def _find(directory: Path, name: str) -> Path:
    for cand in (directory / name, directory / f"{name}.gz"):
        if cand.exists():
            return cand
    raise FileNotFoundError(f"{name}[.gz] not found in {directory}")


def resolve_data_dir(data_dir: str | Path | None) -> Path:
    if data_dir is None:
        data_dir = os.environ.get(DATA_DIR_ENV)
        if data_dir is None:
            raise FileNotFoundError(f"no data directory given and ${DATA_DIR_ENV} is unset")
    return Path(data_dir)


def load_split(data_dir: str | Path, split: str) -> Dataset:
    """Load the MNIST-layout ``train`` or ``test`` split from ``data_dir``."""
    directory = Path(data_dir)
    img, lab = SPLIT_FILES[split]
    return load_idx(_find(directory, img), _find(directory, lab))


def synthetic_classification(
    n: int, d: int, classes: int, seed: int = 0, *, separation: float = 1.0, noise: float = 0.15
) -> Dataset:
    """Isotropic Gaussian blobs with class means ``separation`` apart in distinct directions.

    Class ``c`` is centred on ``separation / sqrt(2) * u_c`` for orthonormal
    directions ``u_c`` (random directions when ``d < classes``), so distinct
    means are exactly ``separation`` apart when ``d >= classes``.
    """
    if classes < 1 or n < classes:
        raise ValueError("need n >= classes >= 1")
    rng = np.random.default_rng(seed)
    if d >= classes:
        q, _ = np.linalg.qr(rng.normal(size=(d, classes)))
        dirs = q.T
    else:
        dirs = rng.normal(size=(classes, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    means = separation / np.sqrt(2.0) * dirs
    labels = np.arange(n) % classes
    labels = labels[rng.permutation(n)]
    x = means[labels] + noise * rng.normal(size=(n, d))
    return Dataset(x, labels.astype(np.int64), classes)


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError("labels out of range")
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def batches(dataset: Dataset, plan: BatchPlan) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Seeded shuffle (numpy's Fisher-Yates ``permutation``), then fixed-size slices."""
    n = len(dataset)
    order = np.random.default_rng(plan.seed).permutation(n)
    stop = n - n % plan.batch_size if plan.drop_last else n
    for start in range(0, stop, plan.batch_size):
        idx = order[start : start + plan.batch_size]
        yield dataset.inputs[idx], one_hot(dataset.labels[idx], dataset.num_classes)


__all__ = [
    "BatchPlan",
    "Dataset",
    "IdxError",
    "batches",
    "load_idx",
    "load_split",
    "one_hot",
    "parse_idx",
    "resolve_data_dir",
    "synthetic_classification",
    "write_idx",
]
