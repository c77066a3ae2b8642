"""
Dataset ingestion: MNIST IDX files, CIFAR-10 binary batches and synthetic
regression data, plus shuffling and split handling.

Nothing is downloaded; loaders read files the user already has.
"""

import glob
import gzip
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from .errors import DataFormatError, DataNotFoundError, DimensionError, ParameterError
from .linalg import Rng

logger = logging.getLogger(__name__)

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}
IDX_UBYTE = 0x08
CIFAR_RECORD = 3073
MNIST_VALID = 10000
CIFAR_VALID = 1000


@dataclass
class Dataset:
    """
    Samples stored one per row with named index splits.

    Classification sets carry integer labels and build one-hot targets;
    regression sets carry real targets directly (n_classes == 0).
    """

    inputs: np.ndarray
    labels: Optional[np.ndarray] = None
    targets: Optional[np.ndarray] = None
    n_classes: int = 0
    splits: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        """Validate shapes, label range and split indices."""
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim != 2:
            raise DimensionError("Dataset", self.inputs.shape)
        n = self.inputs.shape[0]
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise DimensionError("Dataset labels", self.inputs.shape, self.labels.shape)
            if n and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
                raise ParameterError(f"Label ids must lie in [0, {self.n_classes})")
            if self.targets is None:
                self.targets = one_hot(self.labels, self.n_classes)
        if self.targets is None:
            raise ParameterError("A dataset needs labels or targets")
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.targets.ndim != 2 or self.targets.shape[0] != n:
            raise DimensionError("Dataset targets", self.inputs.shape, self.targets.shape)
        if not self.splits:
            self.splits = {"train": np.arange(n)}
        for name, idx in self.splits.items():
            if len(idx) and (np.min(idx) < 0 or np.max(idx) >= n):
                raise ParameterError(f"Split '{name}' indexes outside the dataset")

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def split(self, name: str) -> "Dataset":
        """The samples of one split as a dataset whose only split is ``name``."""
        if name not in self.splits:
            raise ParameterError(f"Unknown split '{name}'; have {sorted(self.splits)}")
        idx = self.splits[name]
        return Dataset(
            self.inputs[idx],
            None if self.labels is None else self.labels[idx],
            self.targets[idx],
            self.n_classes,
            {name: np.arange(len(idx))},
        )

    def columns(self, idx: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
        """(x, y) for the given rows as features x samples arrays."""
        if idx is None:
            return self.inputs.T, self.targets.T
        return self.inputs[idx].T, self.targets[idx].T


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    """n x n_classes indicator matrix."""
    labels = np.asarray(labels, dtype=np.int64)
    if n_classes < 1:
        raise ParameterError("n_classes must be positive")
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


# ==================== IDX files ====================

def _open(path: str):
    return gzip.open(path, "rb") if path.endswith(".gz") else open(path, "rb")


def read_idx(path: str) -> np.ndarray:
    """
    Read an unsigned-byte IDX file, optionally gzip-compressed.

    Raises:
        DataNotFoundError: if the file is missing
        DataFormatError: on a bad magic number or a payload of the wrong size
    """
    if not os.path.exists(path):
        raise DataNotFoundError(path)
    try:
        with _open(path) as f:
            raw = f.read()
    except (OSError, EOFError) as e:
        raise DataFormatError(path, str(e)) from e
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0:
        raise DataFormatError(path, "bad magic number")
    if raw[2] != IDX_UBYTE:
        raise DataFormatError(path, f"unsupported element type 0x{raw[2]:02x}")
    ndim = raw[3]
    header = 4 + 4 * ndim
    if ndim == 0 or len(raw) < header:
        raise DataFormatError(path, "truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    expected = int(np.prod(dims))
    if len(raw) - header != expected:
        raise DataFormatError(path, f"payload has {len(raw) - header} bytes, expected {expected}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def save_idx(path: str, array: np.ndarray) -> None:
    """Write a uint8 array as an IDX file (gzip-compressed if the name ends in .gz)."""
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise ParameterError(f"IDX writer handles uint8 only, got {array.dtype}")
    header = bytes([0, 0, IDX_UBYTE, array.ndim]) + struct.pack(f">{array.ndim}I", *array.shape)
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "wb") as f:
        f.write(header + array.tobytes())


def _find(directory: str, name: str) -> str:
    for candidate in (name, name + ".gz"):
        path = os.path.join(directory, candidate)
        if os.path.exists(path):
            return path
    raise DataNotFoundError(os.path.join(directory, name))


def _holdout(n_train: int, valid_size: int) -> Dict[str, np.ndarray]:
    n_valid = min(valid_size, n_train // 6)
    return {
        "train": np.arange(n_train - n_valid),
        "valid": np.arange(n_train - n_valid, n_train),
    }


def _assemble(
    train_x: np.ndarray, train_y: np.ndarray, test_x: np.ndarray, test_y: np.ndarray, valid_size: int
) -> Dataset:
    n_train = train_x.shape[0]
    splits = _holdout(n_train, valid_size)
    splits["test"] = np.arange(n_train, n_train + test_x.shape[0])
    inputs = np.vstack([train_x, test_x]).astype(np.float64) / 255.0
    labels = np.concatenate([train_y, test_y])
    return Dataset(inputs, labels, n_classes=10, splits=splits)


def load_mnist(directory: str, limit: Optional[int] = None, valid_size: int = MNIST_VALID) -> Dataset:
    """
    Load the four MNIST IDX files from ``directory``.

    Pixels are scaled by 1/255. The last min(valid_size, n_train // 6)
    training images form the validation split. ``limit`` keeps the first
    ``limit`` samples of both the training and test files.
    """
    arrays = {}
    for key, name in MNIST_FILES.items():
        path = _find(directory, name)
        arrays[key] = (path, read_idx(path))
    for part in ("train", "test"):
        img_path, images = arrays[f"{part}_images"]
        lbl_path, labels = arrays[f"{part}_labels"]
        if images.ndim != 3:
            raise DataFormatError(img_path, f"expected 3 dimensions, found {images.ndim}")
        if labels.ndim != 1:
            raise DataFormatError(lbl_path, f"expected 1 dimension, found {labels.ndim}")
        if labels.shape[0] != images.shape[0]:
            raise DataFormatError(lbl_path, f"{labels.shape[0]} labels for {images.shape[0]} images")
        if labels.size and labels.max() > 9:
            raise DataFormatError(lbl_path, "label ids must lie in 0..9")

    def take(key):
        data = arrays[key][1]
        data = data if limit is None else data[:limit]
        if data.ndim == 3:
            data = data.reshape(data.shape[0], data.shape[1] * data.shape[2])
        return data

    ds = _assemble(take("train_images"), take("train_labels"), take("test_images"), take("test_labels"), valid_size)
    logger.info(
        "Loaded MNIST from %s: %d train, %d valid, %d test",
        directory, len(ds.splits["train"]), len(ds.splits["valid"]), len(ds.splits["test"]),
    )
    return ds


# ==================== CIFAR-10 ====================

def _read_cifar_batch(path: str) -> Tuple[np.ndarray, np.ndarray]:
    if not os.path.exists(path):
        raise DataNotFoundError(path)
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) == 0 or len(raw) % CIFAR_RECORD != 0:
        raise DataFormatError(path, f"size {len(raw)} is not a multiple of {CIFAR_RECORD}")
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = records[:, 0]
    if labels.max() > 9:
        raise DataFormatError(path, "label ids must lie in 0..9")
    return records[:, 1:], labels


def load_cifar10(directory: str, limit: Optional[int] = None, valid_size: int = CIFAR_VALID) -> Dataset:
    """
    Load CIFAR-10 binary batches: every ``data_batch_*.bin`` plus ``test_batch.bin``.

    Inputs are the 3072 raw bytes of each record scaled into [0, 1]; the
    last min(valid_size, n_train // 6) training records are held out.
    """
    nested = os.path.join(directory, "cifar-10-batches-bin")
    if os.path.isdir(nested):
        directory = nested
    batch_paths = sorted(glob.glob(os.path.join(directory, "data_batch_*.bin")))
    if not batch_paths:
        raise DataNotFoundError(os.path.join(directory, "data_batch_1.bin"))
    parts = [_read_cifar_batch(p) for p in batch_paths]
    train_x = np.vstack([p[0] for p in parts])
    train_y = np.concatenate([p[1] for p in parts])
    test_x, test_y = _read_cifar_batch(os.path.join(directory, "test_batch.bin"))
    if limit is not None:
        train_x, train_y, test_x, test_y = train_x[:limit], train_y[:limit], test_x[:limit], test_y[:limit]
    ds = _assemble(train_x, train_y, test_x, test_y, valid_size)
    logger.info("Loaded CIFAR-10 from %s: %d batch files", directory, len(batch_paths))
    return ds


# ==================== Synthetic data and batching ====================

def synthetic_regression(
    n: int, d: int, rng: Rng, out_dim: Optional[int] = None, weight_scale: float = 1.0
) -> Dataset:
    """
    Gaussian inputs with targets y = tanh(W x) + b from a random planted network.

    W ~ N(0, weight_scale^2 / d) and b ~ N(0, 1), both drawn from ``rng``.
    """
    if n < 1 or d < 1:
        raise ParameterError(f"n and d must be at least 1, got n={n}, d={d}")
    k = out_dim or d
    inputs = rng.split("inputs").standard_normal((n, d))
    W = rng.split("planted.W").normal((k, d), weight_scale / np.sqrt(d))
    b = rng.split("planted.b").standard_normal(k)
    targets = np.tanh(inputs @ W.T) + b
    return Dataset(inputs, targets=targets)


def shuffled_batches(
    ds: Dataset, batch: int, rng: Rng, split: str = "train"
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """
    One epoch of column-stacked (x, y) mini-batches in permuted order.

    The last batch may be smaller than ``batch``.
    """
    if batch < 1:
        raise ParameterError(f"Batch size must be at least 1, got {batch}")
    idx = ds.splits[split]
    order = idx[rng.permutation(len(idx))]
    for start in range(0, len(order), batch):
        yield ds.columns(order[start:start + batch])
