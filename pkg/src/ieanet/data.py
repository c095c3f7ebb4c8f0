"""Dataset parsing (IDX, amat), normalization, batching, and synthetic data.

IDX files are the MNIST distribution format (big-endian magic + dims + raw
u8 payload), accepted gzipped or plain. The amat format is whitespace text:
one row per sample, 784 pixel floats in [0,1] followed by the label.
"""

from __future__ import annotations

import dataclasses
import gzip
import struct

import numpy as np

from .errors import ConfigError, DataFormatError
from .rng import SeededRng

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
AMAT_COLUMNS = 785


@dataclasses.dataclass
class Dataset:
    """Images (N,1,H,W) float64 with integer labels and split metadata."""

    images: np.ndarray
    labels: np.ndarray
    split: str = "train"
    mean: float | None = None
    std: float | None = None

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ConfigError(f"images must be (N,C,H,W), got {self.images.shape}")
        if len(self.labels) != len(self.images):
            raise ConfigError(
                f"image count {len(self.images)} != label count {len(self.labels)}"
            )
        if len(self.labels) and self.labels.min() < 0:
            raise ConfigError(f"labels must be non-negative, got {self.labels.min()}")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def subset(self, limit: int) -> "Dataset":
        """First ``limit`` samples (the whole set if limit is 0 or None)."""
        if not limit or limit >= len(self):
            return self
        return Dataset(self.images[:limit], self.labels[:limit],
                       self.split, self.mean, self.std)


def _open_maybe_gzip(path):
    with open(path, "rb") as f:
        head = f.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(f, count: int, what: str, path) -> bytes:
    data = f.read(count)
    if len(data) != count:
        raise DataFormatError(
            f"{path}: truncated {what} (wanted {count} bytes, got {len(data)})"
        )
    return data


def _read_idx_header(f, expected_magic: int, ndims: int, path):
    raw = _read_exact(f, 4 * (1 + ndims), "header", path)
    fields = struct.unpack(f">{1 + ndims}i", raw)
    if fields[0] != expected_magic:
        raise DataFormatError(
            f"{path}: bad magic 0x{fields[0]:08x}, expected 0x{expected_magic:08x}"
        )
    return fields[1:]


def parse_idx(images_path, labels_path) -> Dataset:
    """Parse an IDX image/label file pair into a Dataset scaled to [0,1]."""
    with _open_maybe_gzip(images_path) as f:
        count, rows, cols = _read_idx_header(f, IDX_IMAGE_MAGIC, 3, images_path)
        payload = _read_exact(f, count * rows * cols, "image payload", images_path)
    images = np.frombuffer(payload, dtype=np.uint8).reshape(count, 1, rows, cols)
    with _open_maybe_gzip(labels_path) as f:
        (label_count,) = _read_idx_header(f, IDX_LABEL_MAGIC, 1, labels_path)
        label_payload = _read_exact(f, label_count, "label payload", labels_path)
    labels = np.frombuffer(label_payload, dtype=np.uint8)
    if label_count != count:
        raise DataFormatError(
            f"count mismatch: {images_path} holds {count} images but "
            f"{labels_path} holds {label_count} labels"
        )
    return Dataset(images.astype(np.float64) / 255.0, labels.astype(np.int64))


def write_idx(dataset: Dataset, images_path, labels_path, compress: bool = False):
    """Serialize a Dataset to an IDX pair (pixels quantized back to u8)."""
    n, _, rows, cols = dataset.images.shape
    pixels = np.rint(dataset.images * 255.0).clip(0, 255).astype(np.uint8)
    opener = gzip.open if compress else open
    with opener(images_path, "wb") as f:
        f.write(struct.pack(">4i", IDX_IMAGE_MAGIC, n, rows, cols))
        f.write(pixels.tobytes())
    with opener(labels_path, "wb") as f:
        f.write(struct.pack(">2i", IDX_LABEL_MAGIC, n))
        f.write(dataset.labels.astype(np.uint8).tobytes())


def parse_amat(path, split_sizes: tuple[int, int] = (50000, 12000),
               transpose: bool = False) -> tuple[Dataset, Dataset]:
    """Parse an amat text file and split it into (train, test) datasets.

    Each row must hold 784 pixels followed by the label. ``transpose`` flips
    the 28x28 reshape orientation; historical distributions disagree on it.
    """
    n_train, n_test = split_sizes
    rows = []
    with open(path, "r") as f:
        for lineno, line in enumerate(f, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != AMAT_COLUMNS:
                raise DataFormatError(
                    f"{path}:{lineno}: expected {AMAT_COLUMNS} columns, "
                    f"got {len(tokens)}"
                )
            try:
                rows.append(np.array(tokens, dtype=np.float64))
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: non-numeric token "
                                      f"({exc})") from None
    needed = n_train + n_test
    if len(rows) < needed:
        raise DataFormatError(
            f"{path}: {len(rows)} rows, but split sizes {split_sizes} "
            f"need {needed}"
        )
    table = np.stack(rows[:needed])
    images = table[:, :784].reshape(needed, 1, 28, 28)
    if transpose:
        images = images.transpose(0, 1, 3, 2)
    labels = table[:, 784].astype(np.int64)
    train = Dataset(images[:n_train], labels[:n_train], "train")
    test = Dataset(images[n_train:], labels[n_train:], "test")
    return train, test


def write_amat(dataset: Dataset, path):
    """Serialize a Dataset as amat text rows (pixels then label)."""
    flat = dataset.images.reshape(len(dataset), -1)
    with open(path, "w") as f:
        for pixels, label in zip(flat, dataset.labels):
            f.write(" ".join(repr(float(v)) for v in pixels))
            f.write(f" {label}\n")


def standardize(dataset: Dataset, stats: tuple[float, float] | None = None) -> Dataset:
    """Subtract the global pixel mean and divide by the std.

    With stats=None the constants come from this dataset (use for the train
    split); pass the train split's (mean, std) for the test split.
    """
    if stats is None:
        mean = float(dataset.images.mean())
        std = float(dataset.images.std())
    else:
        mean, std = stats
    if std <= 0.0:
        raise ConfigError("zero pixel std; cannot standardize constant images")
    return Dataset((dataset.images - mean) / std, dataset.labels,
                   dataset.split, mean, std)


def standardize_pair(train: Dataset, test: Dataset) -> tuple[Dataset, Dataset]:
    train_std = standardize(train)
    return train_std, standardize(test, (train_std.mean, train_std.std))


def synth_blobs(n: int, num_classes: int, seed: int,
                side: int = 28) -> Dataset:
    """Linearly separable toy images: one bright block per class plus noise.

    Class c lights up its own grid cell (the four quadrants when classes
    <= 4, a 4x4 grid otherwise) at a class-specific brightness, so the
    classes stay separable both by location and by mean intensity. The
    intensity code matters: it survives global average pooling, which a
    purely positional code would not. Labels cycle 0..num_classes-1.
    """
    if num_classes < 1 or num_classes > 16:
        raise ConfigError(f"synth_blobs supports 1..16 classes, got {num_classes}")
    if n < num_classes:
        raise ConfigError(f"need n >= num_classes, got n={n} classes={num_classes}")
    rng = SeededRng(seed).derive(0x5B10B5)
    images = rng.uniform(0.0, 0.2, (n, 1, side, side))
    labels = np.arange(n, dtype=np.int64) % num_classes
    grid = 2 if num_classes <= 4 else 4
    cell = side // grid
    for i in range(n):
        c = labels[i]
        r0 = (c // grid) * cell
        c0 = (c % grid) * cell
        level = 0.4 + 0.6 * (c + 1) / num_classes
        images[i, 0, r0:r0 + cell, c0:c0 + cell] += level
    return Dataset(np.clip(images, 0.0, 1.0), labels, "train")


class BatchIterator:
    """Seeded per-epoch shuffle into index batches.

    Every epoch visits each sample exactly once; the permutation depends
    only on (seed, epoch). A trailing batch of size 1 is merged into the
    previous batch so batch-norm always sees >= 2 samples.
    """

    def __init__(self, n: int, batch_size: int, seed: int):
        if batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {batch_size}")
        self.n = n
        self.batch_size = batch_size
        self.seed = seed

    def epoch_batches(self, epoch: int):
        perm = SeededRng(self.seed).derive(0xEB0C, epoch).permutation(self.n)
        starts = list(range(0, self.n, self.batch_size))
        if len(starts) > 1 and self.n - starts[-1] == 1:
            starts.pop()  # fold the lone trailing sample into the last batch
        for i, s in enumerate(starts):
            e = starts[i + 1] if i + 1 < len(starts) else self.n
            yield perm[s:e]
