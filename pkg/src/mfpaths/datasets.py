"""Synthetic Gaussian classification data, IDX image files, normalization.

The Gaussian task draws a label y uniformly from {-1, +1} and a feature
vector x ~ N(0, (1 + y*delta)^2 I_d), so the two classes differ only in
radial scale. IDX is the big-endian binary format used by the standard
MNIST distribution.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .core_math import RngStream


class Sample(NamedTuple):
    x: np.ndarray  # (d,)
    y: np.ndarray  # (classes,) one-hot, or (1,) with value +-1 for binary


@dataclass
class LabeledDataset:
    """Immutable pair of feature matrix (m, d) and target matrix (m, c)."""

    x: np.ndarray
    y: np.ndarray
    classes: int

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.x.ndim != 2 or self.y.ndim != 2 or len(self.x) != len(self.y):
            raise ValueError(
                f"dataset arrays must be (m,d) and (m,c) with equal m; "
                f"got {self.x.shape} and {self.y.shape}"
            )

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def sample(self, i: int) -> Sample:
        return Sample(self.x[i], self.y[i])


@dataclass(frozen=True)
class GaussianTaskSpec:
    d: int = 32
    delta: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be positive, got {self.d}")
        if self.delta <= -1.0:
            raise ValueError(
                f"delta must be > -1 for a positive covariance, got {self.delta}"
            )


class GaussianStream:
    """Infinite deterministic sample stream for the radial Gaussian task.

    Draws are buffered in fixed-size blocks so the emitted sequence does not
    depend on whether the consumer reads one sample or a batch at a time.
    Single consumer only.
    """

    _BLOCK = 1024

    def __init__(self, spec: GaussianTaskSpec):
        self.spec = spec
        self._rng = RngStream(spec.seed)
        self._buf_x = np.empty((0, spec.d))
        self._buf_y = np.empty((0, 1))
        self._pos = 0

    def _refill(self):
        d = self.spec.d
        y = self._rng.choice_sign(size=self._BLOCK)
        x = self._rng.normal(size=(self._BLOCK, d))
        x *= (1.0 + y * self.spec.delta)[:, None]
        self._buf_x = x
        self._buf_y = y[:, None]
        self._pos = 0

    def next_batch(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        xs, ys = [], []
        remaining = m
        while remaining > 0:
            if self._pos >= len(self._buf_x):
                self._refill()
            take = min(remaining, len(self._buf_x) - self._pos)
            xs.append(self._buf_x[self._pos:self._pos + take])
            ys.append(self._buf_y[self._pos:self._pos + take])
            self._pos += take
            remaining -= take
        return np.concatenate(xs, axis=0), np.concatenate(ys, axis=0)

    def __iter__(self) -> Iterator[Sample]:
        while True:
            x, y = self.next_batch(1)
            yield Sample(x[0], y[0])


def gaussian_stream(spec: GaussianTaskSpec) -> GaussianStream:
    return GaussianStream(spec)


def dataset_from_stream(stream, m: int, classes: int = 2) -> LabeledDataset:
    x, y = stream.next_batch(m)
    return LabeledDataset(x, y, classes)


class BiasAugmentedStream:
    """Wraps a stream, appending the constant feature 1 to every x."""

    def __init__(self, inner):
        self.inner = inner

    def next_batch(self, m: int):
        x, y = self.inner.next_batch(m)
        return np.hstack([x, np.ones((len(x), 1))]), y

    def __iter__(self) -> Iterator[Sample]:
        while True:
            x, y = self.next_batch(1)
            yield Sample(x[0], y[0])


def append_bias_feature(ds: LabeledDataset) -> LabeledDataset:
    return LabeledDataset(
        np.hstack([ds.x, np.ones((len(ds), 1))]), ds.y, ds.classes
    )


# ---------------------------------------------------------------------------
# IDX files
# ---------------------------------------------------------------------------

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxError(ValueError):
    """Base class for IDX parsing failures."""


class IdxBadMagic(IdxError):
    pass


class IdxTruncated(IdxError):
    pass


class IdxCountMismatch(IdxError):
    pass


def _read_exact(f, nbytes: int, what: str) -> bytes:
    data = f.read(nbytes)
    if len(data) != nbytes:
        raise IdxTruncated(
            f"truncated IDX file while reading {what}: "
            f"wanted {nbytes} bytes, got {len(data)}"
        )
    return data


def _read_be32(f, what: str) -> int:
    return struct.unpack(">i", _read_exact(f, 4, what))[0]


def load_idx(images_path, labels_path, classes: int = 10) -> LabeledDataset:
    """Load an IDX image/label file pair into a flat float dataset.

    Pixels are kept as raw byte values in [0, 255]; labels become one-hot
    rows over `classes` entries.
    """
    with open(images_path, "rb") as f:
        magic = _read_be32(f, "image magic")
        if magic != IDX_IMAGES_MAGIC:
            raise IdxBadMagic(
                f"bad magic in image file: 0x{magic & 0xffffffff:08x}, "
                f"expected 0x{IDX_IMAGES_MAGIC:08x}"
            )
        count = _read_be32(f, "image count")
        rows = _read_be32(f, "row count")
        cols = _read_be32(f, "column count")
        raw = _read_exact(f, count * rows * cols, "pixel data")
        images = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)

    with open(labels_path, "rb") as f:
        magic = _read_be32(f, "label magic")
        if magic != IDX_LABELS_MAGIC:
            raise IdxBadMagic(
                f"bad magic in label file: 0x{magic & 0xffffffff:08x}, "
                f"expected 0x{IDX_LABELS_MAGIC:08x}"
            )
        label_count = _read_be32(f, "label count")
        labels = np.frombuffer(
            _read_exact(f, label_count, "label data"), dtype=np.uint8
        )

    if label_count != count:
        raise IdxCountMismatch(
            f"image count {count} != label count {label_count}"
        )
    if labels.size and labels.max() >= classes:
        raise IdxError(
            f"label {labels.max()} out of range for {classes} classes"
        )

    onehot = np.zeros((count, classes))
    onehot[np.arange(count), labels] = 1.0
    return LabeledDataset(images.astype(np.float64), onehot, classes)


def write_idx(ds: LabeledDataset, images_path, labels_path,
              rows: int, cols: int) -> None:
    """Serialize a dataset back to an IDX pair (test fixtures, round trips)."""
    if rows * cols != ds.d:
        raise ValueError(f"rows*cols = {rows * cols} != d = {ds.d}")
    pixels = np.asarray(ds.x, dtype=np.float64)
    if pixels.min() < 0 or pixels.max() > 255:
        raise ValueError("pixel values must lie in [0, 255]")
    labels = np.argmax(ds.y, axis=1).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">iiii", IDX_IMAGES_MAGIC, len(ds), rows, cols))
        f.write(pixels.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">ii", IDX_LABELS_MAGIC, len(ds)))
        f.write(labels.tobytes())


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def normalize_zero_mean_unit_var(
    ds: LabeledDataset,
) -> tuple[LabeledDataset, np.ndarray, np.ndarray]:
    """Normalize each coordinate to zero mean, unit variance over the dataset.

    Coordinates with zero variance are mapped to 0. Returns the per-coordinate
    (mean, std) so the same transform can be applied to held-out data.
    """
    if len(ds) == 0:
        raise ValueError("cannot normalize an empty dataset")
    mean = ds.x.mean(axis=0)
    std = ds.x.std(axis=0)  # population std, ddof=0
    return apply_normalization(ds, mean, std), mean, std


def apply_normalization(
    ds: LabeledDataset, mean: np.ndarray, std: np.ndarray
) -> LabeledDataset:
    safe = np.where(std == 0.0, 1.0, std)
    return LabeledDataset((ds.x - mean) / safe, ds.y, ds.classes)
