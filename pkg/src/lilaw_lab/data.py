"""Datasets: the labeled container, synthetic blobs, IDX and delimited-text loaders, splitting."""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DataFormatError(ValueError):
    pass


class IdxMagicError(DataFormatError):
    pass


class IdxCountMismatchError(DataFormatError):
    pass


class IdxTruncatedError(DataFormatError):
    pass


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Features plus observed and clean labels. Arrays are stored read-only."""

    features: np.ndarray
    observed_labels: np.ndarray
    clean_labels: np.ndarray
    class_count: int
    image_geometry: tuple[int, int, int] | None = None

    def __post_init__(self):
        x = _frozen(self.features, np.float64)
        if x.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        obs = _frozen(self.observed_labels, np.int64)
        clean = _frozen(self.clean_labels, np.int64)
        n = x.shape[0]
        if obs.shape != (n,) or clean.shape != (n,):
            raise ValueError("label vectors must have one entry per feature row")
        c = int(self.class_count)
        for y in (obs, clean):
            if n and (y.min() < 0 or y.max() >= c):
                raise ValueError(f"labels must lie in [0, {c})")
        if not np.all(np.isfinite(x)):
            raise ValueError("features must be finite")
        if self.image_geometry is not None:
            geo = tuple(int(g) for g in self.image_geometry)
            if len(geo) != 3 or math.prod(geo) != x.shape[1]:
                raise ValueError("image_geometry (h, w, ch) must multiply to the feature width")
            object.__setattr__(self, "image_geometry", geo)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "observed_labels", obs)
        object.__setattr__(self, "clean_labels", clean)
        object.__setattr__(self, "class_count", c)

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def clean_flags(self) -> np.ndarray:
        """1 where the observed label is the clean one, 0 where it was corrupted."""
        return (self.observed_labels == self.clean_labels).astype(np.int8)

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.observed_labels[idx], self.clean_labels[idx],
                              self.class_count, self.image_geometry)

    def with_labels(self, observed) -> "LabeledDataset":
        return LabeledDataset(self.features, observed, self.clean_labels, self.class_count,
                              self.image_geometry)

    def with_features(self, features) -> "LabeledDataset":
        return LabeledDataset(features, self.observed_labels, self.clean_labels, self.class_count,
                              self.image_geometry)


@dataclass(frozen=True)
class SplitSpec:
    val_fraction: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in (0, 1)")


def gen_blobs(seed: int, c: int, n_per_class: int, d: int, separation: float) -> LabeledDataset:
    """``c`` unit-covariance Gaussian clusters centred at ``separation`` times random unit vectors."""
    if c < 2 or d < 1 or n_per_class < 1:
        raise ValueError("need c >= 2, d >= 1, n_per_class >= 1")
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((c, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    means = separation * dirs
    labels = np.repeat(np.arange(c), n_per_class)
    x = means[labels] + rng.standard_normal((labels.size, d))
    order = rng.permutation(labels.size)
    return LabeledDataset(x[order], labels[order], labels[order], c)


def _read_header(buf: bytes, ndim: int, what: str):
    need = 4 + 4 * ndim
    if len(buf) < need:
        raise IdxTruncatedError(f"{what}: header truncated ({len(buf)} < {need} bytes)")
    return struct.unpack(f">I{ndim}I", buf[:need]), need


def load_idx(images_path, labels_path, class_count: int | None = None) -> LabeledDataset:
    """Read an IDX image/label file pair (e.g. MNIST). Pixels are scaled to [0, 1]."""
    img = Path(images_path).read_bytes()
    lab = Path(labels_path).read_bytes()

    (magic, n_img, h, w), off_i = _read_header(img, 3, "images")
    if magic != IDX_IMAGES_MAGIC:
        raise IdxMagicError(f"images: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
    (magic_l, n_lab), off_l = _read_header(lab, 1, "labels")
    if magic_l != IDX_LABELS_MAGIC:
        raise IdxMagicError(f"labels: bad magic 0x{magic_l:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
    if n_img != n_lab:
        raise IdxCountMismatchError(f"{n_img} images but {n_lab} labels")

    n_pix = n_img * h * w
    if len(img) - off_i < n_pix:
        raise IdxTruncatedError(f"images: expected {n_pix} pixel bytes, found {len(img) - off_i}")
    if len(lab) - off_l < n_lab:
        raise IdxTruncatedError(f"labels: expected {n_lab} label bytes, found {len(lab) - off_l}")

    pixels = np.frombuffer(img, dtype=np.uint8, count=n_pix, offset=off_i)
    x = pixels.reshape(n_img, h * w).astype(np.float64) / 255.0
    y = np.frombuffer(lab, dtype=np.uint8, count=n_lab, offset=off_l).astype(np.int64)
    if class_count is None:
        class_count = int(y.max()) + 1 if n_lab else 0
    return LabeledDataset(x, y, y, class_count, (h, w, 1))


def write_idx(images_path, labels_path, images, labels):
    """Write uint8 images (n, h, w) and labels (n,) as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, h, w = images.shape
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())


def read_table(path, delimiter: str = ",", has_header: bool = True):
    """Parse a delimited file into ``(header, rows)``; numeric cells become floats.

    Raises ``DataFormatError`` on ragged rows.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter) if r]
    header = rows.pop(0) if has_header and rows else None
    width = len(header) if header is not None else (len(rows[0]) if rows else 0)
    out = []
    for lineno, r in enumerate(rows, start=2 if header is not None else 1):
        if len(r) != width:
            raise DataFormatError(f"{path}:{lineno}: expected {width} fields, got {len(r)}")
        parsed = []
        for cell in r:
            try:
                parsed.append(float(cell))
            except ValueError:
                parsed.append(cell)
        out.append(parsed)
    return header, out


def load_delim(path, label_column: int = -1, delimiter: str = ",", has_header: bool = False) -> LabeledDataset:
    """Numeric table with one integer label column; the rest are features."""
    if len(delimiter) != 1:
        raise ValueError("delimiter must be a single character")
    _, rows = read_table(path, delimiter, has_header)
    for i, r in enumerate(rows):
        bad = [cell for cell in r if isinstance(cell, str)]
        if bad:
            raise DataFormatError(f"{path}: row {i + 1}: non-numeric cell {bad[0]!r}")
    table = np.array(rows, dtype=np.float64).reshape(len(rows), -1)
    if table.shape[1] < 2:
        raise DataFormatError(f"{path}: need a label column and at least one feature column")
    col = label_column % table.shape[1]
    raw = table[:, col]
    if np.any(raw < 0):
        raise DataFormatError(f"{path}: negative label")
    if np.any(raw != np.round(raw)):
        raise DataFormatError(f"{path}: labels must be integers")
    y = raw.astype(np.int64)
    x = np.delete(table, col, axis=1)
    c = int(y.max()) + 1 if y.size else 0
    return LabeledDataset(x, y, y, c)


def write_delim(path, ds: LabeledDataset, delimiter: str = ","):
    """Write features followed by the observed label as the last column."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        for row, y in zip(ds.features, ds.observed_labels):
            wr.writerow([repr(float(v)) for v in row] + [int(y)])


def split_indices(clean_labels, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Stratified seeded split; each class contributes ceil(frac * n_class) to validation."""
    y = np.asarray(clean_labels)
    rng = np.random.default_rng(spec.seed)
    train, val = [], []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        k = math.ceil(spec.val_fraction * idx.size)
        val.append(idx[:k])
        train.append(idx[k:])
    tr = np.sort(np.concatenate(train)) if train else np.array([], dtype=np.int64)
    va = np.sort(np.concatenate(val)) if val else np.array([], dtype=np.int64)
    return tr, va


def split_train_val(ds: LabeledDataset, spec: SplitSpec) -> tuple[LabeledDataset, LabeledDataset]:
    if len(ds) < 2:
        raise ValueError("need at least two samples to split")
    tr, va = split_indices(ds.clean_labels, spec)
    if tr.size == 0 or va.size == 0:
        raise ValueError(f"val_fraction={spec.val_fraction} leaves an empty split")
    return ds.subset(tr), ds.subset(va)
