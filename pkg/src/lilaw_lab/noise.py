"""Seeded label- and input-noise injectors.

Each injector returns a new dataset and a :class:`NoiseReport`; the input
dataset is never modified. ``level`` is a per-sample selection probability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset

LABEL_KINDS = ("uniform", "asymmetric", "instance", "adjacent")
INPUT_KINDS = ("input_covariate", "input_zoom", "input_crop")
KINDS = LABEL_KINDS + INPUT_KINDS

INSTANCE_TEMPERATURE = 2.0
COVARIATE_SCALE = 0.5
ZOOM_FACTOR = 1.5
CROP_FRACTION = 0.75


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    level: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {KINDS}")
        if not 0.0 <= self.level <= 1.0:
            raise ValueError("noise level must be in [0, 1]")


@dataclass(frozen=True)
class NoiseReport:
    corrupted_indices: np.ndarray

    @property
    def n_corrupted(self) -> int:
        return int(self.corrupted_indices.size)


def _check_level(level):
    if not 0.0 <= level <= 1.0:
        raise ValueError("noise level must be in [0, 1]")


def _select(rng, n, level):
    return rng.random(n) < level


def _relabel(ds, mask, new_labels):
    y = ds.observed_labels.copy()
    y[mask] = new_labels
    return ds.with_labels(y), NoiseReport(np.flatnonzero(mask))


def _other_class(rng, y, c):
    return (y + rng.integers(1, c, size=y.size)) % c


def inject_uniform(ds: LabeledDataset, level: float, seed: int):
    """Flip each label with probability ``level`` to one of the other classes, uniformly."""
    _check_level(level)
    rng = np.random.default_rng(seed)
    mask = _select(rng, len(ds), level)
    return _relabel(ds, mask, _other_class(rng, ds.observed_labels[mask], ds.class_count))


def inject_asymmetric(ds: LabeledDataset, level: float, seed: int):
    """Selected labels move to ``(y + 1) mod c``."""
    _check_level(level)
    rng = np.random.default_rng(seed)
    mask = _select(rng, len(ds), level)
    return _relabel(ds, mask, (ds.observed_labels[mask] + 1) % ds.class_count)


def inject_adjacent(ds: LabeledDataset, level: float, seed: int):
    """Selected labels move to ``y - 1`` or ``y + 1`` (mod c) with equal odds."""
    _check_level(level)
    rng = np.random.default_rng(seed)
    mask = _select(rng, len(ds), level)
    step = np.where(rng.random(int(mask.sum())) < 0.5, -1, 1)
    return _relabel(ds, mask, (ds.observed_labels[mask] + step) % ds.class_count)


def instance_flip_probabilities(features, level: float, seed: int) -> np.ndarray:
    """Per-sample flip probability from the cosine with a seeded direction.

    Raw scores ``sigmoid(2 * cos(x_i, v))`` are rescaled to average ``level``;
    mass above 1 is clipped and redistributed over the unclipped samples.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.shape[0] == 0:
        raise ValueError("instance noise needs a nonempty feature matrix")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(x.shape[1])
    norms = np.linalg.norm(x, axis=1) * np.linalg.norm(v)
    cos = np.divide(x @ v, norms, out=np.zeros(x.shape[0]), where=norms > 0)
    raw = 1.0 / (1.0 + np.exp(-INSTANCE_TEMPERATURE * cos))
    if level == 0:
        return np.zeros_like(raw)
    p = level * raw / raw.mean()
    target = level * p.size
    for _ in range(50):
        over = p > 1.0
        if not over.any():
            break
        p[over] = 1.0
        free = ~over & (p < 1.0)
        deficit = target - p.sum()
        if not free.any() or deficit <= 0:
            break
        p[free] *= 1.0 + deficit / p[free].sum()
    return np.clip(p, 0.0, 1.0)


def inject_instance(ds: LabeledDataset, level: float, seed: int):
    _check_level(level)
    p = instance_flip_probabilities(ds.features, level, seed)
    # independent stream for the draws so p depends only on (features, level, seed)
    rng = np.random.default_rng([seed, 1])
    mask = rng.random(len(ds)) < p
    return _relabel(ds, mask, _other_class(rng, ds.observed_labels[mask], ds.class_count))


def inject_input_covariate(ds: LabeledDataset, level: float, seed: int):
    """Add N(0, (0.5 * feature std)^2) noise to a Bernoulli(level) subset of rows."""
    _check_level(level)
    rng = np.random.default_rng(seed)
    mask = _select(rng, len(ds), level)
    x = ds.features.copy()
    if mask.any():
        std = ds.features.std(axis=0)
        x[mask] += rng.standard_normal((int(mask.sum()), x.shape[1])) * (COVARIATE_SCALE * std)
    return ds.with_features(x), NoiseReport(np.flatnonzero(mask))


def _bilinear(img, rows, cols):
    """Sample ``img`` (h, w, ch) at fractional coordinates, clamping at the border."""
    h, w = img.shape[:2]
    r = np.clip(rows, 0, h - 1)
    c = np.clip(cols, 0, w - 1)
    r0 = np.floor(r).astype(int)
    c0 = np.floor(c).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (r - r0)[:, None, None]
    fc = (c - c0)[None, :, None]
    top = img[r0][:, c0] * (1 - fc) + img[r0][:, c1] * fc
    bot = img[r1][:, c0] * (1 - fc) + img[r1][:, c1] * fc
    return top * (1 - fr) + bot * fr


def zoom_image(img, factor: float = ZOOM_FACTOR):
    """Centre zoom by ``factor`` resampled back to the original size."""
    h, w = img.shape[:2]
    rows = (h - 1) / 2 + (np.arange(h) - (h - 1) / 2) / factor
    cols = (w - 1) / 2 + (np.arange(w) - (w - 1) / 2) / factor
    return _bilinear(img, rows, cols)


def crop_image(img, top: float, left: float, fraction: float = CROP_FRACTION):
    """Resample the window of ``fraction`` x size starting at (top, left) back to full size."""
    h, w = img.shape[:2]
    rows = top + np.linspace(0, fraction * (h - 1), h)
    cols = left + np.linspace(0, fraction * (w - 1), w)
    return _bilinear(img, rows, cols)


def _image_op(ds, level, seed, op):
    _check_level(level)
    if ds.image_geometry is None:
        raise ValueError("this noise kind needs a dataset with image geometry")
    h, w, ch = ds.image_geometry
    rng = np.random.default_rng(seed)
    mask = _select(rng, len(ds), level)
    x = ds.features.copy()
    for i in np.flatnonzero(mask):
        x[i] = op(rng, x[i].reshape(h, w, ch)).reshape(-1)
    return ds.with_features(x), NoiseReport(np.flatnonzero(mask))


def inject_input_zoom(ds: LabeledDataset, level: float, seed: int):
    return _image_op(ds, level, seed, lambda rng, img: zoom_image(img))


def inject_input_crop(ds: LabeledDataset, level: float, seed: int):
    def op(rng, img):
        h, w = img.shape[:2]
        top = rng.uniform(0, (1 - CROP_FRACTION) * (h - 1))
        left = rng.uniform(0, (1 - CROP_FRACTION) * (w - 1))
        return crop_image(img, top, left)

    return _image_op(ds, level, seed, op)


INJECTORS = {
    "uniform": inject_uniform,
    "asymmetric": inject_asymmetric,
    "instance": inject_instance,
    "adjacent": inject_adjacent,
    "input_covariate": inject_input_covariate,
    "input_zoom": inject_input_zoom,
    "input_crop": inject_input_crop,
}


def inject(ds: LabeledDataset, spec: NoiseSpec):
    return INJECTORS[spec.kind](ds, spec.level, spec.seed)
