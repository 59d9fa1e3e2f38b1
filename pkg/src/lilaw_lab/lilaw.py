"""LiLAW sample weighting: weight terms, weighted loss, meta-gradients and update.

Every function works on the ``(s_true, s_max)`` confidence pair of each
sample: the softmax probability of the observed label and the largest
softmax probability. Use :func:`confidence_pairs` to get them from a batch of
probability rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .nn import base_loss_rows

TERMS = ("alpha", "beta", "delta")


@dataclass(frozen=True)
class SoftmaxRow:
    probs: np.ndarray
    observed_label: int

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 2:
            raise ValueError("probs must be a vector of length >= 2")
        if abs(p.sum() - 1.0) > 1e-9 or np.any(p < 0):
            raise ValueError("probs must be a probability vector")
        if not 0 <= self.observed_label < p.size:
            raise ValueError("observed_label out of range")
        object.__setattr__(self, "probs", p)

    @property
    def s_true(self) -> float:
        return float(self.probs[self.observed_label])

    @property
    def s_max(self) -> float:
        return float(self.probs.max())


@dataclass(frozen=True)
class LilawParams:
    alpha: float = 10.0
    beta: float = 2.0
    delta: float = 6.0
    lr_alpha: float = 0.005
    lr_beta: float = 0.005
    lr_delta: float = 0.005
    wd_alpha: float = 0.0001
    wd_beta: float = 0.0001
    wd_delta: float = 0.0001
    enabled: tuple[bool, bool, bool] = (True, True, True)

    def __post_init__(self):
        vals = (self.alpha, self.beta, self.delta, self.lr_alpha, self.lr_beta, self.lr_delta,
                self.wd_alpha, self.wd_beta, self.wd_delta)
        if not all(np.isfinite(vals)):
            raise ValueError("LiLAW parameters must be finite")
        if min(self.lr_alpha, self.lr_beta, self.lr_delta) < 0:
            raise ValueError("learning rates must be nonnegative")
        if min(self.wd_alpha, self.wd_beta, self.wd_delta) < 0:
            raise ValueError("weight decays must be nonnegative")
        object.__setattr__(self, "enabled", tuple(bool(e) for e in self.enabled))
        if len(self.enabled) != 3:
            raise ValueError("enabled mask needs exactly three flags")

    @classmethod
    def from_config(cls, init, lrs, wds, mask=(True, True, True)) -> "LilawParams":
        return cls(*map(float, init), *map(float, lrs), *map(float, wds), enabled=tuple(mask))

    @property
    def values(self) -> tuple[float, float, float]:
        return (self.alpha, self.beta, self.delta)


@dataclass(frozen=True)
class LilawGrads:
    d_alpha: float = 0.0
    d_beta: float = 0.0
    d_delta: float = 0.0


@dataclass
class WeightedLoss:
    per_sample: np.ndarray
    mean: float
    weights: np.ndarray
    base: np.ndarray = field(repr=False)


def confidence_pairs(probs, labels) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    return p[np.arange(p.shape[0]), y], p.max(axis=1)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def weight_alpha(s_true, s_max, alpha: float):
    """Sigmoid term favouring samples the model already gets right."""
    return _sigmoid(alpha * np.asarray(s_true) - s_max)


def weight_beta(s_true, s_max, beta: float):
    return _sigmoid(-(beta * np.asarray(s_true) - s_max))


def weight_delta(s_true, s_max, delta: float):
    """Radial term peaking at 1 where ``delta * s_true == s_max``."""
    z = delta * np.asarray(s_true) - s_max
    return np.exp(-0.5 * z * z)


def _check_mask(params: LilawParams):
    if not any(params.enabled):
        raise ValueError("at least one LiLAW weight term must be enabled")


def component_weights(s_true, s_max, params: LilawParams):
    """``(W_alpha, W_beta, W_delta, W)`` for every sample; ``W`` sums the enabled terms."""
    _check_mask(params)
    s = np.atleast_1d(np.asarray(s_true, dtype=np.float64))
    m = np.atleast_1d(np.asarray(s_max, dtype=np.float64))
    wa, wb, wd, w, *_ = kernels.lilaw_terms(s, m, np.zeros_like(s), params.alpha, params.beta,
                                            params.delta, *params.enabled)
    return wa, wb, wd, w


def sample_weight(s_true, s_max, params: LilawParams):
    w = component_weights(s_true, s_max, params)[3]
    return float(w[0]) if np.ndim(s_true) == 0 else w


def weighted_loss(probs, labels, params: LilawParams, base_loss: str = "cross_entropy",
                  gamma: float = 2.0) -> WeightedLoss:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ValueError("weighted_loss needs a nonempty batch of probability rows")
    base = base_loss_rows(probs, labels, base_loss, gamma)
    s, m = confidence_pairs(probs, labels)
    _, _, _, w = component_weights(s, m, params)
    per = w * base
    return WeightedLoss(per, float(per.mean()), w, base)


def grads_from_pairs(s_true, s_max, losses, params: LilawParams) -> LilawGrads:
    """Batch-mean meta-gradients given precomputed confidence pairs and base losses."""
    _check_mask(params)
    n = len(losses)
    if n == 0:
        raise ValueError("empty batch")
    *_, ga, gb, gd = kernels.lilaw_terms(s_true, s_max, losses, params.alpha, params.beta,
                                         params.delta, *params.enabled)
    return LilawGrads(ga / n, gb / n, gd / n)


def grad_params(probs, labels, params: LilawParams, base_loss: str = "cross_entropy",
                gamma: float = 2.0) -> LilawGrads:
    """Closed-form batch-mean gradients of the weighted loss w.r.t. alpha, beta, delta.

    Base losses are constants here: only the weight terms depend on the
    three parameters, and each parameter only enters its own term.
    """
    probs = np.asarray(probs, dtype=np.float64)
    base = base_loss_rows(probs, labels, base_loss, gamma)
    s, m = confidence_pairs(probs, labels)
    return grads_from_pairs(s, m, base, params)


def meta_update(params: LilawParams, grads: LilawGrads) -> LilawParams:
    """Plain gradient step with additive weight decay; alpha is clamped to >= 1."""
    g = (grads.d_alpha, grads.d_beta, grads.d_delta)
    if not all(np.isfinite(g)):
        raise ValueError("non-finite LiLAW gradient")
    lrs = (params.lr_alpha, params.lr_beta, params.lr_delta)
    wds = (params.wd_alpha, params.wd_beta, params.wd_delta)
    new = []
    for value, grad, lr, wd, on in zip(params.values, g, lrs, wds, params.enabled):
        new.append(value - lr * (grad + wd * value) if on else value)
    return replace(params, alpha=max(new[0], 1.0), beta=new[1], delta=new[2])
