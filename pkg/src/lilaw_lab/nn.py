"""Dense feed-forward classifier with hand-written backprop and Adam."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_FLOOR = 1e-12
ACTIVATIONS = ("relu", "tanh")


@dataclass
class MlpModel:
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least an input and an output width")
        if self.layer_sizes[-1] < 2:
            raise ValueError("final layer width (class count) must be >= 2")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("parameter list length does not match layer_sizes")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[i], self.layer_sizes[i + 1])
            if w.shape != expected or b.shape != (expected[1],):
                raise ValueError(f"layer {i}: got W{w.shape}, b{b.shape}, expected W{expected}")

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params(self) -> list[np.ndarray]:
        """Flat view order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "MlpModel":
        return MlpModel(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each dense layer
    pre_activations: list[np.ndarray]  # output of each dense layer before the nonlinearity


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, model: MlpModel, **kwargs) -> "AdamState":
        ps = model.params()
        return cls([np.zeros_like(p) for p in ps], [np.zeros_like(p) for p in ps], **kwargs)


def init_model(seed: int, layer_sizes, activation: str = "relu") -> MlpModel:
    """Glorot-uniform weights, zero biases, deterministic in ``seed``."""
    layer_sizes = [int(s) for s in layer_sizes]
    if len(layer_sizes) < 2:
        raise ValueError("layer_sizes must list at least input and output widths")
    if any(s < 1 for s in layer_sizes):
        raise ValueError("layer widths must be >= 1")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(layer_sizes, weights, biases, activation)


def softmax(logits) -> np.ndarray:
    """Row-wise softmax with max subtraction. Accepts a vector or a 2-D batch."""
    z = np.asarray(logits, dtype=np.float64)
    if z.shape[-1] < 2:
        raise ValueError("softmax needs at least two classes")
    if not np.all(np.isfinite(z)):
        raise ValueError("softmax input contains non-finite values")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _label_probs(probs, labels):
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels)
    c = p.shape[-1]
    if np.any(y < 0) or np.any(y >= c):
        raise ValueError(f"label out of range for {c} classes")
    if p.ndim == 1:
        if y.ndim != 0:
            raise ValueError("a single probability vector takes a scalar label")
        return p[int(y)]
    if y.shape != p.shape[:1]:
        raise ValueError("labels must have one entry per probability row")
    return p[np.arange(p.shape[0]), y]


def cross_entropy(probs, label):
    """-ln p[label], with p clamped to >= 1e-12. Vectorizes over rows."""
    py = np.maximum(_label_probs(probs, label), PROB_FLOOR)
    out = -np.log(py)
    return float(out) if np.ndim(out) == 0 else out


def focal_loss(probs, label, gamma: float):
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    py = _label_probs(probs, label)
    out = -((1.0 - py) ** gamma) * np.log(np.maximum(py, PROB_FLOOR))
    return float(out) if np.ndim(out) == 0 else out


def base_loss_rows(probs: np.ndarray, labels: np.ndarray, base_loss: str = "cross_entropy", gamma: float = 2.0):
    if base_loss == "cross_entropy":
        return cross_entropy(probs, labels)
    if base_loss == "focal":
        return focal_loss(probs, labels, gamma)
    raise ValueError(f"unknown base loss {base_loss!r}")


def _act(z, kind):
    return np.maximum(z, 0.0) if kind == "relu" else np.tanh(z)


def _act_grad(z, kind):
    if kind == "relu":
        return (z > 0).astype(z.dtype)
    t = np.tanh(z)
    return 1.0 - t * t


def forward(model: MlpModel, batch) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.layer_sizes[0]:
        raise ValueError(f"batch shape {x.shape} incompatible with input width {model.layer_sizes[0]}")
    cache = ForwardCache([], [])
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        cache.inputs.append(h)
        z = h @ w + b
        cache.pre_activations.append(z)
        h = z if i == last else _act(z, model.activation)
    return h, cache


def _dloss_dlogits(probs, labels, base_loss, gamma):
    n = probs.shape[0]
    rows = np.arange(n)
    delta = -probs
    delta[rows, labels] += 1.0  # onehot - p
    if base_loss == "cross_entropy":
        return -delta
    if base_loss != "focal":
        raise ValueError(f"unknown base loss {base_loss!r}")
    py = probs[rows, labels]
    q = 1.0 - py
    logp = np.log(np.maximum(py, PROB_FLOOR))
    # d/dp_y of -(1-p)^g ln p, times p_y from the softmax Jacobian
    if gamma == 0:
        coef = -np.ones_like(py)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            qg1 = np.where(q > 0, q ** (gamma - 1.0), 0.0)  # at q == 0 the ln p factor is 0 too
        coef = gamma * qg1 * py * logp - q**gamma
    return coef[:, None] * delta


def backward(
    model: MlpModel,
    cache: ForwardCache,
    probs,
    labels,
    sample_weights,
    base_loss: str = "cross_entropy",
    gamma: float = 2.0,
) -> Gradients:
    """Gradients of mean_i(w_i * loss_i) w.r.t. every weight and bias.

    The sample weights are treated as constants.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    w = np.asarray(sample_weights, dtype=np.float64)
    n = probs.shape[0]
    if probs.shape != (n, model.n_classes) or labels.shape != (n,) or w.shape != (n,):
        raise ValueError("probs, labels and sample_weights must agree on batch size and class count")
    if len(cache.inputs) != len(model.weights) or cache.inputs[0].shape[0] != n:
        raise ValueError("forward cache does not match model or batch")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("sample weights must be finite and nonnegative")

    g = _dloss_dlogits(probs, labels, base_loss, gamma) * (w / n)[:, None]
    gw = [None] * len(model.weights)
    gb = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        gw[i] = cache.inputs[i].T @ g
        gb[i] = g.sum(axis=0)
        if i > 0:
            g = (g @ model.weights[i].T) * _act_grad(cache.pre_activations[i - 1], model.activation)
    return Gradients(gw, gb)


def adam_step(
    model: MlpModel,
    grads: Gradients,
    state: AdamState,
    lr: float,
    wd: float = 0.0,
) -> tuple[MlpModel, AdamState]:
    """One Adam update with decoupled weight decay. Returns new objects; inputs are left untouched."""
    params = model.params()
    gs = grads.params()
    if len(gs) != len(params) or len(state.m) != len(params):
        raise ValueError("gradient / optimizer state do not match model")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, gs, state.m, state.v):
        if g.shape != p.shape or m.shape != p.shape:
            raise ValueError("shape mismatch between parameter and gradient")
        p = p - lr * wd * p if wd else p.copy()
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_params.append(p)
        new_m.append(m)
        new_v.append(v)
    new_model = MlpModel(list(model.layer_sizes), new_params[0::2], new_params[1::2], model.activation)
    return new_model, AdamState(new_m, new_v, t, b1, b2, state.eps)
