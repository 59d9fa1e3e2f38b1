"""Classification and ranking metrics, temperature scaling, mislabel scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .nn import cross_entropy, softmax


class UndefinedMetricError(ValueError):
    """Raised when a ranking metric is undefined, e.g. only one class is present."""


@dataclass(frozen=True)
class ScoredFlags:
    scores: np.ndarray
    flags: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64).ravel()
        f = np.asarray(self.flags).ravel()
        if s.shape != f.shape:
            raise ValueError("scores and flags must have equal length")
        if not np.all((f == 0) | (f == 1)):
            raise ValueError("flags must be 0 or 1")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "flags", f.astype(np.int8))


@dataclass(frozen=True)
class Temperature:
    t: float

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError("temperature must be positive")

    def apply(self, logits):
        return np.asarray(logits, dtype=np.float64) / self.t


def _positives(sf: ScoredFlags, positive: str) -> np.ndarray:
    if positive == "flag1":
        return sf.flags == 1
    if positive == "flag0":
        return sf.flags == 0
    raise ValueError("positive must be 'flag0' or 'flag1'")


def top_k_accuracy(logits, labels, k: int) -> float:
    """Percent of rows whose label is among the k highest scores (ties go to the lower index)."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2 or z.shape[0] == 0:
        raise ValueError("top_k_accuracy needs a nonempty 2-D score matrix")
    if not 1 <= k <= z.shape[1]:
        raise ValueError(f"k must be in [1, {z.shape[1]}]")
    zy = z[np.arange(z.shape[0]), y][:, None]
    cols = np.arange(z.shape[1])[None, :]
    ahead = (z > zy) | ((z == zy) & (cols < y[:, None]))
    return 100.0 * float(np.mean(ahead.sum(axis=1) < k))


def _average_ranks(x):
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(x.size, dtype=np.float64)
    # tie groups share the mean of their 1-based positions
    edges = np.flatnonzero(np.diff(xs)) + 1
    starts = np.concatenate(([0], edges))
    ends = np.concatenate((edges, [x.size]))
    mean_rank = (starts + ends + 1) / 2.0
    ranks[order] = np.repeat(mean_rank, ends - starts)
    return ranks


def auroc_binary(sf: ScoredFlags, positive: str = "flag1") -> float:
    """Mann-Whitney AUROC: P(score_pos > score_neg) + 0.5 * P(tie)."""
    pos = _positives(sf, positive)
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC is undefined unless both classes are present")
    ranks = _average_ranks(sf.scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auprc_binary(sf: ScoredFlags, positive: str = "flag1") -> float:
    """Average precision over the step PR curve; tied scores enter as one threshold."""
    pos = _positives(sf, positive)
    n_pos = int(pos.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUPRC is undefined without positives")
    order = np.argsort(-sf.scores, kind="mergesort")
    s = sf.scores[order]
    hit = pos[order].astype(np.int64)
    ends = np.concatenate((np.flatnonzero(np.diff(s)), [s.size - 1]))
    tp = np.cumsum(hit)[ends]
    seen = ends + 1
    d_tp = np.diff(np.concatenate(([0], tp)))
    # exact rational accumulation, rounded once: sum over thresholds of recall step * precision
    area = sum((Fraction(int(dt) * int(t), int(k)) for dt, t, k in zip(d_tp, tp, seen) if dt), Fraction(0))
    return float(area / n_pos)


def macro_ovr_auroc(probs, labels) -> float:
    """Unweighted mean of one-vs-rest AUROCs over classes that occur in ``labels``."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    present = [k for k in range(p.shape[1]) if np.any(y == k)]
    if len(present) < 2:
        raise UndefinedMetricError("macro AUROC needs at least two classes present")
    vals = [auroc_binary(ScoredFlags(p[:, k], (y == k).astype(np.int8))) for k in present]
    return float(np.mean(vals))


def mean_nll(logits, labels, t: float = 1.0) -> float:
    return float(np.mean(cross_entropy(softmax(np.asarray(logits) / t), labels)))


def fit_temperature(logits, labels, lo: float = 0.05, hi: float = 20.0, tol: float = 1e-4) -> Temperature:
    """Golden-section search for the temperature minimizing validation NLL."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] == 0:
        raise ValueError("need nonempty validation logits")
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = mean_nll(z, labels, c), mean_nll(z, labels, d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = mean_nll(z, labels, c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = mean_nll(z, labels, d)
    return Temperature(min(max((a + b) / 2.0, lo), hi))


SCORE_COLUMNS = ("w_alpha", "w_beta", "w_delta", "w")


def mislabel_detection_report(table, flags) -> list[dict]:
    """AUROC/AUPRC of each weight column as a mislabel detector.

    ``table`` maps score names to per-sample arrays. Mislabeled samples
    (flag 0) are the positive class. Each score is used in whichever
    direction gives AUROC >= 0.5, and that direction is reported.
    """
    f = np.asarray(flags).ravel()
    if f.size == 0 or np.all(f == f[0]):
        raise UndefinedMetricError("mislabel detection needs both clean and mislabeled samples")
    out = []
    for name in SCORE_COLUMNS:
        scores = np.asarray(table[name], dtype=np.float64)
        if scores.shape != f.shape:
            raise ValueError(f"column {name} has {scores.size} rows, flags have {f.size}")
        as_mislabel = ScoredFlags(scores, f)
        auc = auroc_binary(as_mislabel, positive="flag0")
        if auc >= 0.5:
            orientation, sf = "higher_is_mislabeled", as_mislabel
        else:
            orientation, sf = "higher_is_clean", ScoredFlags(-scores, f)
            auc = auroc_binary(sf, positive="flag0")
        out.append({"score_name": name, "orientation": orientation, "auroc": auc,
                    "auprc": auprc_binary(sf, positive="flag0")})
    return out
