"""Bi-level training loop: a weighted Adam step on the network, then a meta step on (alpha, beta, delta)."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .data import LabeledDataset
from .lilaw import LilawParams, confidence_pairs, grads_from_pairs, meta_update
from .metrics import UndefinedMetricError, macro_ovr_auroc, top_k_accuracy
from .nn import (
    AdamState,
    MlpModel,
    adam_step,
    backward,
    base_loss_rows,
    forward,
    init_model,
    softmax,
)

log = logging.getLogger(__name__)

RUNLOG_HEADER = ("epoch", "train_loss", "val_loss", "test_top1", "test_topk", "test_auroc",
                 "alpha", "beta", "delta")
WEIGHTS_HEADER = ("index", "observed_label", "clean_flag", "w_alpha", "w_beta", "w_delta", "w")


def fmt(x) -> str:
    """Six significant digits, decimal point, no locale."""
    return f"{float(x):.6g}"


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr_theta: float = 1e-3
    wd_theta: float = 0.0
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "relu"
    lilaw_enabled: bool = True
    lilaw_init: tuple[float, float, float] = (10.0, 2.0, 6.0)
    lilaw_lrs: tuple[float, float, float] = (0.005, 0.005, 0.005)
    lilaw_wds: tuple[float, float, float] = (0.0001, 0.0001, 0.0001)
    lilaw_mask: tuple[bool, bool, bool] = (True, True, True)
    warmup_epochs: int = 1
    base_loss: str = "cross_entropy"
    focal_gamma: float = 2.0
    early_stop_patience: int = 10  # 0 disables early stopping
    top_k: int = 5
    seed: int = 0
    snapshot_epochs: tuple[int, ...] = ()

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ValueError("warmup_epochs must be in [0, epochs)")
        if self.base_loss not in ("cross_entropy", "focal"):
            raise ValueError(f"unknown base loss {self.base_loss!r}")
        if self.lilaw_enabled and not any(self.lilaw_mask):
            raise ValueError("lilaw_mask must enable at least one weight term")

    def lilaw_params(self) -> LilawParams:
        return LilawParams.from_config(self.lilaw_init, self.lilaw_lrs, self.lilaw_wds, self.lilaw_mask)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    test_top1: float
    test_topk: float
    test_auroc: float
    alpha: float
    beta: float
    delta: float

    def row(self):
        return [str(self.epoch)] + [fmt(getattr(self, k)) for k in RUNLOG_HEADER[1:]]


@dataclass
class WeightTable:
    w_alpha: np.ndarray
    w_beta: np.ndarray
    w_delta: np.ndarray
    w: np.ndarray
    observed_labels: np.ndarray
    clean_flags: np.ndarray

    def __len__(self):
        return self.w.size

    def __getitem__(self, name):
        return getattr(self, name)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(WEIGHTS_HEADER)
            for i in range(len(self)):
                wr.writerow([i, int(self.observed_labels[i]), int(self.clean_flags[i]),
                             fmt(self.w_alpha[i]), fmt(self.w_beta[i]), fmt(self.w_delta[i]), fmt(self.w[i])])


@dataclass
class RunLog:
    records: list[EpochRecord] = field(default_factory=list)
    trajectory: list[tuple[float, float, float]] = field(default_factory=list)
    snapshots: dict[int, WeightTable] = field(default_factory=dict)
    meta_updates: int = 0
    best_epoch: int = 0
    final_params: LilawParams | None = None
    epoch_seconds: list[float] = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(RUNLOG_HEADER)
            for r in self.records:
                wr.writerow(r.row())


def predict_logits(model: MlpModel, features, chunk: int = 4096) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.shape[0] == 0:
        return np.zeros((0, model.n_classes))
    return np.concatenate([forward(model, x[i:i + chunk])[0] for i in range(0, x.shape[0], chunk)])


def evaluate(model: MlpModel, dataset: LabeledDataset, k: int = 5, temperature: float = 1.0,
             base_loss: str = "cross_entropy", gamma: float = 2.0) -> dict:
    """Top-1, top-k, macro one-vs-rest AUROC and mean base loss against observed labels."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    k = min(k, model.n_classes)
    logits = predict_logits(model, dataset.features) / temperature
    probs = softmax(logits)
    y = dataset.observed_labels
    try:
        auroc = macro_ovr_auroc(probs, y)
    except UndefinedMetricError:
        auroc = math.nan
    return {
        "top1": top_k_accuracy(logits, y, 1),
        "topk": top_k_accuracy(logits, y, k),
        "macro_auroc": auroc,
        "mean_loss": float(np.mean(base_loss_rows(probs, y, base_loss, gamma))),
    }


def snapshot_weights(model: MlpModel, train_ds: LabeledDataset, params: LilawParams) -> WeightTable:
    """Per-sample (W_alpha, W_beta, W_delta, W) under the current model and parameters."""
    probs = softmax(predict_logits(model, train_ds.features))
    s, m = confidence_pairs(probs, train_ds.observed_labels)
    wa, wb, wd, w, *_ = kernels.lilaw_terms(s, m, np.zeros_like(s), params.alpha, params.beta,
                                            params.delta, *params.enabled)
    return WeightTable(wa, wb, wd, w, train_ds.observed_labels.copy(), train_ds.clean_flags.copy())


def _check_inputs(cfg, train_ds, val_ds, test_ds):
    if len(train_ds) == 0:
        raise ValueError("training set is empty")
    needs_val = cfg.lilaw_enabled or cfg.early_stop_patience > 0
    if needs_val and (val_ds is None or len(val_ds) == 0):
        raise ValueError("a nonempty validation set is required for LiLAW and early stopping")
    for other in (val_ds, test_ds):
        if other is not None and len(other):
            if other.n_features != train_ds.n_features or other.class_count != train_ds.class_count:
                raise ValueError("datasets disagree on feature width or class count")


def train(cfg: TrainConfig, train_ds: LabeledDataset, val_ds: LabeledDataset | None,
          test_ds: LabeledDataset | None = None) -> tuple[MlpModel, RunLog]:
    _check_inputs(cfg, train_ds, val_ds, test_ds)
    c = train_ds.class_count
    init_ss, order_ss, val_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    model = init_model(init_ss, [train_ds.n_features, *cfg.hidden, c], cfg.activation)
    adam = AdamState.zeros_like(model)
    order_rng = np.random.default_rng(order_ss)
    val_rng = np.random.default_rng(val_ss)

    params = cfg.lilaw_params()
    runlog = RunLog(trajectory=[params.values])
    x, y = train_ds.features, train_ds.observed_labels
    n, bs = len(train_ds), cfg.batch_size
    loss_kw = {"base_loss": cfg.base_loss, "gamma": cfg.focal_gamma}
    k = min(cfg.top_k, c)
    gamma_code = cfg.focal_gamma if cfg.base_loss == "focal" else -1.0
    n_val = len(val_ds) if val_ds is not None else 0

    best_score, best_model, best_params, wait = -math.inf, model, params, 0
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        weighted = cfg.lilaw_enabled and epoch > cfg.warmup_epochs
        perm = order_rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, bs):
            idx = perm[start:start + bs]
            yb = y[idx]
            # network step: LiLAW weights are constants here
            logits, cache = forward(model, x[idx])
            probs, s, m, base = kernels.softmax_confidence(logits, yb, gamma_code)
            if weighted:
                w = kernels.lilaw_terms(s, m, base, params.alpha, params.beta, params.delta,
                                        *params.enabled)[3]
            else:
                w = np.ones(idx.size)
            loss_sum += float(np.dot(w, base))
            grads = backward(model, cache, probs, yb, w, **loss_kw)
            model, adam = adam_step(model, grads, adam, cfg.lr_theta, cfg.wd_theta)

            if weighted:
                # meta step on one random validation batch; the network is frozen here
                vidx = val_rng.integers(0, n_val, size=bs)
                vy = val_ds.observed_labels[vidx]
                _, vs, vm, vbase = kernels.softmax_confidence(
                    forward(model, val_ds.features[vidx])[0], vy, gamma_code)
                params = meta_update(params, grads_from_pairs(vs, vm, vbase, params))
                runlog.trajectory.append(params.values)
                runlog.meta_updates += 1
        runlog.epoch_seconds.append(time.perf_counter() - t0)

        val_metrics = evaluate(model, val_ds, k, **loss_kw) if val_ds is not None and len(val_ds) else None
        test_metrics = evaluate(model, test_ds, k, **loss_kw) if test_ds is not None and len(test_ds) else None
        nan = math.nan
        runlog.records.append(EpochRecord(
            epoch=epoch,
            train_loss=loss_sum / n,
            val_loss=val_metrics["mean_loss"] if val_metrics else nan,
            test_top1=test_metrics["top1"] if test_metrics else nan,
            test_topk=test_metrics["topk"] if test_metrics else nan,
            test_auroc=test_metrics["macro_auroc"] if test_metrics else nan,
            alpha=params.alpha, beta=params.beta, delta=params.delta,
        ))
        if epoch in cfg.snapshot_epochs:
            runlog.snapshots[epoch] = snapshot_weights(model, train_ds, params)
        log.debug("epoch %d: %s", epoch, runlog.records[-1])

        if cfg.early_stop_patience > 0:
            if val_metrics["top1"] > best_score:
                best_score, best_model, best_params, wait = val_metrics["top1"], model, params, 0
                runlog.best_epoch = epoch
            else:
                wait += 1
                if wait >= cfg.early_stop_patience:
                    log.info("early stop at epoch %d (best %d)", epoch, runlog.best_epoch)
                    break
        else:
            best_model, best_params, runlog.best_epoch = model, params, epoch

    runlog.final_params = best_params
    return best_model, runlog
