"""Runs (seed x noise level x condition) grids and writes the CSV artifacts."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, replace
from decimal import Decimal
from pathlib import Path

import numpy as np

from . import data, noise
from .config import Condition, ExperimentConfig
from .metrics import UndefinedMetricError, fit_temperature, macro_ovr_auroc, mean_nll, mislabel_detection_report
from .nn import softmax
from .trainer import TrainConfig, evaluate, fmt, predict_logits, snapshot_weights, train

log = logging.getLogger(__name__)

FINAL_HEADER = ("condition", "arm", "noise_kind", "noise_level", "seed", "best_epoch", "epochs_run",
                "meta_updates", "test_top1", "test_topk", "test_auroc", "test_nll", "temperature",
                "test_nll_calibrated", "test_auroc_calibrated", "alpha", "beta", "delta")
MISLABEL_HEADER = ("score_name", "orientation", "auroc", "auprc")
SUMMARY_HEADER = ("condition", "noise_level", "n_seeds", "top1_mean", "top1_std", "topk_mean", "topk_std",
                  "auroc_mean", "auroc_std", "delta_top1", "delta_topk", "delta_auroc")


def _subseed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([seed, tag]).generate_state(1)[0])


@dataclass
class Splits:
    train: data.LabeledDataset
    val: data.LabeledDataset
    test: data.LabeledDataset


def load_base(cfg: ExperimentConfig, seed: int) -> tuple[data.LabeledDataset, data.LabeledDataset | None]:
    """The full pool to split, and a separate test set if the config names one."""
    d = cfg.dataset
    if d.source == "blobs":
        return data.gen_blobs(d.seed + seed, d.classes, d.n_per_class, d.features, d.separation), None
    if d.source == "idx":
        pool = data.load_idx(d.images, d.labels)
        test = data.load_idx(d.test_images, d.test_labels, pool.class_count) if d.test_images else None
    else:
        pool = data.load_delim(d.path, d.label_column, d.delimiter, d.has_header)
        test = data.load_delim(d.test_path, d.label_column, d.delimiter, d.has_header) if d.test_path else None
    if test is not None and test.class_count != pool.class_count:
        c = max(test.class_count, pool.class_count)
        pool = replace_class_count(pool, c)
        test = replace_class_count(test, c)
    return pool, test


def replace_class_count(ds: data.LabeledDataset, c: int) -> data.LabeledDataset:
    return data.LabeledDataset(ds.features, ds.observed_labels, ds.clean_labels, c, ds.image_geometry)


def build_splits(cfg: ExperimentConfig, seed: int, level: float) -> Splits:
    """Split first, then corrupt train and (optionally) validation independently."""
    pool, test = load_base(cfg, seed)
    if test is None:
        pool, test = data.split_train_val(pool, data.SplitSpec(cfg.dataset.test_fraction, _subseed(seed, 1)))
    tr, va = data.split_train_val(pool, data.SplitSpec(cfg.val_fraction, _subseed(seed, 2)))
    kind = cfg.noise.kind
    tr, _ = noise.inject(tr, noise.NoiseSpec(kind, level, _subseed(seed, 3)))
    if cfg.noise.apply_to_val:
        va, _ = noise.inject(va, noise.NoiseSpec(kind, level, _subseed(seed, 4)))
    if cfg.noise.input_kind != "none" and cfg.noise.input_level > 0:
        tr, _ = noise.inject(tr, noise.NoiseSpec(cfg.noise.input_kind, cfg.noise.input_level, _subseed(seed, 5)))
        if cfg.noise.apply_to_val:
            va, _ = noise.inject(va, noise.NoiseSpec(cfg.noise.input_kind, cfg.noise.input_level,
                                                     _subseed(seed, 6)))
    return Splits(tr, va, test)


def run_label(cond: Condition, kind: str, level: float) -> str:
    return f"{cond.name}-{kind}{level:g}"


def _train_config(cfg: ExperimentConfig, cond: Condition, seed: int) -> TrainConfig:
    return replace(cfg.train, lilaw_enabled=cond.lilaw, lilaw_mask=cond.mask if cond.lilaw else cfg.train.lilaw_mask,
                   seed=seed, snapshot_epochs=tuple(cfg.snapshot_epochs))


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)


def run_one(cfg: ExperimentConfig, cond: Condition, seed: int, level: float, out: Path) -> dict:
    """Train one (condition, seed, level) cell and write its artifacts. Returns the final metrics row."""
    splits = build_splits(cfg, seed, level)
    tcfg = _train_config(cfg, cond, seed)
    model, runlog = train(tcfg, splits.train, splits.val, splits.test)
    label = run_label(cond, cfg.noise.kind, level)

    runlog.to_csv(out / f"runlog_{label}_{seed}.csv")
    for epoch, table in sorted(runlog.snapshots.items()):
        table.to_csv(out / f"weights_{label}_{seed}_epoch{epoch}.csv")

    params = runlog.final_params
    table = snapshot_weights(model, splits.train, params)
    try:
        report = mislabel_detection_report(table, splits.train.clean_flags)
    except UndefinedMetricError:
        report = []
    _write_rows(out / f"mislabel_{label}_{seed}.csv", MISLABEL_HEADER,
                [[r["score_name"], r["orientation"], fmt(r["auroc"]), fmt(r["auprc"])] for r in report])

    k = min(tcfg.top_k, splits.train.class_count)
    test_metrics = evaluate(model, splits.test, k, base_loss="cross_entropy")
    test_logits = predict_logits(model, splits.test.features)
    t, nll_cal, auroc_cal = 1.0, test_metrics["mean_loss"], test_metrics["macro_auroc"]
    if cfg.calibrate:
        t = fit_temperature(predict_logits(model, splits.val.features), splits.val.observed_labels).t
        nll_cal = mean_nll(test_logits, splits.test.observed_labels, t)
        try:
            auroc_cal = macro_ovr_auroc(softmax(test_logits / t), splits.test.observed_labels)
        except UndefinedMetricError:
            auroc_cal = math.nan
    row = {
        "condition": cond.name, "arm": "lilaw" if cond.lilaw else "baseline", "noise_kind": cfg.noise.kind,
        "noise_level": level, "seed": seed, "best_epoch": runlog.best_epoch, "epochs_run": len(runlog.records),
        "meta_updates": runlog.meta_updates, "test_top1": test_metrics["top1"], "test_topk": test_metrics["topk"],
        "test_auroc": test_metrics["macro_auroc"], "test_nll": test_metrics["mean_loss"], "temperature": t,
        "test_nll_calibrated": nll_cal, "test_auroc_calibrated": auroc_cal,
        "alpha": params.alpha, "beta": params.beta, "delta": params.delta,
    }
    _write_rows(out / f"final_{label}_{seed}.csv", FINAL_HEADER,
                [[v if isinstance(v, (int, str)) else fmt(v) for v in (row[h] for h in FINAL_HEADER)]])
    return row


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = [(cond, seed, level) for level in cfg.noise.levels for seed in cfg.seeds for cond in cfg.conditions]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as pool:
            list(pool.map(run_one, [cfg] * len(cells), *zip(*cells), [out] * len(cells)))
    else:
        for cond, seed, level in cells:
            log.info("running %s seed=%d level=%g", cond.name, seed, level)
            run_one(cfg, cond, seed, level, out)
    summarize(out)
    return out


def _std(v):
    return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0


def summarize(directory) -> list[dict]:
    """Rebuild ``summary.csv`` from the per-run files in ``directory``."""
    directory = Path(directory)
    runs = sorted(directory.glob("runlog_*.csv"))
    if not runs:
        raise FileNotFoundError(f"no runlog_*.csv files in {directory}")
    groups: dict[tuple[str, float], list[dict]] = {}
    for runlog_path in runs:
        final_path = directory / ("final_" + runlog_path.name[len("runlog_"):])
        if not final_path.exists():
            raise FileNotFoundError(f"{final_path.name} missing for {runlog_path.name}")
        header, rows = data.read_table(final_path)
        rec = dict(zip(header, rows[0]))
        groups.setdefault((rec["condition"], float(rec["noise_level"])), []).append(rec)

    def cond_key(name):
        return (name != "baseline", name)

    summary = []
    for level in sorted({lv for _, lv in groups}):
        base = groups.get(("baseline", level))
        for name in sorted({c for c, lv in groups if lv == level}, key=cond_key):
            recs = groups[(name, level)]
            row = {"condition": name, "noise_level": level, "n_seeds": len(recs)}
            for m in ("top1", "topk", "auroc"):
                vals = [r[f"test_{m}"] for r in recs]
                row[f"{m}_mean"] = fmt(np.mean(vals))
                row[f"{m}_std"] = fmt(_std(vals))
                if base:
                    # exact decimal difference of the written means, so the CSV is self-consistent
                    b = Decimal(fmt(np.mean([r[f"test_{m}"] for r in base])))
                    row[f"delta_{m}"] = format(Decimal(row[f"{m}_mean"]) - b, "f")
                else:
                    row[f"delta_{m}"] = ""
            summary.append(row)

    def cell(v):
        return fmt(v) if isinstance(v, float) else v

    _write_rows(directory / "summary.csv", SUMMARY_HEADER, [[cell(r[h]) for h in SUMMARY_HEADER] for r in summary])
    return summary
