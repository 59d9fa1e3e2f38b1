"""Experiment configuration: INI-style sections of ``key = value`` lines.

Data file paths are resolved relative to the config file; ``output_dir`` is
relative to the working directory and can be overridden with the
``LILAW_LAB_OUTPUT_DIR`` environment variable.

Every problem found is reported as a :class:`Diagnostic` anchored to the
line of the offending key, so one ``validate`` pass lists them all.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from .noise import INPUT_KINDS, LABEL_KINDS
from .trainer import TrainConfig

OUTPUT_DIR_ENV = "LILAW_LAB_OUTPUT_DIR"
TERM_NAMES = ("alpha", "beta", "delta")


@dataclass(frozen=True)
class Diagnostic:
    line: int
    field: str
    message: str

    def __str__(self):
        where = f"line {self.line}" if self.line else "config"
        return f"{where}: {self.field}: {self.message}"


class ConfigError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


@dataclass(frozen=True)
class Condition:
    """A training arm: the baseline or LiLAW with a given term mask."""

    name: str
    lilaw: bool
    mask: tuple[bool, bool, bool] = (True, True, True)


@dataclass
class DatasetSpec:
    source: str = "blobs"
    classes: int = 3
    n_per_class: int = 600
    features: int = 10
    separation: float = 3.0
    seed: int = 0
    test_fraction: float = 0.3
    images: str = ""
    labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    path: str = ""
    test_path: str = ""
    label_column: int = -1
    delimiter: str = ","
    has_header: bool = False


@dataclass
class NoiseConfig:
    kind: str = "uniform"
    levels: tuple[float, ...] = (0.0,)
    apply_to_val: bool = True
    input_kind: str = "none"
    input_level: float = 0.0


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    val_fraction: float = 0.15
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(early_stop_patience=10))
    seeds: tuple[int, ...] = (0,)
    conditions: tuple[Condition, ...] = (Condition("baseline", False), Condition("lilaw", True))
    snapshot_epochs: tuple[int, ...] = ()
    calibrate: bool = False
    output_dir: str = "runs"


def _line_index(text: str) -> dict:
    """Map (section, key) -> 1-based line number."""
    idx, section = {}, None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            idx[(section, None)] = i
        elif section is not None:
            for sep in ("=", ":"):
                if sep in line:
                    idx[(section, line.split(sep, 1)[0].strip().lower())] = i
                    break
    return idx


def parse_condition(text: str) -> Condition:
    """``baseline``, ``lilaw``, or an ablation such as ``lilaw:alpha+delta``."""
    text = text.strip()
    if text == "baseline":
        return Condition("baseline", False)
    if text == "lilaw":
        return Condition("lilaw", True)
    if text.startswith("lilaw:"):
        terms = [t.strip() for t in text[6:].split("+") if t.strip()]
        bad = [t for t in terms if t not in TERM_NAMES]
        if bad:
            raise ValueError(f"unknown LiLAW term(s) {bad}; use {'/'.join(TERM_NAMES)}")
        mask = tuple(t in terms for t in TERM_NAMES)
        if not any(mask):
            raise ValueError("an ablation must keep at least one weight term")
        return Condition("lilaw-" + "-".join(t for t in TERM_NAMES if t in terms), True, mask)
    raise ValueError(f"unknown condition {text!r}")


class _Reader:
    def __init__(self, parser, lines):
        self.p = parser
        self.lines = lines
        self.diags: list[Diagnostic] = []

    def err(self, section, key, msg):
        line = self.lines.get((section, key), self.lines.get((section, None), 0))
        self.diags.append(Diagnostic(line, section if key is None else f"{section}.{key}", msg))

    def get(self, section, key, conv, default):
        if not self.p.has_option(section, key):
            return default
        raw = self.p.get(section, key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            self.err(section, key, f"cannot parse {raw!r}: {exc}")
            return default


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true/false")


def _list(conv):
    def parse(s):
        items = [t.strip() for t in s.replace(";", ",").split(",") if t.strip()]
        return tuple(conv(t) for t in items)

    return parse


def _int(s):
    return int(s.strip())


def _float(s):
    return float(s.strip())


def _str(s):
    return s.strip()


KNOWN = {
    "experiment": {"seeds", "conditions", "snapshot_epochs", "output_dir", "calibrate"},
    "dataset": {"source", "classes", "n_per_class", "features", "separation", "seed", "test_fraction",
                "images", "labels", "test_images", "test_labels", "path", "test_path", "label_column",
                "delimiter", "has_header"},
    "split": {"val_fraction"},
    "noise": {"kind", "levels", "apply_to_val", "input_kind", "input_level"},
    "train": {"epochs", "batch_size", "lr_theta", "wd_theta", "hidden", "activation", "lilaw_init",
              "lilaw_lrs", "lilaw_wds", "lilaw_mask", "warmup_epochs", "base_loss", "focal_gamma",
              "early_stop_patience", "top_k"},
}


def parse_config(text: str, base_dir: Path | None = None) -> tuple[ExperimentConfig, list[Diagnostic]]:
    """Parse and validate; returns the config (best effort) and every diagnostic found."""
    lines = _line_index(text)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", 0) or 0
        return ExperimentConfig(), [Diagnostic(line, "syntax", str(exc).splitlines()[0])]

    r = _Reader(parser, lines)
    for section in parser.sections():
        if section not in KNOWN:
            r.err(section, None, "unknown section")
            continue
        for key in parser.options(section):
            if key not in KNOWN[section]:
                r.err(section, key, "unknown key")

    cfg = ExperimentConfig()
    d = cfg.dataset
    for name, conv in (("source", _str), ("classes", _int), ("n_per_class", _int), ("features", _int),
                       ("separation", _float), ("seed", _int), ("test_fraction", _float), ("images", _str),
                       ("labels", _str), ("test_images", _str), ("test_labels", _str), ("path", _str),
                       ("test_path", _str), ("label_column", _int), ("delimiter", _str),
                       ("has_header", _bool)):
        setattr(d, name, r.get("dataset", name, conv, getattr(d, name)))
    d.delimiter = {"tab": "\t", "\\t": "\t", "space": " "}.get(d.delimiter.lower(), d.delimiter)

    if d.source not in ("blobs", "idx", "delim"):
        r.err("dataset", "source", f"must be blobs, idx or delim, got {d.source!r}")
    if d.source == "blobs":
        if d.classes < 2:
            r.err("dataset", "classes", "need at least 2 classes")
        if d.features < 1:
            r.err("dataset", "features", "need at least 1 feature")
        if d.n_per_class < 2:
            r.err("dataset", "n_per_class", "need at least 2 samples per class")
    if d.source == "idx":
        for key in ("images", "labels"):
            if not getattr(d, key):
                r.err("dataset", key, "required for source = idx")
    if d.source == "delim" and not d.path:
        r.err("dataset", "path", "required for source = delim")
    if len(d.delimiter) != 1:
        r.err("dataset", "delimiter", "must be a single character")
    for key in ("images", "labels", "test_images", "test_labels", "path", "test_path"):
        value = getattr(d, key)
        if value:
            p = Path(value)
            if not p.is_absolute() and base_dir is not None:
                p = base_dir / p
            setattr(d, key, str(p))
            if not p.exists():
                r.err("dataset", key, f"file not found: {p}")
    has_test_file = bool(d.test_path or d.test_images)
    if not has_test_file and not 0.0 < d.test_fraction < 1.0:
        r.err("dataset", "test_fraction", "must be in (0, 1) when no test file is given")

    cfg.val_fraction = r.get("split", "val_fraction", _float, cfg.val_fraction)
    if not 0.0 < cfg.val_fraction < 1.0:
        r.err("split", "val_fraction", f"must be in (0, 1), got {cfg.val_fraction}")

    nz = cfg.noise
    nz.kind = r.get("noise", "kind", _str, nz.kind)
    nz.levels = r.get("noise", "levels", _list(_float), nz.levels)
    nz.apply_to_val = r.get("noise", "apply_to_val", _bool, nz.apply_to_val)
    nz.input_kind = r.get("noise", "input_kind", _str, nz.input_kind)
    nz.input_level = r.get("noise", "input_level", _float, nz.input_level)
    if nz.kind not in LABEL_KINDS:
        r.err("noise", "kind", f"must be one of {', '.join(LABEL_KINDS)}")
    if not nz.levels:
        r.err("noise", "levels", "need at least one level")
    if any(not 0.0 <= lv <= 1.0 for lv in nz.levels):
        r.err("noise", "levels", "levels must be in [0, 1]")
    if nz.input_kind != "none" and nz.input_kind not in INPUT_KINDS:
        r.err("noise", "input_kind", f"must be none or one of {', '.join(INPUT_KINDS)}")
    if nz.input_kind in ("input_zoom", "input_crop") and d.source != "idx":
        r.err("noise", "input_kind", "zoom/crop noise needs image data (source = idx)")
    if not 0.0 <= nz.input_level <= 1.0:
        r.err("noise", "input_level", "must be in [0, 1]")

    tdef = TrainConfig()
    tk = {}
    for name, conv in (("epochs", _int), ("batch_size", _int), ("lr_theta", _float), ("wd_theta", _float),
                       ("hidden", _list(_int)), ("activation", _str), ("lilaw_init", _list(_float)),
                       ("lilaw_lrs", _list(_float)), ("lilaw_wds", _list(_float)), ("lilaw_mask", _list(_bool)),
                       ("warmup_epochs", _int), ("base_loss", _str), ("focal_gamma", _float),
                       ("early_stop_patience", _int), ("top_k", _int)):
        tk[name] = r.get("train", name, conv, getattr(tdef, name))
    if tk["epochs"] < 1:
        r.err("train", "epochs", "must be >= 1")
    if tk["batch_size"] < 1:
        r.err("train", "batch_size", "must be >= 1")
    if not 0 <= tk["warmup_epochs"] < max(tk["epochs"], 1):
        r.err("train", "warmup_epochs", "must be >= 0 and < epochs")
    if tk["lr_theta"] <= 0:
        r.err("train", "lr_theta", "must be positive")
    if tk["wd_theta"] < 0:
        r.err("train", "wd_theta", "must be nonnegative")
    if tk["activation"] not in ("relu", "tanh"):
        r.err("train", "activation", "must be relu or tanh")
    if tk["base_loss"] not in ("cross_entropy", "focal"):
        r.err("train", "base_loss", "must be cross_entropy or focal")
    if tk["focal_gamma"] < 0:
        r.err("train", "focal_gamma", "must be nonnegative")
    if any(h < 1 for h in tk["hidden"]):
        r.err("train", "hidden", "hidden widths must be >= 1")
    for key in ("lilaw_init", "lilaw_lrs", "lilaw_wds", "lilaw_mask"):
        if len(tk[key]) != 3:
            r.err("train", key, "needs exactly three values (alpha, beta, delta)")
    if len(tk["lilaw_lrs"]) == 3 and any(v <= 0 for v in tk["lilaw_lrs"]):
        r.err("train", "lilaw_lrs", "learning rates must be positive")
    if len(tk["lilaw_wds"]) == 3 and any(v < 0 for v in tk["lilaw_wds"]):
        r.err("train", "lilaw_wds", "weight decays must be nonnegative")
    if len(tk["lilaw_mask"]) == 3 and not any(tk["lilaw_mask"]):
        r.err("train", "lilaw_mask", "at least one weight term must stay enabled (W is a sum of >= 1 terms)")
    if tk["early_stop_patience"] < 0:
        r.err("train", "early_stop_patience", "must be >= 0 (0 disables)")
    if tk["top_k"] < 1:
        r.err("train", "top_k", "must be >= 1")

    cfg.seeds = r.get("experiment", "seeds", _list(_int), cfg.seeds)
    if not cfg.seeds:
        r.err("experiment", "seeds", "need at least one seed")
    if len(set(cfg.seeds)) != len(cfg.seeds):
        r.err("experiment", "seeds", "seeds must be distinct")
    raw_conditions = r.get("experiment", "conditions", _list(_str), None)
    if raw_conditions is not None:
        conds = []
        for text in raw_conditions:
            try:
                conds.append(parse_condition(text))
            except ValueError as exc:
                r.err("experiment", "conditions", str(exc))
        if not conds and not any(dg.field == "experiment.conditions" for dg in r.diags):
            r.err("experiment", "conditions", "need at least one condition")
        cfg.conditions = tuple(conds) or cfg.conditions
    elif len(tk["lilaw_mask"]) == 3 and tuple(tk["lilaw_mask"]) != (True, True, True):
        cfg.conditions = (Condition("baseline", False), Condition("lilaw", True, tuple(tk["lilaw_mask"])))
    if len({c.name for c in cfg.conditions}) != len(cfg.conditions):
        r.err("experiment", "conditions", "duplicate condition")
    cfg.snapshot_epochs = r.get("experiment", "snapshot_epochs", _list(_int), cfg.snapshot_epochs)
    if any(e < 1 for e in cfg.snapshot_epochs):
        r.err("experiment", "snapshot_epochs", "epochs are 1-based")
    cfg.calibrate = r.get("experiment", "calibrate", _bool, cfg.calibrate)
    cfg.output_dir = r.get("experiment", "output_dir", _str, cfg.output_dir)
    if os.environ.get(OUTPUT_DIR_ENV):
        cfg.output_dir = os.environ[OUTPUT_DIR_ENV]
    out = Path(cfg.output_dir)
    probe = out if out.exists() else next((p for p in out.parents if p.exists()), None)
    if probe is None or not os.access(probe, os.W_OK) or (out.exists() and not out.is_dir()):
        r.err("experiment", "output_dir", f"not a writable directory: {out}")

    if not r.diags:
        tk["hidden"] = tuple(tk["hidden"])
        for key in ("lilaw_init", "lilaw_lrs", "lilaw_wds", "lilaw_mask"):
            tk[key] = tuple(tk[key])
        cfg.train = TrainConfig(**tk, snapshot_epochs=tuple(cfg.snapshot_epochs))
    return cfg, r.diags


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    cfg, diags = parse_config(path.read_text(), base_dir=path.parent)
    if diags:
        raise ConfigError(diags)
    return cfg


def validate(path) -> list[Diagnostic]:
    """Every violation in the config file, without running anything."""
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)[1]
