"""Experiment configs, the federation -> clustering -> attack pipeline, and reports.

Config files are flat ``key = value`` text with ``#`` comments (see the
README for the grammar); JSON objects, flat or nested, are accepted too.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attack import (MAX_ENUMERATED_CLASSES, AdversaryView, AttackReport, binary_lea_attack,
                     count_binary_models, lea_attack, true_sequence)
from .clustering import cluster_accuracy, kmeans, optional_pca
from .data import (CREDIT_HELP, Dataset, VerticalPartition, load_breast_cancer, load_credit,
                   load_idx_subset, load_mnist_subset, make_blobs, standardize, train_test_split,
                   vertical_split)
from .defense import DEFENSE_KINDS, DefenseConfig, evaluate_mapped_attack
from .errors import ConfigError, DataError, GuardError
from .numerics import RngStream
from .vfl import FederationConfig, train_federation

DATASETS = ("breast_cancer", "credit", "mnist", "blobs")
ATTACKS = ("lea", "binary_lea", "none")
DEFAULT_LR = {"lr": 0.1, "mlp": 0.5}
TIMING_LEA_LIMIT = 5
PRESET_DIR = Path(__file__).resolve().parent / "configs"

# stream ids under the per-repetition seed
S_BLOBS, S_SPLIT, S_KMEANS, S_TOP, S_RESOLVE = 1, 10, 20, 30, 40


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    dataset: str = "breast_cancer"
    dataset_path: str | None = None
    digits: tuple = (0, 1, 2)
    per_class: int | None = None
    standardize: bool = True
    blob_classes: int = 3
    blob_per_class: tuple = (200,)
    blob_features: int = 6
    blob_separation: float = 10.0
    partition: tuple = (28, 2)
    scenario: str = "agg"
    model: str = "lr"
    hidden: tuple = (128, 64)
    epochs: int = 200
    lr: float | None = None
    batch_size: int = 0
    test_fraction: float = 0.2
    attack: str = "lea"
    attack_epochs: int | None = None
    pca_dims: int = 0
    kmeans_restarts: int = 10
    defense: str = "none"
    laplace_scale: float = 0.0
    laplace_relative: float | None = None
    keep_ratio: float = 1.0
    sigma: float = 0.0
    mapping_seed: int | None = None
    aux_per_class: int = 5
    seed: int = 0
    repetitions: int = 1
    workers: int = 1
    notes: str = ""

    @property
    def learning_rate(self) -> float:
        return DEFAULT_LR.get(self.model, 0.1) if self.lr is None else self.lr

    @property
    def n_classes(self) -> int:
        if self.dataset == "mnist":
            return len(set(self.digits))
        if self.dataset == "blobs":
            return self.blob_classes
        return 2

    @property
    def n_features(self) -> int:
        return {"breast_cancer": 30, "credit": 10, "mnist": 784}.get(self.dataset, self.blob_features)

    def partition_label(self) -> str:
        return "-".join(str(c) for c in self.partition)

    def problems(self) -> list:
        p = []
        if self.dataset not in DATASETS:
            p.append(f"dataset.name must be one of {DATASETS}, got {self.dataset!r}")
        if self.scenario not in ("agg", "split"):
            p.append(f"scenario must be agg or split, got {self.scenario!r}")
        if self.model not in ("lr", "mlp"):
            p.append(f"model must be lr or mlp, got {self.model!r}")
        if self.attack not in ATTACKS:
            p.append(f"attack.kind must be one of {ATTACKS}, got {self.attack!r}")
        if self.defense not in DEFENSE_KINDS:
            p.append(f"defense.kind must be one of {DEFENSE_KINDS}, got {self.defense!r}")
        if len(self.partition) < 2 or any(c < 1 for c in self.partition):
            p.append(f"partition needs at least two positive counts, got {self.partition_label()}")
        elif self.dataset in DATASETS and sum(self.partition) != self.n_features:
            p.append(f"partition {self.partition_label()} covers {sum(self.partition)} features, "
                     f"{self.dataset} has {self.n_features}")
        if self.dataset == "mnist" and (len(set(self.digits)) < 2
                                        or any(not 0 <= d <= 9 for d in self.digits)):
            p.append(f"dataset.digits must list at least two digits in 0..9, got {self.digits}")
        if self.dataset == "blobs":
            if self.blob_classes < 2:
                p.append("dataset.classes must be >= 2")
            if len(self.blob_per_class) not in (1, self.blob_classes):
                p.append("dataset.class_sizes must be one count or one per class")
        n = self.n_classes
        if self.attack == "lea" and n > MAX_ENUMERATED_CLASSES:
            p.append(f"attack.kind=lea enumerates {n}! sequences; use binary_lea for n > "
                     f"{MAX_ENUMERATED_CLASSES}")
        if self.attack == "binary_lea" and n < 3:
            p.append("attack.kind=binary_lea needs at least three classes")
        if self.defense == "label_map" and self.attack == "none":
            p.append("defense.kind=label_map is evaluated through an attack; set attack.kind")
        for key, val, lo in (("train.epochs", self.epochs, 1), ("repetitions", self.repetitions, 1),
                             ("attack.kmeans_restarts", self.kmeans_restarts, 1),
                             ("workers", self.workers, 1), ("train.batch_size", self.batch_size, 0),
                             ("attack.pca_dims", self.pca_dims, 0),
                             ("defense.aux_per_class", self.aux_per_class, 1)):
            if val < lo:
                p.append(f"{key} must be >= {lo}, got {val}")
        if self.attack_epochs is not None and self.attack_epochs < 1:
            p.append("attack.epochs must be >= 1")
        if self.lr is not None and self.lr <= 0:
            p.append("train.lr must be positive")
        if not 0.0 < self.test_fraction < 1.0:
            p.append("train.test_fraction must be in (0, 1)")
        if self.laplace_relative is not None and self.laplace_relative < 0:
            p.append("defense.laplace_relative must be >= 0")
        if self.pca_dims and self.partition and self.pca_dims > self.partition[0]:
            p.append(f"attack.pca_dims={self.pca_dims} exceeds the adversary's "
                     f"{self.partition[0]} features")
        try:
            self.defense_config(self.seed)
        except ConfigError as exc:
            p.extend(q for q in exc.problems if q not in p)
        return p

    def validate(self) -> "ExperimentConfig":
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def defense_config(self, seed: int, laplace_scale: float | None = None) -> DefenseConfig:
        return DefenseConfig(self.defense,
                             self.laplace_scale if laplace_scale is None else laplace_scale,
                             self.keep_ratio, None, self.sigma,
                             seed if self.mapping_seed is None else self.mapping_seed)

    def to_dict(self) -> dict:
        return {key: _plain(getattr(self, attr)) for key, attr in KEYS.items()}

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("workers")  # never changes results
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# dotted file key -> field name
KEYS = {
    "name": "name",
    "dataset.name": "dataset",
    "dataset.path": "dataset_path",
    "dataset.digits": "digits",
    "dataset.per_class": "per_class",
    "dataset.standardize": "standardize",
    "dataset.classes": "blob_classes",
    "dataset.class_sizes": "blob_per_class",
    "dataset.features": "blob_features",
    "dataset.separation": "blob_separation",
    "partition": "partition",
    "scenario": "scenario",
    "model": "model",
    "model.hidden": "hidden",
    "train.epochs": "epochs",
    "train.lr": "lr",
    "train.batch_size": "batch_size",
    "train.test_fraction": "test_fraction",
    "attack.kind": "attack",
    "attack.epochs": "attack_epochs",
    "attack.pca_dims": "pca_dims",
    "attack.kmeans_restarts": "kmeans_restarts",
    "defense.kind": "defense",
    "defense.laplace_scale": "laplace_scale",
    "defense.laplace_relative": "laplace_relative",
    "defense.keep_ratio": "keep_ratio",
    "defense.sigma": "sigma",
    "defense.mapping_seed": "mapping_seed",
    "defense.aux_per_class": "aux_per_class",
    "seed": "seed",
    "repetitions": "repetitions",
    "workers": "workers",
    "notes": "notes",
}
_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _plain(v):
    return list(v) if isinstance(v, tuple) else v


def _coerce(key: str, raw, typ: str):
    optional = "None" in typ
    if optional and (raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none", "null"))):
        return None
    base = typ.replace(" | None", "")
    if base == "tuple":
        if isinstance(raw, (list, tuple)):
            items = list(raw)
        else:
            items = [s for s in str(raw).replace("-", ",").replace(" ", ",").split(",") if s]
        try:
            return tuple(int(v) for v in items)
        except (TypeError, ValueError):
            raise ValueError(f"{key}: expected a list of integers, got {raw!r}") from None
    if base == "bool":
        if isinstance(raw, bool):
            return raw
        s = str(raw).strip().lower()
        if s in ("true", "yes", "1", "on"):
            return True
        if s in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"{key}: expected true/false, got {raw!r}")
    if base == "int":
        try:
            f = float(raw)
        except (TypeError, ValueError):
            raise ValueError(f"{key}: expected an integer, got {raw!r}") from None
        if not f.is_integer():
            raise ValueError(f"{key}: expected an integer, got {raw!r}")
        return int(f)
    if base == "float":
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ValueError(f"{key}: expected a number, got {raw!r}") from None
    return str(raw)


def _flatten(obj, prefix=""):
    out = {}
    for k, v in obj.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def parse_config_text(text: str) -> dict:
    """Raw ``{dotted key: value}`` from flat text or JSON."""
    if text.lstrip().startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"invalid JSON: {exc}"]) from None
        return _flatten(obj)
    raw, problems = {}, []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            problems.append(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    if problems:
        raise ConfigError(problems)
    return raw


def config_from_mapping(raw: dict, **overrides) -> ExperimentConfig:
    """Build and validate a config; every problem is reported at once.

    Overrides may use field names (``repetitions=1``) or dotted keys
    (``**{"train.epochs": 5}``); string values are coerced like file values.
    """
    kwargs, problems = {}, []
    for key, value in raw.items():
        attr = KEYS.get(key)
        if attr is None:
            problems.append(f"unknown key {key!r}")
            continue
        try:
            kwargs[attr] = _coerce(key, value, _FIELD_TYPES[attr])
        except ValueError as exc:
            problems.append(str(exc))
    for key, value in overrides.items():
        attr = KEYS.get(key, key)
        if value is None:
            continue
        if attr not in _FIELD_TYPES:
            problems.append(f"unknown key {key!r}")
            continue
        try:
            kwargs[attr] = _coerce(key, value, _FIELD_TYPES[attr]) if isinstance(value, str) else value
        except ValueError as exc:
            problems.append(str(exc))
    cfg = ExperimentConfig(**kwargs)
    problems += [q for q in cfg.problems() if q not in problems]
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a config file, or a bundled preset by name."""
    p = Path(path)
    if not p.is_file():
        preset = PRESET_DIR / f"{path}.cfg"
        if not preset.is_file():
            raise ConfigError([f"no config file or preset named {str(path)!r}"])
        p = preset
    raw = parse_config_text(p.read_text())
    rel = raw.get("dataset.path")
    if isinstance(rel, str) and rel and not Path(rel).is_absolute() and (p.parent / rel).exists():
        raw["dataset.path"] = str(p.parent / rel)
    return config_from_mapping(raw, **overrides)


def list_presets() -> list:
    return sorted(p.stem for p in PRESET_DIR.glob("*.cfg"))


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for key, value in cfg.to_dict().items():
        if value is None:
            continue
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = str(value).lower()
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------ pipeline

def load_dataset(cfg: ExperimentConfig, seed: int) -> Dataset:
    if cfg.dataset == "breast_cancer":
        return load_breast_cancer()
    if cfg.dataset == "credit":
        if not cfg.dataset_path:
            raise DataError(f"dataset.path is required for credit. {CREDIT_HELP}")
        return load_credit(cfg.dataset_path)
    if cfg.dataset == "mnist":
        if cfg.dataset_path:
            root = Path(cfg.dataset_path)
            images = _first_existing(root, "train-images-idx3-ubyte")
            labels = _first_existing(root, "train-labels-idx1-ubyte")
            return load_idx_subset(images, labels, cfg.digits, cfg.per_class)
        return load_mnist_subset(cfg.digits, cfg.per_class)
    per = cfg.blob_per_class[0] if len(cfg.blob_per_class) == 1 else cfg.blob_per_class
    return make_blobs(cfg.blob_classes, per, cfg.blob_features, cfg.blob_separation,
                      RngStream(seed, (S_BLOBS,)))


def _first_existing(root: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (root / name).is_file():
            return root / name
    raise DataError(f"{stem}[.gz] not found in {root}; download the MNIST training IDX files "
                    "or drop dataset.path to use the bundled 500-per-digit subset")


@dataclass
class Prepared:
    train_parties: list
    test_parties: list
    train_labels: np.ndarray
    test_labels: np.ndarray


def prepare(cfg: ExperimentConfig, seed: int) -> Prepared:
    ds = load_dataset(cfg, seed)
    if ds.n_classes != cfg.n_classes:
        raise DataError(f"{cfg.dataset} has {ds.n_classes} classes, config expects {cfg.n_classes}")
    tr, te = train_test_split(ds, cfg.test_fraction, RngStream(seed, (S_SPLIT,)))
    if cfg.standardize:
        tr, params = standardize(tr)
        te = params.apply(te)
    part = VerticalPartition(cfg.partition)
    return Prepared(vertical_split(tr, part), vertical_split(te, part), tr.labels, te.labels)


def federation_config(cfg: ExperimentConfig, prep: Prepared, seed: int,
                      defense: DefenseConfig | None = None, epochs: int | None = None) -> FederationConfig:
    return FederationConfig(cfg.scenario, prep.train_parties, cfg.n_classes, cfg.model,
                            hidden=cfg.hidden, epochs=cfg.epochs if epochs is None else epochs,
                            lr=cfg.learning_rate, batch_size=cfg.batch_size,
                            defense=defense or DefenseConfig(), seed=seed)


def median_returned_gradient(cfg: ExperimentConfig, prep: Prepared, seed: int) -> float:
    """Median |entry| of the first-epoch gradients an undefended adversary receives."""
    fed = federation_config(cfg, prep, seed, epochs=1)
    res = train_federation(fed)
    return float(np.median(np.abs(res.traces[0].returned_grads[fed.adversary_index])))


def cluster_adversary(cfg: ExperimentConfig, x, seed: int):
    feats = optional_pca(x, cfg.pca_dims).scores if cfg.pca_dims else x
    return kmeans(feats, cfg.n_classes, RngStream(seed, (S_KMEANS,)),
                  n_restarts=cfg.kmeans_restarts, workers=cfg.workers)


def run_repetition(cfg: ExperimentConfig, seed: int, prep: Prepared | None = None) -> AttackReport:
    prep = prepare(cfg, seed) if prep is None else prep
    details = {"seed": seed}
    scale = None
    if cfg.defense == "laplace" and cfg.laplace_relative is not None:
        ref = median_returned_gradient(cfg, prep, seed)
        scale = cfg.laplace_relative * ref
        details["laplace_scale"] = scale
        details["median_abs_grad"] = ref
    fed = federation_config(cfg, prep, seed, cfg.defense_config(seed, scale))
    result = train_federation(fed, prep.test_parties, prep.test_labels)
    common = dict(dataset=cfg.dataset, partition=cfg.partition_label(), model_kind=cfg.model)
    if cfg.attack == "none":
        return AttackReport(cfg.scenario, result.naa, None, None, [], [], 0.0, 0,
                            details=details, **common)
    adv = fed.adversary_index
    clusters = cluster_adversary(cfg, prep.train_parties[adv].features, seed)
    ca = cluster_accuracy(clusters, prep.train_labels)
    # evaluation only: the cluster-to-label sequence the attack should find
    details["true_sequence"] = list(true_sequence(clusters, prep.train_labels))
    view = AdversaryView.from_federation(result, epochs=cfg.attack_epochs)
    attack = lea_attack if cfg.attack == "lea" else binary_lea_attack
    x_val = prep.test_parties[adv].features
    report, model = attack(view, clusters, x_val, prep.test_labels, naa=result.naa, ca=ca,
                           top_rng=RngStream(seed, (S_TOP,)), workers=cfg.workers)
    if cfg.defense == "label_map":
        details["mapping"] = [int(v) for v in result.mapping]
        report = evaluate_mapped_attack(report, model, clusters, prep.train_labels, x_val,
                                        prep.test_labels, cfg.sigma, RngStream(seed, (S_RESOLVE,)),
                                        cfg.aux_per_class)
    report.details.update(details)
    return dataclasses.replace(report, **common)


def _stats(values) -> dict:
    vals = [v for v in values if v is not None]
    if not vals:
        return {"mean": None, "std": None}
    a = np.asarray(vals, dtype=np.float64)
    return {"mean": float(a.mean()), "std": float(a.std())}


@dataclass
class RunResult:
    config: ExperimentConfig
    reports: list
    seconds: float = 0.0
    config_hash: str = ""

    def __post_init__(self):
        if not self.reports:
            raise ValueError("a run needs at least one repetition")
        if not self.config_hash:
            self.config_hash = self.config.config_hash()

    @property
    def aggregates(self) -> dict:
        return {k: _stats(getattr(r, k) for r in self.reports) for k in ("naa", "ca", "asr")}

    @property
    def n_simulated(self) -> int:
        return self.reports[0].n_simulated

    def to_dict(self, timing: bool = True) -> dict:
        reps = []
        for r in self.reports:
            d = r.to_dict()
            if not timing:
                d.pop("seconds")
            reps.append(d)
        out = {"name": self.config.name, "config": self.config.to_dict(),
               "config_hash": self.config_hash, "repetitions": reps,
               "aggregates": self.aggregates}
        if timing:
            out["seconds"] = self.seconds
        return out

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), sort_keys=True, indent=1)


def run_experiment(cfg: ExperimentConfig, progress=None) -> RunResult:
    """Repetition ``r`` runs the whole pipeline with seed ``cfg.seed + r``."""
    cfg.validate()
    t0 = time.perf_counter()
    reports = []
    for r in range(cfg.repetitions):
        rep = run_repetition(cfg, cfg.seed + r)
        reports.append(rep)
        if progress is not None:
            progress(r, rep)
    return RunResult(cfg, reports, time.perf_counter() - t0)


# -------------------------------------------------------------- timing

@dataclass
class TimingRow:
    scheme: str
    seconds: float
    asr: float
    n_simulated: int


def run_timing_comparison(cfg: ExperimentConfig) -> dict:
    """Wall-clock of LEA and Binary-LEA on the same benign run and clusters.

    Both arms see identical inputs; each repetition times both (in
    alternating order) and the reported seconds are medians over repetitions.
    """
    cfg.validate()
    n = cfg.n_classes
    if n > TIMING_LEA_LIMIT:
        raise GuardError(f"the LEA arm needs {n}! = {math.factorial(n)} simulated models; timing "
                         f"comparisons are limited to n <= {TIMING_LEA_LIMIT}. Run Binary-LEA "
                         "alone with 'run' and attack.kind = binary_lea")
    if n < 3:
        raise GuardError("Binary-LEA needs at least three classes")
    per_arm = {"lea": [], "binary_lea": []}
    for r in range(cfg.repetitions):
        seed = cfg.seed + r
        prep = prepare(cfg, seed)
        fed = federation_config(cfg, prep, seed, cfg.defense_config(seed))
        result = train_federation(fed, prep.test_parties, prep.test_labels)
        adv = fed.adversary_index
        clusters = cluster_adversary(cfg, prep.train_parties[adv].features, seed)
        view = AdversaryView.from_federation(result, epochs=cfg.attack_epochs)
        x_val = prep.test_parties[adv].features
        arms = (("lea", lea_attack), ("binary_lea", binary_lea_attack))
        # alternate which arm runs first so warm-up costs do not favour one side
        for name, fn in (arms if r % 2 == 0 else arms[::-1]):
            rep, _ = fn(view, clusters, x_val, prep.test_labels,
                        top_rng=RngStream(seed, (S_TOP,)), workers=cfg.workers)
            per_arm[name].append(rep)
    rows = [TimingRow(name, float(np.median([r.seconds for r in reps])),
                      float(np.mean([r.asr for r in reps])), reps[0].n_simulated)
            for name, reps in per_arm.items()]
    return {"name": cfg.name, "classes": n, "config_hash": cfg.config_hash(),
            "rows": [dataclasses.asdict(r) for r in rows],
            "ratio": rows[1].seconds / rows[0].seconds if rows[0].seconds > 0 else float("nan"),
            "expected_models": {"lea": math.factorial(n), "binary_lea": count_binary_models(n)}}


# ------------------------------------------------------------- reports

SCENE = {"agg": "AggVFL", "split": "SplitVFL"}
DATASET_TITLE = {"breast_cancer": "Breast Cancer", "credit": "Give-me-some-credit",
                 "mnist": "MNIST", "blobs": "Blobs"}
MD_COLUMNS = ("Dataset", "Scene", "Classes", "Simulated Models", "Distribution", "Model",
              "NAA", "CA", "ASR")
CSV_COLUMNS = ("name", "config_hash", "dataset", "scenario", "classes", "n_simulated",
               "partition", "model", "attack", "defense", "seed", "naa", "ca", "asr", "seconds")


def _fmt(v, digits=3):
    return "-" if v is None else f"{v:.{digits}f}"


def _dataset_title(cfg: ExperimentConfig) -> str:
    if cfg.dataset == "mnist":
        return f"MNIST-{cfg.n_classes}"
    return DATASET_TITLE.get(cfg.dataset, cfg.dataset)


def markdown_table(results) -> str:
    lines = ["| " + " | ".join(MD_COLUMNS) + " |", "|" + "---|" * len(MD_COLUMNS)]
    for res in results:
        c, agg = res.config, res.aggregates
        row = (_dataset_title(c), SCENE[c.scenario], str(c.n_classes), str(res.n_simulated),
               c.partition_label(), c.model.upper(), _fmt(agg["naa"]["mean"]),
               _fmt(agg["ca"]["mean"]), _fmt(agg["asr"]["mean"]))
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def csv_text(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for res in results:
        c = res.config
        for rep in res.reports:
            w.writerow([c.name, res.config_hash, c.dataset, c.scenario, c.n_classes,
                        rep.n_simulated, c.partition_label(), c.model, c.attack, c.defense,
                        rep.details.get("seed", ""), _fmt(rep.naa, 6), _fmt(rep.ca, 6),
                        _fmt(rep.asr, 6), f"{rep.seconds:.4f}"])
    return buf.getvalue()


def json_text(results, timing: bool = True) -> str:
    doc = {"format": "lea-vfl-results", "version": 1,
           "runs": [r.to_dict(timing) for r in results]}
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def emit_report(results, fmt: str, path) -> Path:
    """Write ``results`` (a RunResult or a list of them) as json, csv or md."""
    if isinstance(results, RunResult):
        results = [results]
    render = {"json": json_text, "csv": csv_text, "md": markdown_table}.get(fmt)
    if render is None:
        raise ValueError(f"unknown report format {fmt!r}; use json, csv or md")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(render(results))
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path
