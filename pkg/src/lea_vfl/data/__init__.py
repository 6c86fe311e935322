"""Dataset ingestion, conditioning and vertical partitioning.

Bundled files (next to this module):

* ``breast_cancer.csv``: 569 rows, 30 feature columns then a ``diagnosis``
  column with values ``M``/``B``.
* ``mnist5k-{images-idx3,labels-idx1}-ubyte.gz``: a 5000-image MNIST subset,
  500 images per digit, in standard IDX format.

The credit-scoring data is not redistributable and must be supplied by the
user (``cs-training.csv`` from the "Give Me Some Credit" competition).
"""
from __future__ import annotations

import csv
import gzip
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import DataError
from ..numerics import RngStream

DATA_DIR = Path(__file__).resolve().parent
BREAST_CANCER_CSV = DATA_DIR / "breast_cancer.csv"
MNIST_IMAGES = DATA_DIR / "mnist5k-images-idx3-ubyte.gz"
MNIST_LABELS = DATA_DIR / "mnist5k-labels-idx1-ubyte.gz"

CREDIT_HELP = (
    "The credit dataset is not bundled. Download cs-training.csv from the Kaggle "
    "'Give Me Some Credit' competition and pass its path as dataset.path."
)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

ROLES = ("active", "passive", "adversary")


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    feature_names: tuple = ()
    label_names: tuple = ()

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {x.shape}")
        if y.ndim != 1 or len(y) != x.shape[0]:
            raise DataError(f"{len(y)} labels for {x.shape[0]} feature rows")
        if self.n_classes < 2:
            raise DataError("a dataset needs at least two classes")
        if len(y) and (y.min() < 0 or y.max() >= self.n_classes):
            raise DataError(f"labels must lie in [0, {self.n_classes})")
        if not np.all(np.isfinite(x)):
            raise DataError("features contain non-finite values")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def m_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.n_classes,
                       self.feature_names, self.label_names)


@dataclass(frozen=True)
class VerticalPartition:
    """Feature counts per party, in column order.

    By convention the adversary holds the first slice and the active party
    (the label owner) holds the last one.
    """

    party_feature_counts: tuple
    adversary_index: int = 0
    active_index: int = -1

    def __post_init__(self):
        counts = tuple(int(c) for c in self.party_feature_counts)
        object.__setattr__(self, "party_feature_counts", counts)
        k = len(counts)
        if k == 0 or any(c < 1 for c in counts):
            raise DataError(f"every party needs at least one feature: {counts}")
        active = self.active_index % k
        adversary = self.adversary_index % k
        object.__setattr__(self, "active_index", active)
        object.__setattr__(self, "adversary_index", adversary)
        if k > 1 and active == adversary:
            raise DataError("the adversary cannot be the active party")

    @property
    def n_parties(self) -> int:
        return len(self.party_feature_counts)

    def label(self) -> str:
        return "-".join(str(c) for c in self.party_feature_counts)


@dataclass(frozen=True)
class PartyView:
    party_id: int
    features: np.ndarray
    role: str
    labels: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.role not in ROLES:
            raise DataError(f"unknown role {self.role!r}")
        if (self.labels is not None) != (self.role == "active"):
            raise DataError("exactly the active party owns the label vector")

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


# ---------------------------------------------------------------- loaders

def _parse_float(cell: str, row: int, col: int) -> float:
    cell = cell.strip()
    if cell == "" or cell.upper() == "NA":
        return math.nan
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"non-numeric feature cell {cell!r} at row {row}, column {col}") from None


def load_csv(path, label_column=-1, has_header: bool = True, n_classes: int | None = None,
             impute: str | None = None, drop_columns: Sequence = ()) -> Dataset:
    """Read a comma-delimited file into a :class:`Dataset`.

    ``label_column`` is a column index or (with a header) a column name.
    Features are every other column, in file order, minus ``drop_columns``.
    Integer labels are used as-is; string labels (at most two distinct
    values) are numbered by first occurrence. Empty cells are missing; with
    ``impute="median"`` they are replaced by the column median, otherwise
    they are an error.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if has_header:
        header, rows = rows[0], rows[1:]
    else:
        header = [f"x{i}" for i in range(len(rows[0]))] if rows else []
    if not rows:
        raise DataError(f"{path} has no data rows")
    width = len(header)
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataError(f"ragged row {i + has_header}: {len(r)} cells, expected {width}")

    def resolve(col):
        if isinstance(col, str) and not col.lstrip("-").isdigit():
            if col not in header:
                raise DataError(f"column {col!r} not found in header")
            return header.index(col)
        idx = int(col)
        if not -width <= idx < width:
            raise DataError(f"column index {idx} out of range for {width} columns")
        return idx % width

    ycol = resolve(label_column)
    dropped = {resolve(c) for c in drop_columns}
    fcols = [j for j in range(width) if j != ycol and j not in dropped]

    x = np.array([[_parse_float(r[j], i, j) for j in fcols] for i, r in enumerate(rows)],
                 dtype=np.float64)
    missing = np.isnan(x)
    if missing.any():
        if impute != "median":
            i, j = np.argwhere(missing)[0]
            raise DataError(f"missing value at row {i}, column {fcols[j]}")
        med = np.nanmedian(x, axis=0)
        x = np.where(missing, med[None, :], x)

    raw = [r[ycol].strip() for r in rows]
    try:
        y = np.array([int(float(v)) for v in raw], dtype=np.int64)
        label_names = tuple(str(v) for v in range(int(y.max()) + 1))
    except ValueError:
        order = list(dict.fromkeys(raw))
        if len(order) > 2:
            raise DataError(f"string labels must be binary, found {len(order)} classes") from None
        y = np.array([order.index(v) for v in raw], dtype=np.int64)
        label_names = tuple(order)
    seen = int(y.max()) + 1
    if n_classes is not None and seen > n_classes:
        raise DataError(f"found {seen} label values but {n_classes} classes were declared")
    return Dataset(x, y, n_classes or max(seen, 2),
                   tuple(header[j] for j in fcols), label_names)


def load_breast_cancer() -> Dataset:
    return load_csv(BREAST_CANCER_CSV, label_column="diagnosis", n_classes=2)


def load_credit(path) -> Dataset:
    """Load ``cs-training.csv``: 10 features plus ``SeriousDlqin2yrs``.

    The unnamed leading row-id column, when present, is dropped; missing
    cells are median-imputed.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"credit file not found: {path}. {CREDIT_HELP}")
    with path.open(newline="") as fh:
        header = next(csv.reader(fh))
    drop = [0] if header and header[0].strip() in ("", "Unnamed: 0", "Id", "id") else []
    ds = load_csv(path, label_column="SeriousDlqin2yrs", n_classes=2, impute="median",
                  drop_columns=drop)
    if ds.n_features != 10:
        raise DataError(f"credit file should have 10 feature columns, found {ds.n_features}")
    return ds


def _open_maybe_gz(path: Path):
    with path.open("rb") as fh:
        gz = fh.read(2) == b"\x1f\x8b"
    return gzip.open(path, "rb") if gz else path.open("rb")


def read_idx(path, expected_magic: int) -> np.ndarray:
    """Parse an IDX file (optionally gzipped) into a uint8 array."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such IDX file: {path}")
    with _open_maybe_gz(path) as fh:
        head = fh.read(4)
        if len(head) < 4:
            raise DataError(f"{path} is truncated")
        (magic,) = struct.unpack(">I", head)
        if magic != expected_magic:
            raise DataError(f"{path}: bad magic {magic:#010x}, expected {expected_magic:#010x}")
        ndim = magic & 0xFF
        dims = struct.unpack(">" + "I" * ndim, fh.read(4 * ndim))
        payload = fh.read()
    if len(payload) != int(np.prod(dims)):
        raise DataError(f"{path}: payload has {len(payload)} bytes, header promises {np.prod(dims)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx_subset(images_path, labels_path, digits, per_class: int | None = None) -> Dataset:
    """Keep only images whose digit is in ``digits``.

    Digits are relabeled to ``0..len(digits)-1`` in ascending digit order and
    pixels are scaled to [0, 1]. ``per_class`` keeps the first that many
    images of each digit, in file order.
    """
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise DataError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    digits = sorted({int(d) for d in digits})
    keep = np.isin(labels, digits)
    if per_class is not None:
        for d in digits:
            idx = np.flatnonzero(labels == d)
            keep[idx[per_class:]] = False
    if not keep.any():
        raise DataError(f"no images with digits {digits}")
    if len(digits) < 2:
        raise DataError("need at least two digits")
    relabel = {d: i for i, d in enumerate(digits)}
    x = images[keep].reshape(int(keep.sum()), -1).astype(np.float64) / 255.0
    y = np.array([relabel[int(v)] for v in labels[keep]], dtype=np.int64)
    return Dataset(x, y, len(digits), (), tuple(str(d) for d in digits))


def load_mnist_subset(digits, per_class: int | None = None) -> Dataset:
    return load_idx_subset(MNIST_IMAGES, MNIST_LABELS, digits, per_class)


def make_blobs(n_classes: int, per_class, n_features: int, separation: float,
               rng: RngStream, noise: float = 1.0) -> Dataset:
    """Isotropic Gaussian classes with centers on scaled simplex-like axes.

    Class ``c`` is centered at ``separation/2 * e_c`` (cycled over features),
    so neighbouring centers are about ``separation/sqrt(2)`` apart; with
    two classes the centers are ``+-separation/2`` on the first axis.
    ``per_class`` is an int or a per-class sequence.
    """
    counts = [int(per_class)] * n_classes if np.isscalar(per_class) else [int(c) for c in per_class]
    g = rng.generator()
    centers = np.zeros((n_classes, n_features))
    if n_classes == 2:
        centers[0, 0], centers[1, 0] = -separation / 2, separation / 2
    else:
        for c in range(n_classes):
            centers[c, c % n_features] += separation / 2 * (1 + c // n_features)
    xs, ys = [], []
    for c, cnt in enumerate(counts):
        xs.append(centers[c] + noise * g.standard_normal((cnt, n_features)))
        ys.append(np.full(cnt, c))
    return Dataset(np.vstack(xs), np.concatenate(ys), n_classes)


# ----------------------------------------------------------- conditioning

@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, ds: Dataset) -> Dataset:
        x = (ds.features - self.mean) / self.std
        return Dataset(x, ds.labels, ds.n_classes, ds.feature_names, ds.label_names)


def standardize(ds: Dataset) -> tuple[Dataset, Standardizer]:
    """Center every column and scale it to unit (population) std.

    Columns with std below 1e-12 are only centered.
    """
    if ds.m_samples < 2:
        raise DataError("standardize needs at least two samples")
    mean = ds.features.mean(axis=0)
    std = ds.features.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    params = Standardizer(mean, std)
    return params.apply(ds), params


def vertical_split(ds: Dataset, part: VerticalPartition) -> list[PartyView]:
    counts = part.party_feature_counts
    if sum(counts) != ds.n_features:
        raise DataError(f"partition {part.label()} covers {sum(counts)} features, "
                        f"dataset has {ds.n_features}")
    views = []
    start = 0
    for i, c in enumerate(counts):
        block = ds.features[:, start:start + c].copy()
        start += c
        if i == part.active_index:
            views.append(PartyView(i, block, "active", ds.labels.copy()))
        elif i == part.adversary_index:
            views.append(PartyView(i, block, "adversary"))
        else:
            views.append(PartyView(i, block, "passive"))
    return views


def train_test_split(ds: Dataset, test_fraction: float, rng: RngStream) -> tuple[Dataset, Dataset]:
    """Stratified split; each class sends floor(fraction * count) rows to test."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    g = rng.generator()
    train_idx, test_idx = [], []
    for c in range(ds.n_classes):
        idx = np.flatnonzero(ds.labels == c)
        if len(idx) == 0:
            continue
        if len(idx) < 2:
            raise DataError(f"class {c} has fewer than two samples")
        idx = g.permutation(idx)
        n_test = int(math.floor(test_fraction * len(idx) + 1e-9))
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    train = np.sort(np.concatenate(train_idx))
    test = np.sort(np.concatenate(test_idx))
    return ds.subset(train), ds.subset(test)
