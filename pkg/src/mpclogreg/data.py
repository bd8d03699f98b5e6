"""Dataset ingestion, preprocessing and the owner-side sharing step.

A dataset is a plain feature matrix with an intercept column of ones in
column 0 and a binary label vector. Records are partitioned horizontally:
each record owner holds a contiguous block of rows and secret-shares it to
every computation party, which append the received blocks in owner order.

The four real study datasets (pima, lbw, pcs, uis) are not bundled; the
registry below points at files produced by scripts/fetch_datasets.py, which
documents where they come from and how the raw columns are converted. The
seeded synthetic generator covers everything that does not need them.
"""

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import DataError, UsageError
from .sharing import FixedPointConfig, share_fixed, share_real
from .transport import Transport

INTERCEPT_NAME = "intercept"


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (intercept first), labels and column names."""

    X: np.ndarray
    y: np.ndarray
    feature_names: Tuple[str, ...]

    def __post_init__(self):
        if self.X.ndim != 2:
            raise DataError(f"feature matrix must be 2-D, got shape {self.X.shape}")
        if self.y.shape != (self.X.shape[0],):
            raise DataError("labels must be one vector entry per record")
        if len(self.feature_names) != self.X.shape[1]:
            raise DataError("one name per feature column is required")
        if self.X.shape[0] < self.X.shape[1]:
            warnings.warn(
                f"fewer records ({self.X.shape[0]}) than coefficients ({self.X.shape[1]}); "
                "the fit is underdetermined",
                stacklevel=3,
            )

    @property
    def n_records(self) -> int:
        return self.X.shape[0]

    @property
    def n_coeffs(self) -> int:
        return self.X.shape[1]


def make_dataset(X: np.ndarray, y: np.ndarray, feature_names=None) -> Dataset:
    """Validates and wraps already-parsed arrays, prepending the intercept
    column when the first column is not already constant one."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"feature matrix must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DataError("feature matrix contains non-finite values")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise DataError("labels must be 0 or 1")
    if X.shape[0] == 0:
        raise DataError("no records")
    if not (X.shape[1] > 0 and np.all(X[:, 0] == 1.0)):
        X = np.hstack([np.ones((X.shape[0], 1)), X])
        if feature_names is not None:
            feature_names = [INTERCEPT_NAME, *feature_names]
    if feature_names is None:
        feature_names = [INTERCEPT_NAME] + [f"x{j}" for j in range(1, X.shape[1])]
    return Dataset(X=X, y=y, feature_names=tuple(feature_names))


def load_csv(path) -> Dataset:
    """Reads a rectangular numeric CSV with a header row; the final column
    is the binary label, everything before it a feature. An intercept
    column of ones is put in front of the features.

    Malformed input raises DataError naming the offending row and column.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    rows = [row for row in rows if row]
    if len(rows) < 2:
        raise DataError(f"{path} needs a header row and at least one record")
    header = [name.strip() for name in rows[0]]
    if len(header) < 2:
        raise DataError(f"{path} needs at least one feature column and one label column")
    width = len(header)
    values = np.empty((len(rows) - 1, width), dtype=np.float64)
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise DataError(f"{path} row {i}: expected {width} cells, found {len(row)}")
        for j, cell in enumerate(row):
            try:
                values[i - 2, j] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path} row {i}, column {header[j]!r}: non-numeric cell {cell.strip()!r}"
                ) from None
    y = values[:, -1]
    bad = np.nonzero((y != 0.0) & (y != 1.0))[0]
    if bad.size:
        raise DataError(
            f"{path} row {bad[0] + 2}: label must be 0 or 1, found {y[bad[0]]:g}"
        )
    return make_dataset(values[:, :-1], y, feature_names=header[:-1])


class Scaler:
    """Column-wise standardization frozen from one training set.

    Keeps the per-column means and deviations plus which columns survived
    (constant non-intercept columns are dropped), so the same affine map can
    be applied to new data and trained coefficients can be pulled back to
    the raw feature space.
    """

    def __init__(self, keep: np.ndarray, mean: np.ndarray, scale: np.ndarray, width: int):
        self.keep = keep  # column indices into the raw matrix, intercept included
        self.mean = mean  # per kept column; 0 for the intercept
        self.scale = scale  # per kept column; 1 for the intercept
        self.width = width

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.width:
            raise DataError(f"expected {self.width} raw feature columns, got {X.shape}")
        return (X[:, self.keep] - self.mean) / self.scale

    def inverse_beta(self, beta: np.ndarray) -> np.ndarray:
        """Raw-space coefficients: scores X_raw @ out equal X_std @ beta.

        Dropped columns get coefficient 0; the intercept absorbs the mean
        shifts of every standardized column.
        """
        beta = np.asarray(beta, dtype=np.float64)
        if beta.shape != self.keep.shape:
            raise DataError(f"expected {self.keep.size} coefficients, got {beta.shape}")
        out = np.zeros(self.width)
        out[self.keep] = beta / self.scale
        out[0] += -np.sum(beta * self.mean / self.scale)
        return out


def standardize(dataset: Dataset) -> Tuple[Dataset, Scaler]:
    """Zero-mean unit-deviation features; the intercept column is untouched.

    Keeping scores z = X beta small is what holds the polynomial sigmoid
    inside its fitted interval, so shared training standardizes by default.
    Constant feature columns carry no information and would divide by zero;
    they are dropped with a warning.
    """
    X = dataset.X
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    keep = [0]
    for j in range(1, X.shape[1]):
        if scale[j] == 0.0:
            warnings.warn(
                f"dropping constant feature column {dataset.feature_names[j]!r}",
                stacklevel=2,
            )
        else:
            keep.append(j)
    keep = np.asarray(keep, dtype=np.intp)
    mean = np.where(keep == 0, 0.0, mean[keep])
    scale = np.where(keep == 0, 1.0, scale[keep])
    scaler = Scaler(keep=keep, mean=mean, scale=scale, width=X.shape[1])
    standardized = Dataset(
        X=scaler.transform(X),
        y=dataset.y,
        feature_names=tuple(dataset.feature_names[j] for j in keep),
    )
    return standardized, scaler


def split_train_test(dataset: Dataset, test_fraction: float = 0.25, seed: int = 0) -> Tuple[Dataset, Dataset]:
    """Deterministic stratified split; each label class contributes
    ceil(class size * test_fraction) records to the test side."""
    if not 0.0 < test_fraction < 1.0:
        raise UsageError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    test_idx: List[np.ndarray] = []
    train_idx: List[np.ndarray] = []
    for label in (0.0, 1.0):
        members = np.nonzero(dataset.y == label)[0]
        if members.size == 0:
            continue
        members = rng.permutation(members)
        cut = math.ceil(members.size * test_fraction)
        test_idx.append(members[:cut])
        train_idx.append(members[cut:])
    test = np.sort(np.concatenate(test_idx))
    train = np.sort(np.concatenate(train_idx))
    if train.size == 0:
        raise DataError("the requested split leaves no training records")

    def subset(idx):
        return Dataset(dataset.X[idx], dataset.y[idx], dataset.feature_names)

    return subset(train), subset(test)


@dataclass(frozen=True)
class OwnerShard:
    """One record owner's horizontal block of the dataset."""

    owner_id: int
    X_block: np.ndarray
    y_block: np.ndarray

    @property
    def block(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.X_block, self.y_block


def partition_horizontal(dataset: Dataset, k_owners: int, seed: int = 0) -> List[OwnerShard]:
    """Shuffles records once (seeded) and hands out contiguous near-equal
    blocks, larger blocks first."""
    if k_owners < 1:
        raise UsageError("at least one record owner is required")
    if k_owners > dataset.n_records:
        raise UsageError(
            f"cannot split {dataset.n_records} records among {k_owners} owners"
        )
    order = np.random.default_rng(seed).permutation(dataset.n_records)
    return [
        OwnerShard(owner_id=i, X_block=dataset.X[part], y_block=dataset.y[part])
        for i, part in enumerate(np.array_split(order, k_owners))
    ]


def owner_share_and_submit(
    shard: OwnerShard,
    n_parties: int,
    transport: Transport,
    rng: np.random.Generator,
    fixed_point: Optional[FixedPointConfig] = None,
    mask_bound: Optional[float] = None,
) -> None:
    """Secret-shares one owner's block to every computation party.

    Features and labels travel as one packed matrix per party, so the whole
    submission is exactly one message per owner-party pair. Ring shares are
    produced when a fixed_point layout is given, real shares (with the given
    mask bound) otherwise. Only the block's dimensions are visible on the
    wire beyond the uniformly masked shares.
    """
    packed = np.hstack([shard.X_block, shard.y_block[:, None]])
    if fixed_point is not None:
        shares = share_fixed(packed, n_parties, rng, fixed_point)
    else:
        if mask_bound is None:
            raise UsageError("real-domain sharing needs a mask_bound")
        shares = share_real(packed, n_parties, rng, mask_bound=mask_bound)
    transport.register(shard.owner_id)
    for pid in range(n_parties):
        transport.send(shard.owner_id, pid, f"input/owner{shard.owner_id}", shares[pid].values)


def gen_synthetic(n_records: int, n_features: int, seed: int = 0, noise: float = 0.0) -> Dataset:
    """Seeded Gaussian features with logistic labels from a random true
    coefficient vector.

    The true coefficients are scaled so the linear scores have spread about
    2 regardless of the feature count, which keeps both label classes
    populated and the scores well inside the sigmoid approximation window.
    noise adds Gaussian jitter to the scores before labels are drawn.
    """
    if n_records < 1 or n_features < 1:
        raise UsageError("n_records and n_features must be positive")
    if noise < 0.0:
        raise UsageError("noise must be non-negative")
    rng = np.random.default_rng(seed)
    X = np.hstack([np.ones((n_records, 1)), rng.normal(size=(n_records, n_features))])
    beta_true = rng.normal(size=n_features + 1) * (2.0 / math.sqrt(n_features + 1))
    z = X @ beta_true
    if noise > 0.0:
        z = z + noise * rng.normal(size=n_records)
    y = (rng.uniform(size=n_records) < 1.0 / (1.0 + np.exp(-z))).astype(np.float64)
    names = [INTERCEPT_NAME] + [f"x{j}" for j in range(1, n_features + 1)]
    return Dataset(X=X, y=y, feature_names=tuple(names))


@dataclass(frozen=True)
class DatasetInfo:
    """Registry entry for one of the real study datasets."""

    name: str
    filename: str
    n_records: int
    n_features: int
    label_name: str


DATASETS: Dict[str, DatasetInfo] = {
    "pima": DatasetInfo("pima", "pima.csv", 768, 8, "outcome"),
    "lbw": DatasetInfo("lbw", "lbw.csv", 189, 8, "low"),
    "pcs": DatasetInfo("pcs", "pcs.csv", 379, 7, "capsule"),
    "uis": DatasetInfo("uis", "uis.csv", 575, 8, "dfree"),
}

DEFAULT_DATA_DIR = Path("datasets")


def dataset_path(name: str, data_dir=None) -> Path:
    if name not in DATASETS:
        raise UsageError(f"unknown dataset {name!r}; known: {sorted(DATASETS)}")
    base = DEFAULT_DATA_DIR if data_dir is None else Path(data_dir)
    return base / DATASETS[name].filename


def load_named(name: str, data_dir=None) -> Dataset:
    """Loads a registered dataset from the local data directory.

    The files are not bundled with the package; a missing file points the
    caller at the fetch script that downloads and converts it.
    """
    path = dataset_path(name, data_dir)
    if not path.exists():
        raise DataError(
            f"dataset file {path} not found; run scripts/fetch_datasets.py "
            "to download and convert the study datasets"
        )
    dataset = load_csv(path)
    info = DATASETS[name]
    if dataset.n_records != info.n_records:
        warnings.warn(
            f"{name}: expected {info.n_records} records, file has {dataset.n_records}; "
            "the fetch script documents the expected conversion",
            stacklevel=2,
        )
    return dataset
