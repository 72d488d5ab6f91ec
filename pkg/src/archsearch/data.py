"""Dataset generation, CSV ingestion, splitting and standardization.

The CSV dialect is UTF-8, comma-delimited, '.' decimal separator, header
row required. Classification target cells are label-encoded in
first-appearance order; feature cells must be finite numbers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError
from .nn import CLASSIFICATION, REGRESSION


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (m, p) float64
    targets: np.ndarray  # (m, b) float64 for regression, (m,) int64 labels otherwise
    task: str
    feature_names: tuple[str, ...]
    target_names: tuple[str, ...]
    class_names: tuple[str, ...] = ()
    image_shape: Optional[tuple[int, int, int]] = None  # (h, w, c) when features are images

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        object.__setattr__(self, "features", features)
        if features.ndim != 2 or features.shape[0] < 1:
            raise DataError("features must be a nonempty (m, p) matrix")
        if self.task == REGRESSION:
            targets = np.asarray(self.targets, dtype=np.float64)
            if targets.ndim == 1:
                targets = targets[:, None]
            object.__setattr__(self, "targets", targets)
        elif self.task == CLASSIFICATION:
            targets = np.asarray(self.targets, dtype=np.int64).ravel()
            object.__setattr__(self, "targets", targets)
            k = len(self.class_names)
            if k < 1:
                raise DataError("classification dataset needs class names")
            if np.any((targets < 0) | (targets >= k)):
                raise DataError("class labels out of range")
        else:
            raise DataError(f"unknown task {self.task!r}")
        if self.targets.shape[0] != features.shape[0]:
            raise DataError("feature and target row counts differ")
        if len(self.feature_names) != features.shape[1]:
            raise DataError("feature_names do not match feature columns")
        if self.image_shape is not None:
            h, w, c = self.image_shape
            if h * w * c != features.shape[1]:
                raise DataError("image_shape does not match feature width")

    @property
    def num_rows(self) -> int:
        return int(self.features.shape[0])

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    @property
    def num_classes(self) -> int:
        if self.task != CLASSIFICATION:
            raise DataError("num_classes is only defined for classification")
        return len(self.class_names)

    def take(self, idx: np.ndarray) -> "Dataset":
        return replace(self, features=self.features[idx], targets=self.targets[idx])


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.10
    val_fraction_of_remainder: float = 0.10
    stratified: Optional[bool] = None  # None: stratify iff classification
    seed: int = 0

    def __post_init__(self):
        for frac in (self.test_fraction, self.val_fraction_of_remainder):
            if not 0.0 < frac < 1.0:
                raise DataError("split fractions must lie in (0, 1)")


# --- builtin datasets ---------------------------------------------------------


def eggbox_value(x, y):
    """(2 + cos(x/2) cos(y/2))^5; range [1, 243] on [0, 2pi]^2."""
    return (2.0 + np.cos(np.asarray(x) / 2.0) * np.cos(np.asarray(y) / 2.0)) ** 5


def gen_eggbox(count: int = 4000, seed: int = 0, scheme: str = "uniform") -> Dataset:
    """Synthetic egg-carton regression surface on [0, 2pi]^2.

    scheme 'uniform' draws points uniformly at random (deterministic per
    seed); 'grid' lays out the first `count` points of the smallest square
    lattice covering the domain.
    """
    if count < 1:
        raise DataError("count must be >= 1")
    if scheme == "uniform":
        rng = np.random.default_rng(seed)
        pts = rng.uniform(0.0, 2.0 * np.pi, size=(count, 2))
    elif scheme == "grid":
        side = math.isqrt(count - 1) + 1
        axis = np.linspace(0.0, 2.0 * np.pi, side)
        gx, gy = np.meshgrid(axis, axis, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])[:count]
    else:
        raise DataError(f"unknown sampling scheme {scheme!r}")
    targets = eggbox_value(pts[:, 0], pts[:, 1])
    return Dataset(
        features=pts,
        targets=targets,
        task=REGRESSION,
        feature_names=("x", "y"),
        target_names=("f",),
    )


def gen_bars(count: int = 2000, seed: int = 0, height: int = 8, width: int = 8) -> Dataset:
    """Two-class image task: one bright horizontal or vertical bar per image.

    Balanced classes, random bar position and intensity, mild Gaussian
    pixel noise. Pixels are flattened row-major into the feature matrix and
    image_shape records (height, width, 1).
    """
    if count < 2:
        raise DataError("count must be >= 2")
    rng = np.random.default_rng(seed)
    images = rng.normal(0.0, 0.1, size=(count, height, width))
    labels = np.arange(count) % 2  # 0 horizontal, 1 vertical
    positions_h = rng.integers(0, height, size=count)
    positions_w = rng.integers(0, width, size=count)
    intensity = rng.uniform(0.7, 1.3, size=count)
    for i in range(count):
        if labels[i] == 0:
            images[i, positions_h[i], :] += intensity[i]
        else:
            images[i, :, positions_w[i]] += intensity[i]
    names = tuple(f"px_{r}_{c}" for r in range(height) for c in range(width))
    return Dataset(
        features=images.reshape(count, -1),
        targets=labels,
        task=CLASSIFICATION,
        feature_names=names,
        target_names=("label",),
        class_names=("horizontal", "vertical"),
        image_shape=(height, width, 1),
    )


# --- CSV ----------------------------------------------------------------------


def _parse_number(cell: str, row: int, col: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"row {row}, column {col!r}: {cell!r} is not a number") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}, column {col!r}: non-finite value {cell!r}")
    return value


def load_csv(path, target_columns: Sequence[str], task: str) -> Dataset:
    """Read a headered CSV into a Dataset, separating the target columns."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate header names")
        missing = [t for t in target_columns if t not in header]
        if missing:
            raise DataError(f"{path}: missing target columns {missing}")
        if not target_columns:
            raise DataError("at least one target column is required")
        if task == CLASSIFICATION and len(target_columns) != 1:
            raise DataError("classification expects exactly one target column")
        target_idx = [header.index(t) for t in target_columns]
        feature_idx = [i for i in range(len(header)) if i not in target_idx]
        if not feature_idx:
            raise DataError(f"{path}: no feature columns left")

        feats, targs = [], []
        classes: dict[str, int] = {}
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}: row {row_no} has {len(row)} cells, expected {len(header)}")
            feats.append([_parse_number(row[i], row_no, header[i]) for i in feature_idx])
            if task == REGRESSION:
                targs.append([_parse_number(row[i], row_no, header[i]) for i in target_idx])
            else:
                label = row[target_idx[0]]
                if label not in classes:
                    classes[label] = len(classes)
                targs.append(classes[label])
    if not feats:
        raise DataError(f"{path}: no data rows")
    return Dataset(
        features=np.array(feats, dtype=np.float64),
        targets=np.array(targs),
        task=task,
        feature_names=tuple(header[i] for i in feature_idx),
        target_names=tuple(target_columns),
        class_names=tuple(classes) if task == CLASSIFICATION else (),
    )


def write_csv(ds: Dataset, path) -> None:
    """Inverse of load_csv; floats are written with full round-trip precision."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(ds.feature_names) + list(ds.target_names))
        for i in range(ds.num_rows):
            row = [repr(float(v)) for v in ds.features[i]]
            if ds.task == REGRESSION:
                row += [repr(float(v)) for v in ds.targets[i]]
            else:
                row.append(ds.class_names[int(ds.targets[i])])
            writer.writerow(row)


# --- splitting ------------------------------------------------------------------


def _largest_remainder(counts: np.ndarray, total: int) -> np.ndarray:
    """Allocate `total` across classes proportionally to `counts`.

    Every allocation is floor or ceil of the exact share; classes with any
    members get at least one slot, stolen from the largest allocation.
    """
    m = counts.sum()
    shares = counts * (total / m)
    alloc = np.floor(shares).astype(np.int64)
    remainder = shares - alloc
    leftover = total - int(alloc.sum())
    for cls in np.argsort(-remainder, kind="stable")[:leftover]:
        alloc[cls] += 1
    for cls in range(len(alloc)):
        while alloc[cls] == 0 and counts[cls] > 0:
            donor = int(np.argmax(alloc))
            if alloc[donor] <= 1:
                raise DataError("dataset too small to stratify")
            alloc[donor] -= 1
            alloc[cls] += 1
    return alloc


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Disjoint (train, val, test) cover of the dataset.

    Sizes are floor(test_fraction * m) for test, then
    floor(val_fraction * remaining) for validation, rest for training, in
    that order. Classification always splits stratified (per-class
    proportions preserved to within one sample per part); regression is
    plain random. Deterministic per spec.seed; each part keeps original
    row order.
    """
    m = ds.num_rows
    m_test = int(spec.test_fraction * m)
    m_val = int(spec.val_fraction_of_remainder * (m - m_test))
    m_train = m - m_test - m_val
    if min(m_test, m_val, m_train) < 1:
        raise DataError(f"dataset of {m} rows is too small to split")

    stratified = spec.stratified
    if ds.task == CLASSIFICATION:
        stratified = True
    elif stratified:
        raise DataError("stratified splitting requires class labels")

    rng = np.random.default_rng(spec.seed)
    if not stratified:
        perm = rng.permutation(m)
        test_idx = perm[:m_test]
        val_idx = perm[m_test : m_test + m_val]
        train_idx = perm[m_test + m_val :]
    else:
        labels = ds.targets
        class_ids = np.arange(ds.num_classes)
        counts = np.array([(labels == c).sum() for c in class_ids])
        if counts.min() < 3:
            raise DataError("every class needs at least 3 samples for stratification")
        test_alloc = _largest_remainder(counts, m_test)
        val_alloc = _largest_remainder(counts - test_alloc, m_val)
        test_parts, val_parts, train_parts = [], [], []
        for c in class_ids:
            pool = rng.permutation(np.flatnonzero(labels == c))
            t, v = test_alloc[c], val_alloc[c]
            test_parts.append(pool[:t])
            val_parts.append(pool[t : t + v])
            train_parts.append(pool[t + v :])
        test_idx = np.concatenate(test_parts)
        val_idx = np.concatenate(val_parts)
        train_idx = np.concatenate(train_parts)
        if min(len(test_idx), len(val_idx), len(train_idx)) < 1:
            raise DataError("stratified split left an empty part")

    return (
        ds.take(np.sort(train_idx)),
        ds.take(np.sort(val_idx)),
        ds.take(np.sort(test_idx)),
    )


# --- standardization --------------------------------------------------------------


@dataclass(frozen=True)
class TransformRecord:
    """Z-score statistics fitted on the training part only."""

    feature_mean: np.ndarray
    feature_scale: np.ndarray
    target_mean: Optional[np.ndarray] = None
    target_scale: Optional[np.ndarray] = None

    def apply_features(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.feature_mean) / self.feature_scale

    def apply_targets(self, y: np.ndarray) -> np.ndarray:
        if self.target_mean is None:
            return np.asarray(y)
        return (np.asarray(y, dtype=np.float64) - self.target_mean) / self.target_scale

    def invert_targets(self, y: np.ndarray) -> np.ndarray:
        if self.target_mean is None:
            return np.asarray(y)
        return np.asarray(y, dtype=np.float64) * self.target_scale + self.target_mean

    def apply(self, ds: Dataset) -> Dataset:
        features = self.apply_features(ds.features)
        if ds.task == REGRESSION and self.target_mean is not None:
            return replace(ds, features=features, targets=self.apply_targets(ds.targets))
        return replace(ds, features=features)


def fit_transform_record(train: Dataset, scale_targets: Optional[bool] = None) -> TransformRecord:
    """Fit z-score statistics on the training part.

    Constant feature columns are centered but not scaled. Regression
    targets are standardized as well by default; this leaves R2 scores
    unchanged (affine invariance) while keeping optimization well scaled.
    """
    mean = train.features.mean(axis=0)
    scale = train.features.std(axis=0)
    scale = np.where(scale == 0.0, 1.0, scale)
    if scale_targets is None:
        scale_targets = train.task == REGRESSION
    if scale_targets and train.task != REGRESSION:
        raise DataError("target scaling applies to regression only")
    t_mean = t_scale = None
    if scale_targets:
        t_mean = train.targets.mean(axis=0)
        t_scale = train.targets.std(axis=0)
        t_scale = np.where(t_scale == 0.0, 1.0, t_scale)
    return TransformRecord(mean, scale, t_mean, t_scale)


def standardize(train: Dataset, *others: Dataset, scale_targets: Optional[bool] = None):
    """Fit on train, apply to train and all other parts.

    Returns (transformed datasets tuple, TransformRecord).
    """
    record = fit_transform_record(train, scale_targets)
    transformed = tuple(record.apply(ds) for ds in (train, *others))
    return transformed, record
