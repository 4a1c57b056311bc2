"""Tabular dataset loading, standardization, and train/test splitting.

Datasets are plain CSV files (comma separated, UTF-8, '.' decimal point)
with one label column; every other column is a numeric feature.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    """Malformed input file or inconsistent dataset contents."""


@dataclass(frozen=True)
class DatasetSchema:
    """Feature and class naming shared by every split of a dataset."""

    feature_names: list[str]
    class_names: list[str]

    def __post_init__(self):
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DatasetError("feature names are not unique")
        if len(set(self.class_names)) != len(self.class_names):
            raise DatasetError("class names are not unique")
        if len(self.class_names) < 2:
            raise DatasetError("need at least 2 classes")

    @property
    def num_features(self) -> int:
        return len(self.feature_names)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


@dataclass
class Dataset:
    """Feature matrix plus integer labels and stable per-sample ids."""

    features: np.ndarray  # (T, d) float64
    labels: np.ndarray  # (T,) int, values in [0, num_classes)
    schema: DatasetSchema
    sample_ids: list[str]

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        t, d = self.features.shape
        if d != self.schema.num_features:
            raise DatasetError(
                f"feature width {d} does not match schema ({self.schema.num_features})"
            )
        if self.labels.shape != (t,):
            raise DatasetError("labels length does not match feature rows")
        if len(self.sample_ids) != t:
            raise DatasetError("sample_ids length does not match feature rows")
        if len(set(self.sample_ids)) != t:
            raise DatasetError("sample_ids are not unique")
        if not np.all(np.isfinite(self.features)):
            raise DatasetError("features contain NaN or Inf")
        if t and (self.labels.min() < 0 or self.labels.max() >= self.schema.num_classes):
            raise DatasetError("labels reference unknown classes")

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    def take(self, indices) -> "Dataset":
        """Row subset preserving the given order."""
        indices = np.asarray(indices, dtype=int)
        return Dataset(
            features=self.features[indices],
            labels=self.labels[indices],
            schema=self.schema,
            sample_ids=[self.sample_ids[i] for i in indices],
        )

    def index_of(self, sample_id: str) -> int:
        try:
            return self.sample_ids.index(sample_id)
        except ValueError:
            raise DatasetError(f"unknown sample id {sample_id!r}") from None


@dataclass(frozen=True)
class ScalerParams:
    """Per-column mean/std recorded by :func:`standardize` for reuse on test data."""

    means: np.ndarray
    stds: np.ndarray  # constant columns store 1.0

    def __post_init__(self):
        object.__setattr__(self, "means", np.asarray(self.means, dtype=float))
        object.__setattr__(self, "stds", np.asarray(self.stds, dtype=float))
        if self.means.shape != self.stds.shape:
            raise DatasetError("scaler means/stds length mismatch")
        if np.any(self.stds <= 0):
            raise DatasetError("scaler stds must be positive")

    def to_json(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "ScalerParams":
        return cls(means=np.array(obj["means"]), stds=np.array(obj["stds"]))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    seed: int
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DatasetError("train_fraction must lie in (0, 1)")


def load_csv(path, label_column, has_header: bool = True) -> Dataset:
    """Read a CSV file into a Dataset.

    ``label_column`` is a column name (requires a header) or a 0-based
    column index.  Class names are collected in first-appearance order;
    row i of the file becomes sample i with id str(i).
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")

    with path.open(newline="", encoding="utf-8") as fh:
        rows = [(lineno, row) for lineno, row in enumerate(csv.reader(fh), start=1) if row]

    if not rows:
        raise DatasetError(f"empty dataset: {path}")

    header: list[str] | None = None
    if has_header:
        _, header = rows[0]
        header = [h.strip() for h in header]
        rows = rows[1:]
    if not rows:
        raise DatasetError(f"empty dataset: {path}")

    ncols = len(rows[0][1])
    if isinstance(label_column, str):
        if header is None:
            raise DatasetError("label column given by name but file has no header")
        if label_column not in header:
            raise DatasetError(f"unknown label column {label_column!r}")
        label_idx = header.index(label_column)
    else:
        label_idx = int(label_column)
        if not 0 <= label_idx < ncols:
            raise DatasetError(f"label column index {label_idx} out of range for {ncols} columns")

    if header is not None:
        feature_names = [h for j, h in enumerate(header) if j != label_idx]
    else:
        feature_names = [f"f{j}" for j in range(ncols) if j != label_idx]

    features = []
    label_tokens = []
    for lineno, row in rows:
        if len(row) != ncols:
            raise DatasetError(f"row {lineno}: expected {ncols} columns, found {len(row)}")
        values = []
        for j, cell in enumerate(row):
            if j == label_idx:
                label_tokens.append(cell.strip())
                continue
            name = feature_names[len(values)]
            try:
                value = float(cell)
            except ValueError:
                raise DatasetError(
                    f"row {lineno}, column {name!r}: non-numeric feature cell {cell.strip()!r}"
                ) from None
            if not np.isfinite(value):
                raise DatasetError(
                    f"row {lineno}, column {name!r}: non-finite feature value {cell.strip()!r}"
                )
            values.append(value)
        features.append(values)

    class_names: list[str] = []
    class_index: dict[str, int] = {}
    labels = []
    for token in label_tokens:
        if token not in class_index:
            class_index[token] = len(class_names)
            class_names.append(token)
        labels.append(class_index[token])

    schema = DatasetSchema(feature_names=feature_names, class_names=class_names)
    return Dataset(
        features=np.array(features, dtype=float),
        labels=np.array(labels, dtype=int),
        schema=schema,
        sample_ids=[str(i) for i in range(len(features))],
    )


def standardize(dataset: Dataset) -> tuple[Dataset, ScalerParams]:
    """Z-score each feature column (population std); constant columns map to 0.

    The divisor recorded for a constant column is 1, which keeps feature
    indexing stable and makes the transform invertible.
    """
    x = dataset.features
    means = x.mean(axis=0)
    stds = x.std(axis=0)
    constant = np.array([bool(np.all(col == col[0])) for col in x.T])
    means = np.where(constant, x[0] if len(x) else means, means)
    stds = np.where(constant | (stds == 0.0), 1.0, stds)
    scaled = (x - means) / stds
    scaled[:, constant] = 0.0
    params = ScalerParams(means=means, stds=stds)
    out = Dataset(
        features=scaled,
        labels=dataset.labels.copy(),
        schema=dataset.schema,
        sample_ids=list(dataset.sample_ids),
    )
    return out, params


def apply_scaler(dataset: Dataset, params: ScalerParams) -> Dataset:
    """Apply previously recorded standardization to another split."""
    if params.means.shape[0] != dataset.schema.num_features:
        raise DatasetError("scaler width does not match dataset")
    return Dataset(
        features=(dataset.features - params.means) / params.stds,
        labels=dataset.labels.copy(),
        schema=dataset.schema,
        sample_ids=list(dataset.sample_ids),
    )


def invert_scaler(features: np.ndarray, params: ScalerParams) -> np.ndarray:
    return features * params.stds + params.means


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Disjoint train/test split, deterministic for a fixed seed.

    Stratified mode keeps per-class proportions within one sample and
    guarantees at least one train and one test sample per class.
    """
    rng = np.random.default_rng(spec.seed)
    t = dataset.num_samples
    if t < 2:
        raise DatasetError("need at least 2 samples to split")

    if spec.stratified:
        train_idx = []
        for c in range(dataset.schema.num_classes):
            idx_c = np.flatnonzero(dataset.labels == c)
            if len(idx_c) < 2:
                raise DatasetError(
                    f"class {dataset.schema.class_names[c]!r} has {len(idx_c)} sample(s); "
                    "stratified split needs at least 2"
                )
            perm = rng.permutation(len(idx_c))
            n_train = int(round(spec.train_fraction * len(idx_c)))
            n_train = min(max(n_train, 1), len(idx_c) - 1)
            train_idx.extend(idx_c[perm[:n_train]])
        train_mask = np.zeros(t, dtype=bool)
        train_mask[np.array(train_idx, dtype=int)] = True
    else:
        perm = rng.permutation(t)
        n_train = int(round(spec.train_fraction * t))
        n_train = min(max(n_train, 1), t - 1)
        train_mask = np.zeros(t, dtype=bool)
        train_mask[perm[:n_train]] = True

    train = dataset.take(np.flatnonzero(train_mask))
    test = dataset.take(np.flatnonzero(~train_mask))
    return train, test
