"""Tabular data loading, validation, and scaling.

All scaling conventions live here: the sampler always sees standardized
features (and, for regression, a response mapped into [-0.5, 0.5]), while
callers get predictions back on the original scale through `ScalingInfo`.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

REGRESSION = "regression"
CLASSIFICATION = "classification"

_TASKS = (REGRESSION, CLASSIFICATION)


class DataError(ValueError):
    """Raised when an input file or dataset violates the data contract."""


@dataclass(frozen=True)
class Dataset:
    """An immutable design matrix plus response.

    Attributes
    ----------
    features : (n, p) float array
    response : (n,) float array; {0, 1} valued for classification
    feature_names : list of p column labels
    task : "regression" or "classification"
    """

    features: np.ndarray
    response: np.ndarray
    feature_names: list[str]
    task: str

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.response, dtype=float)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "response", y)
        if X.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        n, p = X.shape
        if n < 2 or p < 1:
            raise DataError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if y.shape != (n,):
            raise DataError(f"response length {y.shape} does not match n={n}")
        if len(self.feature_names) != p:
            raise DataError("feature_names length does not match p")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain missing or non-finite values")
        if not np.all(np.isfinite(y)):
            raise DataError("response contains missing or non-finite values")
        if self.task not in _TASKS:
            raise DataError(f"unknown task {self.task!r}")
        if self.task == CLASSIFICATION and not np.all(np.isin(y, (0.0, 1.0))):
            bad = y[~np.isin(y, (0.0, 1.0))][0]
            raise DataError(f"response not in {{0,1}}: found {bad!r}")
        X.setflags(write=False)
        y.setflags(write=False)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def take(self, rows: np.ndarray) -> "Dataset":
        """Row subset as a new Dataset (used by train/test splitting)."""
        return Dataset(self.features[rows], self.response[rows],
                       list(self.feature_names), self.task)


@dataclass(frozen=True)
class ScalingInfo:
    """Invertible record of the standardization applied to a Dataset.

    Features are mapped to (x - center) / scale per column. Constant
    columns get scale 1 and center equal to the constant, so they map to
    zero and invert exactly. The response map (regression only, when
    `response_scaled`) is (y - center) / scale with center the midrange
    and scale the range, so min -> -0.5 and max -> +0.5.
    """

    feature_centers: np.ndarray
    feature_scales: np.ndarray
    response_center: float = 0.0
    response_scale: float = 1.0
    response_scaled: bool = False

    def __post_init__(self):
        c = np.asarray(self.feature_centers, dtype=float)
        s = np.asarray(self.feature_scales, dtype=float)
        object.__setattr__(self, "feature_centers", c)
        object.__setattr__(self, "feature_scales", s)
        if np.any(s <= 0) or self.response_scale <= 0:
            raise DataError("scales must be positive")

    def transform_features(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.feature_centers) / self.feature_scales

    def invert_features(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) * self.feature_scales + self.feature_centers

    def transform_response(self, y: np.ndarray) -> np.ndarray:
        if not self.response_scaled:
            return np.asarray(y, dtype=float)
        return (np.asarray(y, dtype=float) - self.response_center) / self.response_scale

    def invert_response(self, y: np.ndarray) -> np.ndarray:
        if not self.response_scaled:
            return np.asarray(y, dtype=float)
        return np.asarray(y, dtype=float) * self.response_scale + self.response_center

    def to_dict(self) -> dict:
        return {
            "feature_centers": self.feature_centers.tolist(),
            "feature_scales": self.feature_scales.tolist(),
            "response_center": self.response_center,
            "response_scale": self.response_scale,
            "response_scaled": self.response_scaled,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingInfo":
        return cls(
            feature_centers=np.asarray(d["feature_centers"], dtype=float),
            feature_scales=np.asarray(d["feature_scales"], dtype=float),
            response_center=float(d["response_center"]),
            response_scale=float(d["response_scale"]),
            response_scaled=bool(d["response_scaled"]),
        )

    @classmethod
    def identity(cls, p: int) -> "ScalingInfo":
        return cls(np.zeros(p), np.ones(p))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path) -> "ScalingInfo":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class SplitDictionary:
    """Per-feature sorted distinct training values, the candidate split points."""

    values: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        for j, v in enumerate(self.values):
            if v.size == 0:
                raise DataError(f"empty split dictionary for feature {j}")
            if np.any(np.diff(v) <= 0):
                raise DataError(f"split dictionary for feature {j} not strictly increasing")

    @property
    def p(self) -> int:
        return len(self.values)

    def splittable(self) -> np.ndarray:
        """Boolean mask of features with at least two distinct values.

        A rule on a single-valued feature routes every row one way, so such
        features are never proposed as split covariates.
        """
        return np.array([v.size >= 2 for v in self.values], dtype=bool)


def load_csv(path, target_column: str, task: str) -> Dataset:
    """Load a comma-separated file with a header row into a Dataset.

    All non-target columns must be numeric; missing cells are rejected with
    their row/column location (header is row 1, data starts at row 2).
    """
    if task not in _TASKS:
        raise DataError(f"unknown task {task!r}")
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if target_column not in header:
            raise DataError(f"{path}: target column {target_column!r} not found "
                            f"(columns: {', '.join(header)})")
        target_idx = header.index(target_column)
        feature_names = [h for i, h in enumerate(header) if i != target_idx]
        rows = []
        for lineno, record in enumerate(reader, start=2):
            if not record or (len(record) == 1 and record[0].strip() == ""):
                continue
            if len(record) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(record)} cells, "
                                f"expected {len(header)}")
            parsed = []
            for col, cell in zip(header, record):
                text = cell.strip()
                if text == "":
                    raise DataError(f"{path}: row {lineno}, column {col!r}: empty cell")
                try:
                    parsed.append(float(text))
                except ValueError:
                    raise DataError(f"{path}: row {lineno}, column {col!r}: "
                                    f"non-numeric value {cell!r}") from None
            rows.append(parsed)
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 data rows, got {len(rows)}")
    data = np.asarray(rows, dtype=float)
    y = data[:, target_idx]
    X = np.delete(data, target_idx, axis=1)
    if task == CLASSIFICATION:
        bad = np.nonzero(~np.isin(y, (0.0, 1.0)))[0]
        if bad.size:
            raise DataError(f"{path}: row {bad[0] + 2}, column {target_column!r}: "
                            f"response not in {{0,1}}: {y[bad[0]]!r}")
    return Dataset(X, y, feature_names, task)


def standardize(dataset: Dataset, scale_response: bool = True) -> tuple[Dataset, ScalingInfo]:
    """Standardize features to mean 0 / sample sd 1; optionally map the response.

    Each column is centered on its training mean and divided by its sample
    standard deviation (ddof=1). Constant columns keep scale 1 so the map
    stays invertible. For regression with `scale_response`, the response is
    mapped linearly so its min lands on -0.5 and its max on +0.5.
    """
    X = dataset.features
    centers = X.mean(axis=0)
    scales = X.std(axis=0, ddof=1)
    constant = scales <= 0
    scales = np.where(constant, 1.0, scales)

    y = dataset.response
    if scale_response and dataset.task == REGRESSION:
        lo, hi = float(y.min()), float(y.max())
        center = (lo + hi) / 2.0
        scale = hi - lo if hi > lo else 1.0
        info = ScalingInfo(centers, scales, center, scale, response_scaled=True)
    else:
        info = ScalingInfo(centers, scales)

    scaled = Dataset(info.transform_features(X), info.transform_response(y),
                     list(dataset.feature_names), dataset.task)
    return scaled, info


def split_dictionary(dataset: Dataset) -> SplitDictionary:
    """Collect the sorted distinct values of every (standardized) feature column."""
    return SplitDictionary([np.unique(dataset.features[:, j]) for j in range(dataset.p)])


def train_test_split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic disjoint row partition; test size = round(n * test_fraction)."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = dataset.n
    n_test = int(math.floor(n * test_fraction + 0.5))
    n_test = min(max(n_test, 1), n - 1)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    test_rows = np.sort(order[:n_test])
    train_rows = np.sort(order[n_test:])
    return dataset.take(train_rows), dataset.take(test_rows)
