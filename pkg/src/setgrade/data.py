"""Dataset ingestion, preprocessing, partitioning, and synthetic data.

The preparation protocol: uniform 80/20 row split; m labeled anomalies
carved out of the training rows into the anomaly pool; remaining
training anomalies thinned so the unlabeled pool stays under the
contamination cap (excess rows discarded, not relabeled); z-score
normalization fitted on the resulting training rows and applied to both
partitions, with zero-variance features dropped everywhere.
"""

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, ParseError, ShapeError


@dataclass
class Dataset:
    features: np.ndarray          # (n, d)
    labels: np.ndarray            # (n,) in {0, 1}; 1 = anomaly
    feature_names: Optional[list] = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ConfigError(f"features must be 2-D, got {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ConfigError(f"{self.labels.shape[0]} labels for "
                              f"{self.features.shape[0]} rows")
        bad = ~np.isin(self.labels, (0, 1))
        if bad.any():
            raise ConfigError(f"labels must be 0 or 1; row "
                              f"{int(np.flatnonzero(bad)[0])} is "
                              f"{self.labels[bad][0]}")

    @property
    def n_anomalies(self):
        return int(self.labels.sum())


@dataclass
class SplitSpec:
    test_fraction: float = 0.2
    labeled_anomaly_count: Optional[int] = None   # absolute m
    labeled_ratio: Optional[float] = None         # fraction of training anomalies
    contamination_cap: float = 0.02
    stats_scope: str = "train"                    # "train" or "all"
    seed: int = 0

    def validate(self):
        if not 0 < self.test_fraction < 1:
            raise ConfigError(f"test_fraction must be in (0, 1), "
                              f"got {self.test_fraction}")
        if not 0 <= self.contamination_cap <= 1:
            raise ConfigError(f"contamination_cap must be in [0, 1], "
                              f"got {self.contamination_cap}")
        given = (self.labeled_anomaly_count is not None) + \
            (self.labeled_ratio is not None)
        if given != 1:
            raise ConfigError("exactly one of labeled_anomaly_count and "
                              "labeled_ratio must be set")
        if self.labeled_anomaly_count is not None and \
                self.labeled_anomaly_count < 0:
            raise ConfigError(f"labeled_anomaly_count must be >= 0, "
                              f"got {self.labeled_anomaly_count}")
        if self.labeled_ratio is not None and not 0 <= self.labeled_ratio <= 1:
            raise ConfigError(f"labeled_ratio must be in [0, 1], "
                              f"got {self.labeled_ratio}")
        if self.stats_scope not in ("train", "all"):
            raise ConfigError(f"stats_scope must be 'train' or 'all', "
                              f"got {self.stats_scope!r}")
        return self


@dataclass
class PreparedData:
    unlabeled: np.ndarray         # X_U, normalized
    anomalies: np.ndarray         # X_A, normalized
    test_features: np.ndarray     # normalized
    test_labels: np.ndarray
    feature_mean: np.ndarray      # stats for surviving features
    feature_std: np.ndarray
    dropped_features: list        # original column indices with zero std
    discarded_anomalies: int = 0  # training anomalies removed by the cap
    spec: Optional[dict] = None


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def _parse_cell(text, row, col):
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"row {row}, column {col}: non-numeric value "
                         f"{text.strip()!r}") from None


def load_csv(path, label_column=None):
    """Parse a CSV of features plus a binary label column.

    The header is auto-detected (any non-numeric cell in the first row).
    The label column is the last one unless `label_column` names another.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ParseError(f"{path}: empty file")

    def numeric_row(cells):
        try:
            [float(c) for c in cells]
            return True
        except ValueError:
            return False

    names = None
    if not numeric_row(rows[0]):
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]

    width = len(names) if names is not None else len(rows[0])
    if names is not None and rows and len(rows[0]) != width:
        raise ParseError(f"{path}: header has {width} columns, "
                         f"row 2 has {len(rows[0])}")
    if width < 2:
        raise ParseError(f"{path}: need at least one feature column plus "
                         f"a label column")

    if label_column is None:
        label_idx = width - 1
    elif names is not None and label_column in names:
        label_idx = names.index(label_column)
    else:
        raise ParseError(f"{path}: no column named {label_column!r}")

    offset = 2 if names is not None else 1   # 1-based row numbers in errors
    features = np.empty((len(rows), width - 1))
    labels = np.empty(len(rows), dtype=np.int64)
    for i, cells in enumerate(rows):
        if len(cells) != width:
            raise ParseError(f"{path}: row {i + offset} has {len(cells)} "
                             f"columns, expected {width}")
        value = _parse_cell(cells[label_idx], i + offset, label_idx + 1)
        if value not in (0.0, 1.0):
            raise ParseError(f"{path}: row {i + offset}: label must be 0 "
                             f"or 1, got {cells[label_idx].strip()}")
        labels[i] = int(value)
        k = 0
        for j, cell in enumerate(cells):
            if j == label_idx:
                continue
            features[i, k] = _parse_cell(cell, i + offset, j + 1)
            k += 1

    feature_names = None
    if names is not None:
        feature_names = [n for j, n in enumerate(names) if j != label_idx]
    return Dataset(features=features, labels=labels,
                   feature_names=feature_names)


def load_features_csv(path):
    """Parse a CSV where every column is a feature (no label)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ParseError(f"{path}: empty file")

    def numeric_row(cells):
        try:
            [float(c) for c in cells]
            return True
        except ValueError:
            return False

    header = not numeric_row(rows[0])
    width = len(rows[0])
    if header:
        rows = rows[1:]
    offset = 2 if header else 1
    features = np.empty((len(rows), width))
    for i, cells in enumerate(rows):
        if len(cells) != width:
            raise ParseError(f"{path}: row {i + offset} has {len(cells)} "
                             f"columns, expected {width}")
        for j, cell in enumerate(cells):
            features[i, j] = _parse_cell(cell, i + offset, j + 1)
    return features


def load_stats(path):
    """Read a stats.json written by save_prepared into zscore_apply form."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc}") from None
    try:
        mean = np.array([float(v) for v in raw["feature_mean"]])
        std = np.array([float(v) for v in raw["feature_std"]])
        dropped = [int(v) for v in raw["dropped_features"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: malformed stats: {exc}") from None
    total = mean.size + len(dropped)
    keep = np.array([j for j in range(total) if j not in set(dropped)],
                    dtype=np.int64)
    return {"mean": mean, "std": std, "keep": keep, "dropped": dropped}


def write_csv(dataset, path):
    """Full-precision CSV with header; inverse of load_csv."""
    names = dataset.feature_names or \
        [f"f{j}" for j in range(dataset.features.shape[1])]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + ["label"])
        for x, y in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in x] + [int(y)])


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def zscore_fit(features):
    """Per-feature mean/std plus the indices of zero-variance columns."""
    features = np.asarray(features, dtype=np.float64)
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    dropped = np.flatnonzero(std == 0.0)
    if dropped.size == features.shape[1]:
        raise ConfigError("all features have zero variance; nothing left "
                          "after dropping them")
    keep = np.flatnonzero(std != 0.0)
    return {"mean": mean[keep], "std": std[keep],
            "keep": keep, "dropped": dropped.tolist()}


def zscore_apply(features, stats):
    features = np.asarray(features, dtype=np.float64)
    expected = len(stats["keep"]) + len(stats["dropped"])
    if features.ndim != 2 or features.shape[1] != expected:
        raise ShapeError(f"features have shape {features.shape}, "
                         f"normalization stats expect {expected} columns")
    kept = features[:, stats["keep"]]
    return (kept - stats["mean"]) / stats["std"]


def preprocess(train_features, test_features, stats=None):
    """Normalize train/test with train-fitted statistics (or given stats)."""
    train_features = np.asarray(train_features, dtype=np.float64)
    test_features = np.asarray(test_features, dtype=np.float64)
    if test_features.size and \
            test_features.shape[1] != train_features.shape[1]:
        raise ConfigError(f"train has {train_features.shape[1]} features, "
                          f"test has {test_features.shape[1]}")
    if stats is None:
        stats = zscore_fit(train_features)
    return zscore_apply(train_features, stats), \
        zscore_apply(test_features, stats), stats


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------

def _cap_retention(n_normal, n_candidates, cap):
    """How many candidate anomalies may stay in the unlabeled pool."""
    if cap >= 1.0:
        return n_candidates
    limit = math.floor(cap * n_normal / (1.0 - cap))
    return min(n_candidates, limit)


def split(dataset, spec):
    """Partition per the preparation protocol; returns normalized pools."""
    spec.validate()
    n = dataset.features.shape[0]
    if n < 2:
        raise ConfigError(f"need at least 2 rows to split, got {n}")
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(n)
    n_test = int(round(n * spec.test_fraction))
    test_idx, train_idx = order[:n_test], order[n_test:]

    train_labels = dataset.labels[train_idx]
    anomaly_idx = train_idx[train_labels == 1]
    normal_idx = train_idx[train_labels == 0]

    if spec.labeled_anomaly_count is not None:
        m = spec.labeled_anomaly_count
    else:
        m = math.floor(spec.labeled_ratio * anomaly_idx.size)
    if m > anomaly_idx.size:
        raise ConfigError(f"labeled_anomaly_count {m} exceeds the "
                          f"{anomaly_idx.size} anomalies in the training split")

    labeled_idx = rng.choice(anomaly_idx, size=m, replace=False)
    remaining = np.setdiff1d(anomaly_idx, labeled_idx)
    n_keep = _cap_retention(normal_idx.size, remaining.size,
                            spec.contamination_cap)
    retained = rng.choice(remaining, size=n_keep, replace=False)

    pool_idx = np.concatenate([normal_idx, retained])
    raw_pool = dataset.features[pool_idx]
    raw_anomalies = dataset.features[labeled_idx]
    raw_test = dataset.features[test_idx]

    if spec.stats_scope == "all":
        stats = zscore_fit(dataset.features)
    else:
        stats = zscore_fit(np.concatenate([raw_pool, raw_anomalies]))

    return PreparedData(
        unlabeled=zscore_apply(raw_pool, stats),
        anomalies=zscore_apply(raw_anomalies, stats),
        test_features=zscore_apply(raw_test, stats),
        test_labels=dataset.labels[test_idx].copy(),
        feature_mean=stats["mean"], feature_std=stats["std"],
        dropped_features=stats["dropped"],
        discarded_anomalies=int(remaining.size - n_keep),
        spec=spec.__dict__.copy())


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

def synth_blobs(n_normal, n_anomaly, dim, separation, seed=0):
    """Separable-by-construction data: a unit gaussian cluster at the
    origin plus anomalies on a distant uniform shell.

    Anomaly radii are uniform in [separation*sqrt(dim),
    (separation+1)*sqrt(dim)]; normal points concentrate near radius
    sqrt(dim), so separation >= 2 already gives a wide margin.
    """
    if n_normal < 0 or n_anomaly < 0:
        raise ConfigError("counts must be >= 0")
    if dim < 1:
        raise ConfigError(f"dim must be >= 1, got {dim}")
    rng = np.random.default_rng(seed)
    normals = rng.normal(size=(n_normal, dim))

    directions = rng.normal(size=(n_anomaly, dim))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    radii = rng.uniform(separation * math.sqrt(dim),
                        (separation + 1) * math.sqrt(dim),
                        size=(n_anomaly, 1))
    anomalies = directions / norms * radii

    features = np.concatenate([normals, anomalies], axis=0)
    labels = np.concatenate([np.zeros(n_normal, dtype=np.int64),
                             np.ones(n_anomaly, dtype=np.int64)])
    return Dataset(features=features, labels=labels)


# ---------------------------------------------------------------------------
# prepared-data persistence
# ---------------------------------------------------------------------------

_PREPARED_FILES = ("unlabeled.csv", "anomalies.csv", "test.csv", "stats.json")


def save_prepared(prepared, directory):
    """Directory of CSVs plus a statistics file; exact round trip."""
    os.makedirs(directory, exist_ok=True)

    def dump(features, labels, name):
        write_csv(Dataset(features=features, labels=labels),
                  os.path.join(directory, name))

    dump(prepared.unlabeled, np.zeros(len(prepared.unlabeled), dtype=np.int64),
         "unlabeled.csv")
    dump(prepared.anomalies, np.ones(len(prepared.anomalies), dtype=np.int64),
         "anomalies.csv")
    dump(prepared.test_features, prepared.test_labels, "test.csv")
    stats = {
        "feature_mean": [repr(float(v)) for v in prepared.feature_mean],
        "feature_std": [repr(float(v)) for v in prepared.feature_std],
        "dropped_features": list(prepared.dropped_features),
        "discarded_anomalies": prepared.discarded_anomalies,
        "spec": prepared.spec,
    }
    with open(os.path.join(directory, "stats.json"), "w",
              encoding="utf-8") as fh:
        json.dump(stats, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_prepared(directory):
    for name in _PREPARED_FILES:
        if not os.path.exists(os.path.join(directory, name)):
            raise ParseError(f"{directory}: missing {name}")
    unlabeled = load_csv(os.path.join(directory, "unlabeled.csv"))
    anomalies = load_csv(os.path.join(directory, "anomalies.csv"))
    test = load_csv(os.path.join(directory, "test.csv"))
    with open(os.path.join(directory, "stats.json"), "r",
              encoding="utf-8") as fh:
        stats = json.load(fh)
    return PreparedData(
        unlabeled=unlabeled.features,
        anomalies=anomalies.features,
        test_features=test.features,
        test_labels=test.labels,
        feature_mean=np.array([float(v) for v in stats["feature_mean"]]),
        feature_std=np.array([float(v) for v in stats["feature_std"]]),
        dropped_features=stats["dropped_features"],
        discarded_anomalies=stats["discarded_anomalies"],
        spec=stats.get("spec"))
