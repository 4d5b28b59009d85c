"""Graded training sets: k points mixing labeled anomalies with unlabeled
pool points, where the set's grade is the number of planted anomalies.

Sampling is uniform without replacement inside a set, with replacement
across sets and batches; a seeded generator makes the full batch stream
of a training run reproducible.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SamplingError

log = logging.getLogger(__name__)


@dataclass
class SetSample:
    points: np.ndarray            # (k, d); anomaly rows first
    grade: int                    # number of planted anomalies
    anomaly_indices: np.ndarray   # rows taken from the labeled-anomaly pool
    unlabeled_indices: np.ndarray


def uniform_grade_mix(max_grade=2):
    """Equal probability over grades 0..max_grade."""
    if max_grade < 0:
        raise ConfigError(f"max_grade must be >= 0, got {max_grade}")
    p = 1.0 / (max_grade + 1)
    return {g: p for g in range(max_grade + 1)}


def _check_pool(name, pool):
    pool = np.asarray(pool, dtype=np.float64)
    if pool.ndim != 2:
        raise SamplingError(f"{name} pool must be 2-D, got shape {pool.shape}")
    return pool


def sample_set(unlabeled, anomalies, set_size, n_anomalies, rng):
    """One set: n_anomalies rows from the anomaly pool, the rest unlabeled."""
    unlabeled = _check_pool("unlabeled", unlabeled)
    anomalies = _check_pool("labeled-anomaly", anomalies)
    if not 0 <= n_anomalies <= set_size:
        raise SamplingError(
            f"n_anomalies must be in [0, {set_size}], got {n_anomalies}")
    if n_anomalies > anomalies.shape[0]:
        raise SamplingError(
            f"labeled-anomaly pool has {anomalies.shape[0]} rows, "
            f"cannot draw {n_anomalies}")
    rest = set_size - n_anomalies
    if rest > unlabeled.shape[0]:
        raise SamplingError(
            f"unlabeled pool has {unlabeled.shape[0]} rows, cannot draw {rest}")

    a_idx = rng.choice(anomalies.shape[0], size=n_anomalies, replace=False)
    u_idx = rng.choice(unlabeled.shape[0], size=rest, replace=False)
    points = np.concatenate([anomalies[a_idx], unlabeled[u_idx]], axis=0)
    return SetSample(points=np.ascontiguousarray(points), grade=int(n_anomalies),
                     anomaly_indices=a_idx, unlabeled_indices=u_idx)


def effective_grade_mix(grade_mix, n_pool_anomalies):
    """Drop grades the anomaly pool cannot supply and renormalize.

    Returns (grades array, probabilities array) sorted by grade.
    """
    if not grade_mix:
        raise ConfigError("grade_mix is empty")
    grades = sorted(grade_mix)
    probs = np.array([float(grade_mix[g]) for g in grades])
    if (probs < 0).any():
        raise ConfigError("grade_mix probabilities must be nonnegative")
    if abs(probs.sum() - 1.0) > 1e-9:
        raise ConfigError(f"grade_mix must sum to 1, got {probs.sum()!r}")
    if min(grades) < 0:
        raise ConfigError(f"grades must be nonnegative, got {min(grades)}")

    keep = [i for i, g in enumerate(grades) if g <= n_pool_anomalies]
    if len(keep) < len(grades):
        dropped = [g for g in grades if g > n_pool_anomalies]
        grades = [grades[i] for i in keep]
        probs = probs[keep]
        total = probs.sum()
        if not grades or total <= 0:
            raise SamplingError(
                f"labeled-anomaly pool has {n_pool_anomalies} rows; "
                f"no grade in the mix is feasible")
        probs = probs / total
        log.warning("grade_mix: dropped infeasible grades %s "
                    "(only %d labeled anomalies); renormalized over %s",
                    dropped, n_pool_anomalies, grades)
    return np.array(grades, dtype=np.int64), probs


def draw_grades(grade_mix, batch_size, rng, n_pool_anomalies):
    """Vector of batch_size grades drawn i.i.d. from the (effective) mix."""
    grades, probs = effective_grade_mix(grade_mix, n_pool_anomalies)
    return rng.choice(grades, size=batch_size, p=probs)


def sample_batch(unlabeled, anomalies, set_size, batch_size, grade_mix, rng):
    """A batch of independently drawn SetSamples."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    anomalies = _check_pool("labeled-anomaly", anomalies)
    grades = draw_grades(grade_mix, batch_size, rng, anomalies.shape[0])
    return [sample_set(unlabeled, anomalies, set_size, int(g), rng)
            for g in grades]


def stack_batch(batch):
    """Batch list -> (sets (B, k, d), grades (B,)) arrays for the trainer."""
    sets = np.stack([s.points for s in batch])
    grades = np.array([s.grade for s in batch], dtype=np.float64)
    return sets, grades
