"""Context-calibrated anomaly scoring.

A test point's raw set score depends heavily on which companions it is
scored with, so the score is normalized against peers: sample n_contexts
contexts (set_size − 1 pool points each), compute for each the mean set
score of reference pool points placed in that same context, and report
the mean over contexts of (test score − reference baseline). Reference
baselines depend only on the pool, so they are computed once per run and
shared across every test point.

The model enters only through a `score_sets` callable mapping a stacked
(n, set_size, d) array to n scalar scores; `encoder.batch_scorer` adapts
trained parameters, and tests substitute closed-form stubs.

Reference modes: Monte-Carlo (n_refs draws with replacement, context
members excluded) and exhaustive (every pool row enumerated once,
context members included), the latter turning stochastic contracts into
exact oracles.
"""

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, ScoreError


@dataclass
class ContextCache:
    contexts: np.ndarray        # (n_contexts, set_size - 1) pool indices
    baselines: np.ndarray       # (n_contexts,) mean reference score each
    set_size: int
    n_refs: int                 # references per context actually used
    exhaustive: bool


@dataclass
class CalibratedScore:
    index: int
    score: float
    n_contexts: int
    n_refs: int
    context_scores: Optional[np.ndarray] = None   # per-context normalized


@dataclass
class ScoreReport:
    meta: dict
    records: list               # CalibratedScore per test row, input order
    metrics: Optional[dict] = None


def _check_pool(pool, set_size):
    pool = np.ascontiguousarray(pool, dtype=np.float64)
    if pool.ndim != 2:
        raise ConfigError(f"pool must be 2-D, got shape {pool.shape}")
    if set_size < 2:
        raise ConfigError(f"set_size must be >= 2 for context scoring, "
                          f"got {set_size}")
    if pool.shape[0] < set_size - 1:
        raise ConfigError(f"pool has {pool.shape[0]} rows, smaller than a "
                          f"context of {set_size - 1}")
    return pool


def sample_context(pool_size, set_size, rng):
    """Indices of set_size - 1 distinct pool rows."""
    return rng.choice(pool_size, size=set_size - 1, replace=False)


def raw_context_score(score_sets, x, context, pool):
    """Set score of {x} placed with the context's pool rows."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    assembled = np.concatenate([x, pool[context]], axis=0)
    return float(score_sets(assembled[np.newaxis])[0])


def reference_baseline(score_sets, context, pool, n_refs, rng,
                       exhaustive=False):
    """Mean set score of reference pool points in this context.

    Monte-Carlo mode draws n_refs references with replacement from the
    pool minus the context's own rows; exhaustive mode enumerates every
    pool row once (context rows included) for an exact average.
    """
    refs = _reference_indices(context, pool.shape[0], n_refs, rng, exhaustive)
    sets = np.empty((len(refs), len(context) + 1, pool.shape[1]))
    sets[:, 0, :] = pool[refs]
    sets[:, 1:, :] = pool[context]
    scores = score_sets(sets)
    if not np.isfinite(scores).all():
        raise ScoreError("non-finite reference score in context "
                         f"{np.sort(context).tolist()}")
    return float(np.mean(scores))


def _reference_indices(context, pool_size, n_refs, rng, exhaustive):
    if exhaustive:
        return np.arange(pool_size)
    if n_refs < 1:
        raise ConfigError(f"n_refs must be >= 1, got {n_refs}")
    allowed = np.setdiff1d(np.arange(pool_size), context)
    if allowed.size == 0:
        raise ConfigError("pool has no rows outside the context to use "
                          "as references")
    return rng.choice(allowed, size=n_refs, replace=True)


def build_context_cache(score_sets, pool, set_size, n_contexts, n_refs, rng,
                        exhaustive=False):
    """Sample the run's contexts and precompute every reference baseline."""
    pool = _check_pool(pool, set_size)
    if n_contexts < 1:
        raise ConfigError(f"n_contexts must be >= 1, got {n_contexts}")
    contexts = np.stack([sample_context(pool.shape[0], set_size, rng)
                         for _ in range(n_contexts)])
    baselines = np.array([
        reference_baseline(score_sets, ctx, pool, n_refs, rng, exhaustive)
        for ctx in contexts])
    return ContextCache(contexts=contexts, baselines=baselines,
                        set_size=set_size,
                        n_refs=pool.shape[0] if exhaustive else n_refs,
                        exhaustive=exhaustive)


def score_point(score_sets, x, pool, cache, index=0, keep_context_scores=False):
    """Calibrated score: mean over contexts of (test score − baseline)."""
    pool = np.ascontiguousarray(pool, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64).ravel()
    n_contexts = cache.contexts.shape[0]
    sets = np.empty((n_contexts, cache.set_size, pool.shape[1]))
    sets[:, 0, :] = x
    for i, ctx in enumerate(cache.contexts):
        sets[i, 1:, :] = pool[ctx]
    raw = score_sets(sets)
    if not np.isfinite(raw).all():
        bad = int(np.flatnonzero(~np.isfinite(raw))[0])
        raise ScoreError(f"non-finite test score in context "
                         f"{np.sort(cache.contexts[bad]).tolist()}")
    normalized = raw - cache.baselines
    return CalibratedScore(
        index=index, score=float(normalized.mean()),
        n_contexts=n_contexts, n_refs=cache.n_refs,
        context_scores=normalized if keep_context_scores else None)


def score_dataset(score_sets, test, pool, set_size, n_contexts, n_refs, rng,
                  exhaustive=False, meta=None):
    """Score every test row against one shared context/baseline cache."""
    test = np.ascontiguousarray(test, dtype=np.float64)
    if test.ndim != 2:
        raise ConfigError(f"test data must be 2-D, got shape {test.shape}")
    pool = _check_pool(pool, set_size)
    if test.size and test.shape[1] != pool.shape[1]:
        raise ConfigError(f"test rows have dim {test.shape[1]}, "
                          f"pool rows have dim {pool.shape[1]}")
    cache = build_context_cache(score_sets, pool, set_size, n_contexts,
                                n_refs, rng, exhaustive)
    records = [score_point(score_sets, test[i], pool, cache, index=i)
               for i in range(test.shape[0])]
    report_meta = {"set_size": set_size, "n_contexts": n_contexts,
                   "n_refs": cache.n_refs, "exhaustive": exhaustive,
                   "n_test": test.shape[0], "n_pool": pool.shape[0]}
    if meta:
        report_meta.update(meta)
    return ScoreReport(meta=report_meta, records=records)


def scores_array(report):
    """Calibrated scores in input order as a 1-D array."""
    return np.array([r.score for r in report.records])


def write_score_report(report, path, labels=None):
    """Line-delimited report: meta record, per-point records, metrics last."""
    if labels is not None:
        labels = np.asarray(labels).ravel()
        if labels.size != len(report.records):
            raise ConfigError(f"{labels.size} labels for "
                              f"{len(report.records)} score records")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"meta": report.meta}, sort_keys=True) + "\n")
        for i, rec in enumerate(report.records):
            row = {"index": rec.index, "score": rec.score}
            if labels is not None:
                row["label"] = int(labels[i])
            fh.write(json.dumps(row, sort_keys=True) + "\n")
        if report.metrics is not None:
            fh.write(json.dumps({"metrics": report.metrics}, sort_keys=True)
                     + "\n")


def load_score_report(path):
    """Inverse of write_score_report; returns (meta, rows, metrics)."""
    meta, rows, metrics = None, [], None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            record = json.loads(line)
            if "meta" in record:
                meta = record["meta"]
            elif "metrics" in record:
                metrics = record["metrics"]
            else:
                rows.append(record)
    return meta, rows, metrics
