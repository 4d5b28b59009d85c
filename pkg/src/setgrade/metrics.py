"""Exact ranking metrics with defined tie handling.

auc_roc is the Mann-Whitney statistic P(s_pos > s_neg) + 0.5 P(tie),
computed by rank-sum with average ranks. auc_pr is non-interpolated
average precision, Sum_k (R_k - R_{k-1}) P_k over descending score
thresholds with tied scores processed as one group.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EvalError


@dataclass
class EvalResult:
    auc_roc: float
    auc_pr: float
    n_pos: int
    n_neg: int


def _check(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.size != labels.size:
        raise EvalError(f"{scores.size} scores vs {labels.size} labels")
    if scores.size == 0:
        raise EvalError("empty input")
    if not np.isfinite(scores).all():
        raise EvalError("scores contain non-finite values")
    if not np.isin(labels, (0, 1)).all():
        raise EvalError("labels must be 0 or 1")
    return scores, labels.astype(np.int64)


def _average_ranks(scores):
    """1-based ranks; tied scores share the mean of their rank range."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc_roc(scores, labels):
    """Probability a positive outranks a negative, ties worth one half."""
    scores, labels = _check(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvalError(f"auc_roc needs both classes; got {n_pos} positives "
                        f"and {n_neg} negatives")
    ranks = _average_ranks(scores)
    rank_sum = ranks[labels == 1].sum()
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_pr(scores, labels):
    """Average precision over descending thresholds, tie groups merged."""
    scores, labels = _check(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise EvalError("auc_pr needs at least one positive")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]

    ap = 0.0
    tp = 0
    seen = 0
    i = 0
    n = scores.size
    while i < n:
        j = i
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        group_pos = int(sorted_labels[i:j + 1].sum())
        tp += group_pos
        seen = j + 1
        if group_pos:
            precision = tp / seen
            ap += precision * (group_pos / n_pos)   # recall increment
        i = j + 1
    return float(ap)


def evaluate(scores, labels):
    """Both metrics plus class counts."""
    scores, labels = _check(scores, labels)
    n_pos = int(labels.sum())
    return EvalResult(auc_roc=auc_roc(scores, labels),
                      auc_pr=auc_pr(scores, labels),
                      n_pos=n_pos, n_neg=labels.size - n_pos)
