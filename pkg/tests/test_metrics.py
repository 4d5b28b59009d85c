"""Ranking metrics against brute-force oracles and invariance properties."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from setgrade import metrics
from setgrade.errors import EvalError


def brute_auc_roc(scores, labels):
    """O(n^2) pairwise definition: wins plus half-credit ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (wins + 0.5 * ties) / (pos.size * neg.size)


def brute_auc_pr(scores, labels):
    """Threshold-mask definition of average precision."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = labels.sum()
    ap, prev_recall = 0.0, 0.0
    for t in np.unique(scores)[::-1]:
        predicted = scores >= t
        tp = labels[predicted].sum()
        recall = tp / n_pos
        ap += (recall - prev_recall) * (tp / predicted.sum())
        prev_recall = recall
    return ap


def _mixed_labels(rng, n):
    labels = rng.integers(0, 2, size=n)
    if labels.sum() == 0:
        labels[rng.integers(n)] = 1
    if labels.sum() == n:
        labels[rng.integers(n)] = 0
    return labels


class TestAucRoc:
    def test_perfect_separation(self):
        assert metrics.auc_roc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0

    def test_anti_separation(self):
        assert metrics.auc_roc([0.9, 0.8, 0.1, 0.2], [0, 0, 1, 1]) == 0.0

    def test_three_of_four_pairs(self):
        assert metrics.auc_roc([0.8, 0.6, 0.4, 0.2], [1, 0, 1, 0]) == 0.75

    def test_all_tied_is_half(self):
        assert metrics.auc_roc([1.0, 1.0, 1.0], [1, 0, 1]) == 0.5

    def test_single_class_rejected(self):
        with pytest.raises(EvalError, match="both classes"):
            metrics.auc_roc([0.1, 0.2], [1, 1])

    def test_matches_brute_force_exactly_with_ties(self):
        rng = np.random.default_rng(0)
        for trial in range(300):
            n = int(rng.integers(2, 201))
            labels = _mixed_labels(rng, n)
            # coarse quantization injects plenty of exact ties
            scores = np.round(rng.normal(size=n), 1)
            assert metrics.auc_roc(scores, labels) == \
                brute_auc_roc(scores, labels)


class TestAucPr:
    def test_perfect_ranking(self):
        assert metrics.auc_pr([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_all_tied_gives_prevalence(self):
        assert metrics.auc_pr([0.5] * 5, [1, 0, 1, 0, 0]) == pytest.approx(0.4)

    def test_stepthrough_example(self):
        value = metrics.auc_pr([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0])
        assert value == pytest.approx(1.0 * 0.5 + (2.0 / 3.0) * 0.5, abs=1e-15)

    def test_no_positives_rejected(self):
        with pytest.raises(EvalError, match="positive"):
            metrics.auc_pr([0.1, 0.2], [0, 0])

    def test_matches_brute_force_with_ties(self):
        rng = np.random.default_rng(1)
        for trial in range(300):
            n = int(rng.integers(2, 151))
            labels = _mixed_labels(rng, n)
            scores = np.round(rng.normal(size=n), 1)
            assert metrics.auc_pr(scores, labels) == \
                pytest.approx(brute_auc_pr(scores, labels), abs=1e-12)


@st.composite
def scored_instances(draw):
    n = draw(st.integers(min_value=2, max_value=40))
    scores = draw(st.lists(
        st.floats(min_value=-5, max_value=5).map(lambda v: round(v, 2)),
        min_size=n, max_size=n))
    labels = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)
                  .filter(lambda ls: 0 < sum(ls) < len(ls)))
    return np.array(scores), np.array(labels)


class TestInvariances:
    @settings(max_examples=80, deadline=None)
    @given(scored_instances())
    def test_doubling_scores_changes_nothing(self, instance):
        scores, labels = instance
        assert metrics.auc_roc(scores * 2, labels) == \
            metrics.auc_roc(scores, labels)
        assert metrics.auc_pr(scores * 2, labels) == \
            metrics.auc_pr(scores, labels)

    @settings(max_examples=80, deadline=None)
    @given(scored_instances())
    def test_strictly_increasing_transform(self, instance):
        # arctan is injective on these quantized scores: 0.01 spacing
        # stays well above float resolution of the transform
        scores, labels = instance
        warped = np.arctan(scores)
        assert metrics.auc_roc(warped, labels) == \
            pytest.approx(metrics.auc_roc(scores, labels), abs=1e-12)
        assert metrics.auc_pr(warped, labels) == \
            pytest.approx(metrics.auc_pr(scores, labels), abs=1e-12)

    @settings(max_examples=80, deadline=None)
    @given(scored_instances(), st.randoms(use_true_random=False))
    def test_joint_permutation(self, instance, pyrandom):
        scores, labels = instance
        perm = list(range(len(scores)))
        pyrandom.shuffle(perm)
        perm = np.array(perm)
        assert metrics.auc_roc(scores[perm], labels[perm]) == \
            metrics.auc_roc(scores, labels)
        assert metrics.auc_pr(scores[perm], labels[perm]) == \
            metrics.auc_pr(scores, labels)


class TestEvaluate:
    def test_bundles_counts(self):
        result = metrics.evaluate([0.9, 0.1, 0.8, 0.2], [1, 0, 1, 0])
        assert result.auc_roc == 1.0
        assert result.auc_pr == 1.0
        assert (result.n_pos, result.n_neg) == (2, 2)

    def test_length_mismatch(self):
        with pytest.raises(EvalError):
            metrics.evaluate([0.5], [1, 0])

    def test_nonfinite_scores_rejected(self):
        with pytest.raises(EvalError, match="finite"):
            metrics.evaluate([np.nan, 0.2], [1, 0])
