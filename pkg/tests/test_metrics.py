import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from disorder_unet.errors import UndefinedMetricError
from disorder_unet.metrics import (
    UNKNOWN,
    Counts,
    ScoredResidues,
    aggregate,
    binarize,
    confusion,
    f1,
    mcc_binary,
    roc_auc,
)


def pairwise_auc(scores, labels):
    """O(n^2) comparison of every positive/negative pair, ties count 1/2."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def loop_confusion(scores, labels, threshold=0.5):
    tp = fp = tn = fn = 0
    for s, l in zip(scores, labels):
        if l == UNKNOWN:
            continue
        pred = s > threshold
        if pred and l == 1:
            tp += 1
        elif pred:
            fp += 1
        elif l == 1:
            fn += 1
        else:
            tn += 1
    return Counts(tp, fp, tn, fn)


class TestBinarize:
    def test_strict_threshold(self):
        assert binarize(0.5) == 0
        assert binarize(0.500001) == 1
        assert binarize(0.0) == 0 and binarize(1.0) == 1

    def test_array(self):
        np.testing.assert_array_equal(binarize(np.array([0.2, 0.5, 0.7])), [0, 0, 1])


class TestConfusion:
    def test_unknown_excluded(self):
        c = confusion(ScoredResidues([0.9, 0.1, 0.9], [1, 0, UNKNOWN]))
        assert c == Counts(tp=1, fp=0, tn=1, fn=0)

    def test_all_unknown(self):
        with pytest.raises(UndefinedMetricError):
            confusion(ScoredResidues([0.2, 0.3], [UNKNOWN, UNKNOWN]))

    def test_loop_oracle(self, rng):
        scores = rng.random(50)
        labels = rng.choice([0, 1, UNKNOWN], 50)
        assert confusion(ScoredResidues(scores, labels)) == loop_confusion(scores, labels)


class TestMccF1:
    def test_perfect(self):
        c = Counts(tp=2, fp=0, tn=2, fn=0)
        assert mcc_binary(c) == 1.0 and f1(c) == 1.0

    def test_inverted(self):
        c = Counts(tp=0, fp=2, tn=0, fn=2)
        assert mcc_binary(c) == -1.0 and f1(c) == 0.0

    def test_hand(self):
        c = Counts(tp=3, fp=1, tn=4, fn=2)
        assert f1(c) == pytest.approx(2 / 3, abs=1e-15)
        assert mcc_binary(c) == pytest.approx(10 / np.sqrt(4 * 5 * 5 * 6), abs=1e-15)
        assert mcc_binary(c) == pytest.approx(0.4082, abs=1e-4)

    def test_degenerate_is_zero(self):
        assert mcc_binary(Counts(tp=3, fp=2, tn=0, fn=0)) == 0.0
        assert f1(Counts(tp=0, fp=0, tn=5, fn=0)) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
    def test_ranges(self, tp, fp, tn, fn):
        c = Counts(tp, fp, tn, fn)
        assert -1.0 - 1e-12 <= mcc_binary(c) <= 1.0 + 1e-12
        assert 0.0 <= f1(c) <= 1.0


class TestAUC:
    def test_worked_example(self):
        s = ScoredResidues([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
        assert roc_auc(s) == 0.75
        assert pairwise_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75

    def test_perfect(self):
        assert roc_auc(ScoredResidues([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])) == 1.0

    def test_all_ties(self):
        assert roc_auc(ScoredResidues([0.3] * 6, [0, 1, 0, 1, 1, 0])) == 0.5

    def test_single_class(self):
        with pytest.raises(UndefinedMetricError, match="undefined AUC"):
            roc_auc(ScoredResidues([0.1, 0.9], [1, 1]))

    def test_unknown_scores_ignored(self):
        a = ScoredResidues([0.1, 0.9, 0.5, 0.3], [0, 1, UNKNOWN, 1])
        b = ScoredResidues([0.1, 0.9, 0.0, 0.3], [0, 1, UNKNOWN, 1])
        assert roc_auc(a) == roc_auc(b)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 200), st.integers(0, 2**32 - 1))
    def test_matches_pairwise_oracle(self, n, seed):
        rng = np.random.default_rng(seed)
        scores = np.round(rng.random(n), int(rng.integers(1, 4)))  # rounding forces ties
        labels = rng.integers(0, 2, n)
        labels[0], labels[1] = 0, 1
        assert abs(roc_auc(ScoredResidues(scores, labels)) - pairwise_auc(scores, labels)) < 1e-12

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 100), st.integers(0, 2**32 - 1))
    def test_complement(self, n, seed):
        rng = np.random.default_rng(seed)
        scores = np.round(rng.random(n), 2)
        labels = rng.integers(0, 2, n)
        labels[0], labels[1] = 0, 1
        a = roc_auc(ScoredResidues(scores, labels))
        b = roc_auc(ScoredResidues(1 - scores, labels))
        assert a + b == 1.0

    def test_monotone_transforms(self, rng):
        scores = rng.random(80)
        labels = rng.integers(0, 2, 80)
        base = roc_auc(ScoredResidues(scores, labels))
        assert roc_auc(ScoredResidues(scores**3, labels)) == base
        assert roc_auc(ScoredResidues(1 / (1 + np.exp(-(5 * scores - 2))), labels)) == base


class TestAggregate:
    def test_single_sequence(self, rng):
        t = ScoredResidues(rng.random(30), rng.integers(0, 2, 30), "a")
        agg = aggregate([t])
        assert agg["pooled"].auc == agg["per_target"].auc
        assert agg["pooled"].mcc == agg["per_target"].mcc
        assert agg["pooled"].f1 == agg["per_target"].f1

    def test_identical_multisets(self, rng):
        s, l = rng.random(20), rng.integers(0, 2, 20)
        l[:2] = [0, 1]
        perm = rng.permutation(20)
        a = ScoredResidues(s, l, "a")
        b = ScoredResidues(s[perm], l[perm], "b")
        assert aggregate([a, b], "pooled").auc == pytest.approx(roc_auc(a), abs=1e-15)

    def test_pooled_differs_from_mean(self):
        targets = [
            ScoredResidues([0.9, 0.8, 0.1], [1, 1, 0], "a"),
            ScoredResidues([0.2, 0.3, 0.4, 0.6], [0, 1, 0, 1], "b"),
            ScoredResidues([0.7, 0.6], [0, 1], "c"),
        ]
        agg = aggregate(targets)
        pooled_scores = [0.9, 0.8, 0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.6]
        pooled_labels = [1, 1, 0, 0, 1, 0, 1, 0, 1]
        assert agg["pooled"].auc == pytest.approx(pairwise_auc(pooled_scores, pooled_labels), abs=1e-15)
        per = [pairwise_auc([0.9, 0.8, 0.1], [1, 1, 0]), pairwise_auc([0.2, 0.3, 0.4, 0.6], [0, 1, 0, 1]),
               pairwise_auc([0.7, 0.6], [0, 1])]
        assert agg["per_target"].auc == pytest.approx(np.mean(per), abs=1e-15)
        assert agg["pooled"].auc != pytest.approx(agg["per_target"].auc)

    def test_per_target_skips_undefined_auc(self):
        targets = [ScoredResidues([0.9, 0.1], [1, 0], "a"), ScoredResidues([0.9, 0.8], [1, 1], "b")]
        assert aggregate(targets, "per_target").auc == 1.0
