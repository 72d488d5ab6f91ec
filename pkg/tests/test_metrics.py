import numpy as np
import pytest
from hypothesis import given, strategies as st

from archsearch.errors import ShapeError, UndefinedScoreError
from archsearch.metrics import (
    ConfusionCounts,
    accuracy,
    class_counts,
    confusion_matrix,
    f1_binary,
    f1_labels,
    f1_multiclass,
    r2_score,
)


class TestR2:
    def test_perfect_fit(self):
        y = [1.0, 2.0, 3.0]
        assert r2_score(y, y) == 1.0

    def test_mean_predictor_scores_zero(self):
        y = np.array([1.0, 2.0, 3.0])
        assert r2_score(y, np.full(3, y.mean())) == pytest.approx(0.0, abs=1e-12)

    def test_hand_computed_example(self):
        # 1 - 0.5/2 = 0.75
        assert r2_score([0, 1, 2], [0.5, 1, 1.5]) == pytest.approx(0.75, abs=1e-12)

    def test_can_be_negative(self):
        assert r2_score([0, 1, 2], [2, 2, -2]) < 0

    def test_constant_targets_rejected(self):
        with pytest.raises(UndefinedScoreError):
            r2_score([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_too_short(self):
        with pytest.raises(UndefinedScoreError):
            r2_score([1.0], [1.0])

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            r2_score([1.0, 2.0], [1.0])

    @given(st.permutations(range(6)))
    def test_permutation_invariance(self, perm):
        y = np.array([0.0, 1.0, 4.0, 2.0, -1.0, 3.0])
        y_hat = np.array([0.5, 1.5, 3.0, 2.5, 0.0, 2.0])
        p = np.array(perm)
        assert r2_score(y[p], y_hat[p]) == pytest.approx(r2_score(y, y_hat), abs=1e-12)

    def test_one_iff_exact(self, rng):
        y = rng.normal(size=20)
        y_hat = y.copy()
        assert r2_score(y, y_hat) == pytest.approx(1.0, abs=1e-12)
        y_hat[3] += 0.1
        assert r2_score(y, y_hat) < 1.0 - 1e-12


class TestF1Binary:
    def test_perfect(self):
        assert f1_binary(ConfusionCounts(tp=10, fp=0, fn=0, tn=5)) == 1.0

    def test_hand_computed(self):
        # PPV = TPR = 0.5 -> F1 = 0.5
        assert f1_binary(ConfusionCounts(tp=1, fp=1, fn=1, tn=0)) == pytest.approx(0.5, abs=1e-12)

    def test_zero_tp_convention(self):
        assert f1_binary(ConfusionCounts(tp=0, fp=3, fn=2, tn=1)) == 0.0

    def test_undefined(self):
        with pytest.raises(UndefinedScoreError):
            f1_binary(ConfusionCounts(tp=0, fp=0, fn=0, tn=7))

    @given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
    def test_bounded(self, tp, fp, fn):
        counts = ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=0)
        try:
            score = f1_binary(counts)
        except UndefinedScoreError:
            assert tp == fp == fn == 0
            return
        assert 0.0 <= score <= 1.0

    def test_harmonic_mean_identity(self):
        counts = ConfusionCounts(tp=6, fp=2, fn=3, tn=1)
        ppv = 6 / 8
        tpr = 6 / 9
        assert f1_binary(counts) == pytest.approx(2 * ppv * tpr / (ppv + tpr), abs=1e-15)


class TestF1Multiclass:
    def test_diagonal_confusion(self):
        assert f1_multiclass(np.diag([4, 2, 6])) == 1.0

    def test_hand_computed_three_class(self):
        confusion = np.array([[2, 0, 0], [0, 1, 1], [0, 1, 1]])
        assert f1_multiclass(confusion) == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_binary_reduces_to_macro_of_both_sides(self):
        confusion = np.array([[8, 2], [1, 9]])
        f1_a = f1_binary(class_counts(confusion, 0))
        f1_b = f1_binary(class_counts(confusion, 1))
        assert f1_multiclass(confusion) == pytest.approx((f1_a + f1_b) / 2, abs=1e-15)

    def test_absent_class_contributes_zero(self):
        confusion = np.array([[5, 0, 0], [0, 5, 0], [0, 0, 0]])
        assert f1_multiclass(confusion) == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(UndefinedScoreError):
            f1_multiclass(np.zeros((0, 0)))

    def test_single_class_rejected(self):
        with pytest.raises(UndefinedScoreError):
            f1_multiclass(np.array([[3]]))


class TestAccuracyAndConfusion:
    def test_all_correct(self):
        assert accuracy([0, 1, 2], [0, 1, 2]) == 1.0

    def test_none_correct(self):
        assert accuracy([0, 0], [1, 1]) == 0.0

    def test_three_of_four(self):
        assert accuracy([1, 0, 1, 1], [1, 0, 1, 0]) == 0.75

    def test_empty_rejected(self):
        with pytest.raises(UndefinedScoreError):
            accuracy([], [])

    def test_accuracy_equals_trace_over_m(self, rng):
        y = rng.integers(0, 3, size=40)
        y_hat = rng.integers(0, 3, size=40)
        confusion = confusion_matrix(y, y_hat, 3)
        assert accuracy(y, y_hat) == pytest.approx(np.trace(confusion) / 40, abs=1e-15)
        assert confusion.sum() == 40

    def test_f1_labels_matches_manual_confusion(self, rng):
        y = rng.integers(0, 4, size=60)
        y_hat = rng.integers(0, 4, size=60)
        assert f1_labels(y, y_hat, 4) == pytest.approx(
            f1_multiclass(confusion_matrix(y, y_hat, 4)), abs=1e-15
        )

    def test_label_out_of_range(self):
        with pytest.raises(ShapeError):
            confusion_matrix([0, 5], [0, 1], 3)
