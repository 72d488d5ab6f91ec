"""Scoring functions used for model selection and final evaluation.

Regression models are scored with the coefficient of determination (R2),
classification models with F1 (macro-averaged one-vs-rest for more than
two classes) and accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, UndefinedScoreError


@dataclass(frozen=True)
class ConfusionCounts:
    """One-vs-rest confusion counts for a single class."""

    tp: int
    fp: int
    fn: int
    tn: int

    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def r2_score(y, y_hat) -> float:
    """R2 = 1 - sum((y - y_hat)^2) / sum((y - mean(y))^2).

    At most 1, may be negative. Raises UndefinedScoreError when y is
    constant (zero denominator) or has fewer than two values.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.shape != y_hat.shape:
        raise ShapeError(f"r2_score: length mismatch {y.shape} vs {y_hat.shape}")
    if y.size < 2:
        raise UndefinedScoreError("r2_score needs at least two observations")
    with np.errstate(over="ignore", invalid="ignore"):
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        if ss_tot == 0.0:
            raise UndefinedScoreError("r2_score undefined for constant targets")
        ss_res = float(np.sum((y - y_hat) ** 2))
        return 1.0 - ss_res / ss_tot


def f1_binary(counts: ConfusionCounts) -> float:
    """Harmonic mean of precision TP/(TP+FP) and recall TP/(TP+FN).

    Convention: with TP=0 but some FP or FN activity the score is 0;
    with TP=FP=FN=0 the score is undefined and an error is raised.
    """
    tp, fp, fn = counts.tp, counts.fp, counts.fn
    if tp == 0:
        if fp == 0 and fn == 0:
            raise UndefinedScoreError("f1 undefined: no positive predictions or labels")
        return 0.0
    ppv = tp / (tp + fp)
    tpr = tp / (tp + fn)
    return 2.0 * ppv * tpr / (ppv + tpr)


def confusion_matrix(y_true, y_pred, num_classes: int) -> np.ndarray:
    """num_classes x num_classes matrix; rows are true labels, columns predictions."""
    y_true = np.asarray(y_true, dtype=np.int64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.int64).ravel()
    if y_true.shape != y_pred.shape:
        raise ShapeError("confusion_matrix: length mismatch")
    if y_true.size == 0:
        raise UndefinedScoreError("confusion_matrix: empty input")
    if np.any((y_true < 0) | (y_true >= num_classes)):
        raise ShapeError("confusion_matrix: true label out of range")
    if np.any((y_pred < 0) | (y_pred >= num_classes)):
        raise ShapeError("confusion_matrix: predicted label out of range")
    mat = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(mat, (y_true, y_pred), 1)
    return mat


def class_counts(confusion: np.ndarray, cls: int) -> ConfusionCounts:
    """One-vs-rest counts for class `cls` extracted from a confusion matrix."""
    confusion = np.asarray(confusion, dtype=np.int64)
    tp = int(confusion[cls, cls])
    fp = int(confusion[:, cls].sum() - tp)
    fn = int(confusion[cls, :].sum() - tp)
    tn = int(confusion.sum() - tp - fp - fn)
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def f1_multiclass(confusion: np.ndarray, averaging: str = "macro") -> float:
    """Unweighted mean of the per-class one-vs-rest F1 values.

    A class with no activity at all (tp=fp=fn=0) contributes 0.
    """
    if averaging != "macro":
        raise ValueError(f"unsupported averaging: {averaging!r}")
    confusion = np.asarray(confusion, dtype=np.int64)
    if confusion.size == 0 or confusion.ndim != 2 or confusion.shape[0] != confusion.shape[1]:
        raise UndefinedScoreError("f1_multiclass needs a square, nonempty confusion matrix")
    if confusion.shape[0] < 2:
        raise UndefinedScoreError("f1_multiclass needs at least two classes")
    scores = []
    for cls in range(confusion.shape[0]):
        counts = class_counts(confusion, cls)
        try:
            scores.append(f1_binary(counts))
        except UndefinedScoreError:
            scores.append(0.0)
    return float(np.mean(scores))


def f1_labels(y_true, y_pred, num_classes: int) -> float:
    """Macro F1 straight from label vectors."""
    return f1_multiclass(confusion_matrix(y_true, y_pred, num_classes))


def accuracy(y, y_hat) -> float:
    """Fraction of exact label matches."""
    y = np.asarray(y).ravel()
    y_hat = np.asarray(y_hat).ravel()
    if y.shape != y_hat.shape:
        raise ShapeError("accuracy: length mismatch")
    if y.size == 0:
        raise UndefinedScoreError("accuracy: empty input")
    return float(np.mean(y == y_hat))
