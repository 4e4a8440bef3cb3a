"""Evaluation metrics: micro/macro F1 and area under the PR curve."""

from __future__ import annotations

import numpy as np


def _check_pair(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred must have equal length")
    if y_true.size == 0:
        raise ValueError("inputs must be nonempty")
    return y_true, y_pred


def micro_f1(y_true, y_pred) -> float:
    """Micro-averaged F1; equals global accuracy for single-label labels."""
    y_true, y_pred = _check_pair(y_true, y_pred)
    return float(np.count_nonzero(y_true == y_pred)) / y_true.size


def macro_f1(y_true, y_pred) -> float:
    """Unweighted mean of per-class F1 scores.

    Classes absent from both vectors are excluded; any zero denominator
    (precision, recall, or their sum) contributes an F1 of 0 for robustness
    on imbalanced folds.
    """
    y_true, y_pred = _check_pair(y_true, y_pred)
    scores = []
    for k in np.union1d(y_true, y_pred):
        tp = np.count_nonzero((y_true == k) & (y_pred == k))
        fp = np.count_nonzero((y_true != k) & (y_pred == k))
        fn = np.count_nonzero((y_true == k) & (y_pred != k))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
        scores.append(f1)
    return float(np.mean(scores))


def aupr(y_true_binary, scores) -> float:
    """Area under the precision-recall curve by step-wise summation.

    Thresholds sweep the unique scores in descending order (tied scores
    enter as one group); each step adds (recall delta) * precision, the
    average-precision form without trapezoidal interpolation.
    """
    y = np.asarray(y_true_binary, dtype=np.int64)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape:
        raise ValueError("labels and scores must have equal length")
    if y.size == 0:
        raise ValueError("inputs must be nonempty")
    n_pos = int(np.count_nonzero(y == 1))
    if n_pos == 0 or n_pos == y.size:
        raise ValueError("need at least one positive and one negative label")

    order = np.argsort(-s, kind="stable")
    y_ord = y[order]
    s_ord = s[order]
    # Last index of each tied-score group.
    group_ends = np.append(np.nonzero(np.diff(s_ord))[0], y.size - 1)
    tp = np.cumsum(y_ord)[group_ends]
    predicted_pos = group_ends + 1
    precision = tp / predicted_pos
    recall = tp / n_pos
    recall_prev = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - recall_prev) * precision))
