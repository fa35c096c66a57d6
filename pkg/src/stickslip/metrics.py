"""Evaluation metrics: MSE, dynamic time warping, confusion matrix, recall.

Severity classes are integers 1 through 4 throughout.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from .exceptions import ShapeError

N_CLASSES = 4


def _as_series(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ShapeError(f"{name} must be a non-empty 1-d series, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite values")
    return arr


def mse(true_values, pred_values) -> float:
    t = _as_series(true_values, "true_values")
    p = _as_series(pred_values, "pred_values")
    if t.shape != p.shape:
        raise ShapeError(f"length mismatch {t.shape} vs {p.shape}")
    d = t - p
    return float(np.mean(d * d))


def dtw(a, b) -> float:
    """Dynamic time warping distance with absolute-difference local cost.

    Classic O(n*m) dynamic program over monotone alignments; no slope or
    band constraint.  Both endpoints are matched.
    """
    a = _as_series(a, "a")
    b = _as_series(b, "b")
    n, m = a.size, b.size
    prev = np.full(m + 1, np.inf)
    prev[0] = 0.0
    for i in range(1, n + 1):
        ai = a[i - 1]
        cur = np.empty(m + 1)
        cur[0] = np.inf
        left = np.inf
        for j in range(1, m + 1):
            best = prev[j]
            if left < best:
                best = left
            if prev[j - 1] < best:
                best = prev[j - 1]
            left = abs(ai - b[j - 1]) + best
            cur[j] = left
        prev = cur
    return float(prev[m])


def normalized_dtw(true_ssi, pred_ssi) -> float:
    """DTW between chronological per-sequence series, divided by length.

    Both series must hold one value per sequence of the same well, in
    chronological order, so lengths must match.
    """
    t = _as_series(true_ssi, "true_ssi")
    p = _as_series(pred_ssi, "pred_ssi")
    if t.size != p.size:
        raise ShapeError(f"length mismatch: {t.size} vs {p.size}")
    return dtw(t, p) / t.size


def _as_classes(x, name: str) -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-d")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ShapeError(f"{name} must be integer classes")
    if arr.size and (arr.min() < 1 or arr.max() > N_CLASSES):
        raise ShapeError(f"{name} values must lie in [1, {N_CLASSES}]")
    return arr


def confusion_matrix(true_classes, pred_classes):
    """Counts and row-normalized rates over the four severity classes.

    Returns
    -------
    counts : ndarray of int, shape (4, 4)
        counts[i, j] is the number of samples with true class i+1
        predicted as class j+1.
    rates : ndarray of float, shape (4, 4)
        Rows normalized by the true-class count; all-zero rows stay zero.
    """
    t = _as_classes(true_classes, "true_classes")
    p = _as_classes(pred_classes, "pred_classes")
    if t.shape != p.shape:
        raise ShapeError(f"length mismatch {t.shape} vs {p.shape}")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for ti, pi in zip(t, p):
        counts[ti - 1, pi - 1] += 1
    rates = np.zeros((N_CLASSES, N_CLASSES), dtype=np.float64)
    row_sums = counts.sum(axis=1)
    for i in range(N_CLASSES):
        if row_sums[i] > 0:
            rates[i] = counts[i] / row_sums[i]
    return counts, rates


def severe_recall(true_classes, pred_classes) -> Optional[float]:
    """Fraction of true class-4 samples predicted as class 4.

    Returns ``None`` when no true class-4 sample exists.
    """
    t = _as_classes(true_classes, "true_classes")
    p = _as_classes(pred_classes, "pred_classes")
    if t.shape != p.shape:
        raise ShapeError(f"length mismatch {t.shape} vs {p.shape}")
    severe = t == N_CLASSES
    n_severe = int(severe.sum())
    if n_severe == 0:
        return None
    return float(np.sum(p[severe] == N_CLASSES) / n_severe)
