"""Regression evaluation metrics, self-contained.

Rank correlation uses average ranks for ties and is computed as the Pearson
correlation of the two rank vectors.
"""

from __future__ import annotations

import logging

import numpy as np

logger = logging.getLogger(__name__)


def rmse(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true = np.asarray(y_true, float)
    y_pred = np.asarray(y_pred, float)
    return float(np.sqrt(np.mean((y_pred - y_true) ** 2)))


def mae(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true = np.asarray(y_true, float)
    y_pred = np.asarray(y_pred, float)
    return float(np.mean(np.abs(y_pred - y_true)))


def r2_score(y_true: np.ndarray, y_pred: np.ndarray) -> float | None:
    """1 - SSres/SStot with SStot taken around the mean of ``y_true``.

    Returns None (with a warning) when the target is constant.
    """
    y_true = np.asarray(y_true, float)
    y_pred = np.asarray(y_pred, float)
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        logger.warning("constant target: coefficient of determination undefined")
        return None
    ss_res = float(np.sum((y_true - y_pred) ** 2))
    return 1.0 - ss_res / ss_tot


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    values = np.asarray(values, float)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), float)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def pearson(a: np.ndarray, b: np.ndarray) -> float | None:
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    da = a - a.mean()
    db = b - b.mean()
    denom = float(np.sqrt(np.sum(da**2) * np.sum(db**2)))
    if denom == 0.0:
        logger.warning("constant vector: correlation undefined")
        return None
    return float(np.sum(da * db) / denom)


def spearman(a: np.ndarray, b: np.ndarray) -> float | None:
    """Rank correlation; None when either vector is constant."""
    return pearson(average_ranks(a), average_ranks(b))
