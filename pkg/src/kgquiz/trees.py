"""Regression tree with squared-error splitting, the base learner for the
forest and boosting models.

Split search is vectorized per feature with prefix sums, picks the threshold
with the largest squared-error reduction (first feature, lowest threshold on
ties), and records the per-feature gain totals for importance reporting.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass
class _Node:
    value: float
    feature: int = -1
    threshold: float = 0.0
    left: Optional["_Node"] = None
    right: Optional["_Node"] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def _best_split_for_feature(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """Best (gain, threshold) splitting one feature column, or None."""
    n = len(y)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ys = y[order]
    csum = np.cumsum(ys)
    csq = np.cumsum(ys * ys)
    total_sum = csum[-1]
    total_sq = csq[-1]

    # Candidate boundary after position i (0-based), keeping both sides >= min_leaf
    # and never splitting between equal feature values.
    positions = np.arange(min_leaf - 1, n - min_leaf)
    if len(positions) == 0:
        return None
    valid = xs[positions] != xs[positions + 1]
    positions = positions[valid]
    if len(positions) == 0:
        return None

    left_n = positions + 1.0
    right_n = n - left_n
    left_sum = csum[positions]
    left_sq = csq[positions]
    sse_left = left_sq - left_sum**2 / left_n
    sse_right = (total_sq - left_sq) - (total_sum - left_sum) ** 2 / right_n
    sse_parent = total_sq - total_sum**2 / n
    gains = sse_parent - (sse_left + sse_right)

    best = int(np.argmax(gains))
    if gains[best] <= 1e-12:
        return None
    threshold = (xs[positions[best]] + xs[positions[best] + 1]) / 2.0
    return float(gains[best]), threshold


class DecisionTreeRegressor:
    """CART-style regressor predicting leaf means.

    ``max_features`` limits the columns examined per split (sampled with the
    provided rng); ``split_gains`` accumulates squared-error reduction per
    feature over the whole tree.
    """

    def __init__(
        self,
        max_depth: int | None = None,
        min_samples_leaf: int = 1,
        min_samples_split: int = 2,
        max_features: int | None = None,
        rng: np.random.Generator | None = None,
    ):
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.rng = rng
        self._root: _Node | None = None
        self.split_gains: dict[int, float] = {}
        self.n_features = 0

    def fit(self, X: np.ndarray, y: np.ndarray) -> "DecisionTreeRegressor":
        X = np.asarray(X, float)
        y = np.asarray(y, float)
        self.n_features = X.shape[1]
        self.split_gains = {}
        self._root = self._grow(X, y, depth=0)
        return self

    def _grow(self, X: np.ndarray, y: np.ndarray, depth: int) -> _Node:
        node = _Node(value=float(y.mean()))
        n = len(y)
        if (
            n < self.min_samples_split
            or n < 2 * self.min_samples_leaf
            or (self.max_depth is not None and depth >= self.max_depth)
            or np.all(y == y[0])
        ):
            return node

        if self.max_features is not None and self.max_features < self.n_features:
            if self.rng is None:
                raise ValueError("max_features requires an rng")
            feature_ids = np.sort(
                self.rng.choice(self.n_features, size=self.max_features, replace=False)
            )
        else:
            feature_ids = np.arange(self.n_features)

        best_gain = 0.0
        best_feature = -1
        best_threshold = 0.0
        for feature in feature_ids:
            found = _best_split_for_feature(X[:, feature], y, self.min_samples_leaf)
            if found is None:
                continue
            gain, threshold = found
            if gain > best_gain + 1e-15:
                best_gain, best_feature, best_threshold = gain, int(feature), threshold
        if best_feature < 0:
            return node

        mask = X[:, best_feature] <= best_threshold
        node.feature = best_feature
        node.threshold = best_threshold
        self.split_gains[best_feature] = self.split_gains.get(best_feature, 0.0) + best_gain
        node.left = self._grow(X[mask], y[mask], depth + 1)
        node.right = self._grow(X[~mask], y[~mask], depth + 1)
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        if self._root is None:
            raise RuntimeError("tree is not fitted")
        X = np.asarray(X, float)
        return np.array([self._predict_one(row) for row in X])

    def _predict_one(self, row: np.ndarray) -> float:
        node = self._root
        while not node.is_leaf:
            node = node.left if row[node.feature] <= node.threshold else node.right
        return node.value
