"""Tree-based classifiers: a Gini decision tree, extremely randomised trees
and softmax gradient-boosted trees, each exposing ``feature_importances_``."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._tree import Tree, boosted_decision_function, complete_tree, grow_boosting_tree, grow_classifier


def _encode(y):
    classes, encoded = np.unique(y, return_inverse=True)
    if len(classes) < 2:
        raise ValueError("need at least two classes to fit a classifier")
    return classes, encoded.astype(np.int64)


def _resolve_max_features(max_features, n_features):
    if max_features is None:
        return n_features
    if max_features == "sqrt":
        return max(1, int(np.sqrt(n_features)))
    if isinstance(max_features, float):
        return max(1, int(max_features * n_features))
    return max(1, min(int(max_features), n_features))


def _normalise(v):
    total = v.sum()
    return v / total if total > 0 else np.zeros_like(v)


class _TreeClassifierMixin(ClassifierMixin):
    def _check_predict_input(self, X):
        check_is_fitted(self, "classes_")
        X = check_array(X, dtype=np.float64, order="C")
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, model was fitted with {self.n_features_in_}"
            )
        return X

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


class DecisionTree(_TreeClassifierMixin, BaseEstimator):
    """CART classifier with exhaustive Gini splits, grown until pure by default."""

    def __init__(self, max_depth=None, min_samples_split=2):
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, order="C")
        self.classes_, y_idx = _encode(y)
        self.n_features_in_ = X.shape[1]
        depth = -1 if self.max_depth is None else int(self.max_depth)
        *arrays, imp = grow_classifier(
            X, y_idx, len(self.classes_), X.shape[1], int(self.min_samples_split), depth, False, 0
        )
        self.tree_ = Tree(*arrays)
        self.feature_importances_ = _normalise(imp / X.shape[0])
        return self

    def predict_proba(self, X):
        X = self._check_predict_input(X)
        counts = self.tree_.predict_value(X)
        return counts / counts.sum(axis=1, keepdims=True)


class ExtraTrees(_TreeClassifierMixin, BaseEstimator):
    """Extremely randomised trees (no bootstrap, random cut points, Gini).

    ``feature_importances_`` is the sample-weighted Gini decrease per
    feature, averaged over trees and normalised to sum to one.
    """

    def __init__(self, n_estimators=200, max_features="sqrt", min_samples_split=2,
                 max_depth=None, random_state=0):
        self.n_estimators = n_estimators
        self.max_features = max_features
        self.min_samples_split = min_samples_split
        self.max_depth = max_depth
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, order="C")
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        self.classes_, y_idx = _encode(y)
        n, d = X.shape
        self.n_features_in_ = d
        k = _resolve_max_features(self.max_features, d)
        depth = -1 if self.max_depth is None else int(self.max_depth)
        seeds = np.random.default_rng(self.random_state).integers(0, 2**31 - 1, self.n_estimators)
        self.estimators_ = []
        total = np.zeros(d)
        for seed in seeds:
            *arrays, imp = grow_classifier(
                X, y_idx, len(self.classes_), k, int(self.min_samples_split), depth, True, int(seed)
            )
            self.estimators_.append(Tree(*arrays))
            total += imp / n
        self.feature_importances_ = _normalise(total / self.n_estimators)
        return self

    def predict_proba(self, X):
        X = self._check_predict_input(X)
        proba = np.zeros((X.shape[0], len(self.classes_)))
        for tree in self.estimators_:
            counts = tree.predict_value(X)
            proba += counts / counts.sum(axis=1, keepdims=True)
        return proba / len(self.estimators_)


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class GradientBoostedTrees(_TreeClassifierMixin, BaseEstimator):
    """Multiclass gradient boosting with a softmax objective.

    Each round fits one depth-limited regression tree per class to the
    residuals ``onehot(y) - p``; a split's gain is the drop in squared
    error it buys, which for 0/1 class indicators is the node-weighted Gini
    decrease. Leaves take one Newton step, ``(K-1)/K * sum(r) / sum(p(1-p))``.
    ``feature_importances_`` is total split gain per feature, normalised.
    """

    def __init__(self, n_estimators=100, max_depth=3, learning_rate=0.1,
                 min_samples_split=2, random_state=0):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.min_samples_split = min_samples_split
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, order="C")
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if not 0 <= self.max_depth <= 16:
            raise ValueError("max_depth must be in [0, 16]")
        self.classes_, y_idx = _encode(y)
        n, d = X.shape
        K = len(self.classes_)
        self.n_features_in_ = d
        onehot = np.eye(K)[y_idx]
        prior = onehot.mean(axis=0)
        self.base_ = np.log(prior)
        F = np.tile(self.base_, (n, 1))
        order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").astype(np.int64))
        scale = (K - 1) / K
        trees, tree_class = [], []
        importance = np.zeros(d)
        for _ in range(self.n_estimators):
            P = softmax(F)
            for k in range(K):
                r = onehot[:, k] - P[:, k]
                h = P[:, k] * (1.0 - P[:, k])
                *arrays, gain = grow_boosting_tree(
                    X, order, r, h, int(self.max_depth), int(self.min_samples_split), scale
                )
                tree = Tree(*arrays[:4], arrays[4] * self.learning_rate)
                F[:, k] += tree.predict_value(X)
                importance += gain
                trees.append(tree)
                tree_class.append(k)
        self.estimators_ = trees
        self._pack(trees, tree_class)
        self.feature_importances_ = _normalise(importance)
        return self

    def _pack(self, trees, tree_class):
        # prediction runs on complete heap-ordered copies of the trees
        depth = int(self.max_depth)
        packed = [complete_tree(t.feature, t.threshold, t.left, t.right, t.value, depth) for t in trees]
        self._feat, self._thr, self._leaf = (np.ascontiguousarray(np.stack(a)) for a in zip(*packed))
        self._tree_class = np.asarray(tree_class, dtype=np.int64)

    def decision_function(self, X):
        X = self._check_predict_input(X)
        return boosted_decision_function(
            X, self._feat, self._thr, self._leaf, self._tree_class, len(self.classes_), self.base_
        )

    def predict_proba(self, X):
        return softmax(self.decision_function(X))
