"""The six classifier families, all as scikit-learn compatible estimators."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numba import njit
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .trees import DecisionTree, GradientBoostedTrees, softmax


class _Classifier(ClassifierMixin, BaseEstimator):
    def _fit_input(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes to fit a classifier")
        self.n_features_in_ = X.shape[1]
        return X, y_idx

    def _predict_input(self, X):
        check_is_fitted(self, "classes_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, model was fitted with {self.n_features_in_}"
            )
        return X


class GaussianNB(_Classifier):
    """Gaussian naive Bayes with an absolute variance floor."""

    def __init__(self, var_floor=1e-9):
        self.var_floor = var_floor

    def fit(self, X, y):
        X, y_idx = self._fit_input(X, y)
        K = len(self.classes_)
        self.theta_ = np.stack([X[y_idx == k].mean(axis=0) for k in range(K)])
        self.var_ = np.stack([X[y_idx == k].var(axis=0) for k in range(K)]) + self.var_floor
        self.class_log_prior_ = np.log(np.bincount(y_idx, minlength=K) / len(y_idx))
        return self

    def _joint_log_likelihood(self, X):
        ll = -0.5 * (
            np.sum(np.log(2.0 * np.pi * self.var_), axis=1)[None, :]
            + np.sum((X[:, None, :] - self.theta_[None]) ** 2 / self.var_[None], axis=2)
        )
        return ll + self.class_log_prior_

    def predict_log_proba(self, X):
        jll = self._joint_log_likelihood(self._predict_input(X))
        return jll - logsumexp(jll, axis=1, keepdims=True)

    def predict_proba(self, X):
        return np.exp(self.predict_log_proba(X))

    def predict(self, X):
        return self.classes_[np.argmax(self._joint_log_likelihood(self._predict_input(X)), axis=1)]


class LinearSVM(_Classifier):
    """One-vs-rest linear SVM trained by full-batch subgradient descent.

    Minimises ``||w||^2 / (2 C n) + mean(hinge)`` per class (the usual
    ``C``-weighted objective divided by ``C n``). Steps shrink as
    ``learning_rate / sqrt(t)`` and the returned weights average the second
    half of the iterates.
    """

    def __init__(self, C=1.0, n_passes=1000, learning_rate=1.0):
        self.C = C
        self.n_passes = n_passes
        self.learning_rate = learning_rate

    def fit(self, X, y):
        X, y_idx = self._fit_input(X, y)
        n, d = X.shape
        K = len(self.classes_)
        targets = np.where(np.eye(K)[y_idx] > 0, 1.0, -1.0)
        lam = 1.0 / (self.C * n)
        W = np.zeros((d, K))
        b = np.zeros(K)
        W_avg = np.zeros_like(W)
        b_avg = np.zeros_like(b)
        start = self.n_passes // 2
        for t in range(1, self.n_passes + 1):
            margin = targets * (X @ W + b)
            active = (margin < 1.0) * targets
            grad_W = lam * W - X.T @ active / n
            grad_b = -active.sum(axis=0) / n
            step = self.learning_rate / np.sqrt(t)
            W -= step * grad_W
            b -= step * grad_b
            if t > start:
                W_avg += W
                b_avg += b
        count = self.n_passes - start
        self.coef_ = (W_avg / count).T
        self.intercept_ = b_avg / count
        return self

    def decision_function(self, X):
        X = self._predict_input(X)
        return X @ self.coef_.T + self.intercept_

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]


@njit(cache=True)
def _knn_vote(Q, X, y, k, n_classes):
    """Majority label among the k nearest rows of ``X`` for every row of ``Q``.

    Exact squared Euclidean distances; the running top-k list uses strict
    comparisons, so on equal distances the earlier training row wins.
    """
    n, m, d = Q.shape[0], X.shape[0], X.shape[1]
    out = np.empty(n, np.int64)
    best_d = np.empty(k)
    best_i = np.empty(k, np.int64)
    votes = np.empty(n_classes, np.int64)
    for q in range(n):
        filled = 0
        for j in range(m):
            dist = 0.0
            for f in range(d):
                diff = Q[q, f] - X[j, f]
                dist += diff * diff
            if filled == k and dist >= best_d[k - 1]:
                continue
            pos = filled if filled < k else k - 1
            while pos > 0 and best_d[pos - 1] > dist:
                if pos < k:
                    best_d[pos] = best_d[pos - 1]
                    best_i[pos] = best_i[pos - 1]
                pos -= 1
            best_d[pos] = dist
            best_i[pos] = j
            if filled < k:
                filled += 1
        votes[:] = 0
        for r in range(filled):
            votes[y[best_i[r]]] += 1
        out[q] = np.argmax(votes)  # first maximum: smallest label on ties
    return out


class KNN(_Classifier):
    """k nearest neighbours, Euclidean, majority vote.

    Distance ties go to the earlier training row; vote ties go to the
    smallest class label.
    """

    def __init__(self, n_neighbors=5):
        self.n_neighbors = n_neighbors

    def fit(self, X, y):
        X, y_idx = self._fit_input(X, y)
        if self.n_neighbors < 1:
            raise ValueError("n_neighbors must be >= 1")
        self.X_ = np.ascontiguousarray(X)
        self.y_ = y_idx.astype(np.int64)
        return self

    def predict(self, X):
        X = np.ascontiguousarray(self._predict_input(X))
        k = min(self.n_neighbors, len(self.X_))
        return self.classes_[_knn_vote(X, self.X_, self.y_, k, len(self.classes_))]


def mlp_forward(params, X):
    W1, b1, W2, b2 = params
    pre = X @ W1 + b1
    hidden = np.maximum(pre, 0.0)
    return pre, hidden, softmax(hidden @ W2 + b2)


def mlp_loss_and_grads(params, X, Y, alpha=0.0):
    """Mean cross-entropy (+ ``alpha/2 * ||W||^2``) and its analytic gradients."""
    W1, b1, W2, b2 = params
    n = X.shape[0]
    pre, hidden, P = mlp_forward(params, X)
    loss = -np.sum(Y * np.log(np.clip(P, 1e-300, None))) / n
    loss += 0.5 * alpha * (np.sum(W1**2) + np.sum(W2**2))
    dz2 = (P - Y) / n
    gW2 = hidden.T @ dz2 + alpha * W2
    gb2 = dz2.sum(axis=0)
    dz1 = (dz2 @ W2.T) * (pre > 0)
    gW1 = X.T @ dz1 + alpha * W1
    gb1 = dz1.sum(axis=0)
    return loss, [gW1, gb1, gW2, gb2]


class MLP(_Classifier):
    """One hidden ReLU layer, softmax output, minibatch SGD with momentum."""

    def __init__(self, hidden_units=64, n_epochs=200, batch_size=32, learning_rate=0.01,
                 momentum=0.9, alpha=1e-4, random_state=0):
        self.hidden_units = hidden_units
        self.n_epochs = n_epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.alpha = alpha
        self.random_state = random_state

    def fit(self, X, y):
        X, y_idx = self._fit_input(X, y)
        n, d = X.shape
        K = len(self.classes_)
        Y = np.eye(K)[y_idx]
        rng = np.random.default_rng(self.random_state)
        h = self.hidden_units
        params = [
            rng.normal(0.0, np.sqrt(2.0 / d), (d, h)),
            np.zeros(h),
            rng.normal(0.0, np.sqrt(2.0 / h), (h, K)),
            np.zeros(K),
        ]
        velocity = [np.zeros_like(p) for p in params]
        self.loss_curve_ = []
        for _ in range(self.n_epochs):
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, self.batch_size):
                batch = order[start:start + self.batch_size]
                loss, grads = mlp_loss_and_grads(params, X[batch], Y[batch], self.alpha)
                total += loss * len(batch)
                for p, v, g in zip(params, velocity, grads):
                    v *= self.momentum
                    v -= self.learning_rate * g
                    p += v
            self.loss_curve_.append(total / n)
        self.coefs_ = params
        return self

    def predict_proba(self, X):
        return mlp_forward(self.coefs_, self._predict_input(X))[2]

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


FAMILIES = {
    "gaussian_nb": GaussianNB,
    "decision_tree": DecisionTree,
    "linear_svm": LinearSVM,
    "knn": KNN,
    "mlp": MLP,
    "gbt": GradientBoostedTrees,
}

DISPLAY_NAMES = {
    "gaussian_nb": "Gaussian NB",
    "decision_tree": "Decision Tree",
    "linear_svm": "Linear SVM",
    "knn": "KNN",
    "mlp": "MLP",
    "gbt": "Gradient Boosted Trees",
}


@dataclass(frozen=True)
class ClassifierSpec:
    family: str
    params: dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown classifier family {self.family!r}; choose from {sorted(FAMILIES)}")
        valid = FAMILIES[self.family]().get_params()
        unknown = set(self.params) - set(valid)
        if unknown:
            raise ValueError(f"{self.family}: unknown hyperparameters {sorted(unknown)}")

    def build(self):
        est = FAMILIES[self.family](**self.params)
        if "random_state" in est.get_params() and "random_state" not in self.params:
            est.set_params(random_state=self.seed)
        return est


def default_specs(seed: int = 0, overrides: dict[str, dict[str, Any]] | None = None) -> list[ClassifierSpec]:
    overrides = overrides or {}
    unknown = set(overrides) - set(FAMILIES)
    if unknown:
        raise ValueError(f"unknown classifier families in overrides: {sorted(unknown)}")
    return [ClassifierSpec(f, dict(overrides.get(f, {})), seed) for f in FAMILIES]
