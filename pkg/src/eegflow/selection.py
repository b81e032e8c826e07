"""Feature normalisation, three feature rankers, and their fusion into one subset."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import DataError, RunConfig
from .features import FeatureMatrix
from .trees import ExtraTrees, GradientBoostedTrees

METHODS = ("extra_trees", "gbt", "correlation")

Ranking = list[tuple[str, float]]


class MeanNormalizer(TransformerMixin, BaseEstimator):
    """Column-wise ``(x - mean) / (max - min)`` with training-set statistics.

    Constant training columns map to 0.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.mean_ = X.mean(axis=0)
        self.min_ = X.min(axis=0)
        self.max_ = X.max(axis=0)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=np.float64, ensure_min_samples=0)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        span = self.max_ - self.min_
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (X - self.mean_) / safe, 0.0)


def fit_normalizer(train: FeatureMatrix) -> MeanNormalizer:
    if len(train) == 0:
        raise DataError("cannot fit a normalizer on an empty matrix")
    return MeanNormalizer().fit(train.X)


def apply_normalizer(normalizer: MeanNormalizer, m: FeatureMatrix) -> FeatureMatrix:
    return m.with_values(normalizer.transform(m.X))


def rank_order(scores) -> np.ndarray:
    """Indices by descending score; scores equal to 12 decimals keep column order.

    Scores lie in [0, 1]. Exactly redundant features (one a multiple of
    another) tie in theory but differ in the last bits, and that noise
    must not decide their order.
    """
    return np.argsort(-np.round(np.asarray(scores, dtype=float), 12), kind="stable")


def _rank(names: Sequence[str], scores) -> Ranking:
    order = rank_order(scores)
    return [(names[i], float(scores[i])) for i in order]


def _require_classes(m: FeatureMatrix):
    if len(np.unique(m.y)) < 2:
        raise DataError("feature ranking needs at least two classes")


def extra_trees_importance(m: FeatureMatrix, n_trees: int = 200, k_features=None, seed: int = 0) -> Ranking:
    """Features ranked by mean Gini decrease in an extremely randomised forest."""
    _require_classes(m)
    model = ExtraTrees(
        n_estimators=n_trees, max_features="sqrt" if k_features is None else k_features,
        random_state=seed,
    ).fit(m.X, m.y)
    return _rank(m.names, model.feature_importances_)


def gbt_importance(m: FeatureMatrix, rounds: int = 100, depth: int = 3,
                   learning_rate: float = 0.1, seed: int = 0) -> Ranking:
    """Features ranked by their share of total split gain in a boosted model."""
    _require_classes(m)
    model = GradientBoostedTrees(
        n_estimators=rounds, max_depth=depth, learning_rate=learning_rate, random_state=seed
    ).fit(m.X, m.y)
    return _rank(m.names, model.feature_importances_)


def abs_correlation(X, y) -> np.ndarray:
    """|Pearson r| of every column with ``y``; zero-variance columns score 0."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = X - X.mean(axis=0)
    yc = y - y.mean()
    den = np.sqrt(np.sum(xc**2, axis=0) * np.sum(yc**2))
    num = np.abs(xc.T @ yc)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


class CorrelationSelector(SelectorMixin, BaseEstimator):
    """Relevance ranking by |corr(feature, label)| plus a greedy redundancy filter.

    Walking down the ranking, a feature is kept unless its |corr| with an
    already kept feature exceeds ``redundancy_cutoff``. Features with zero
    relevance are never kept.
    """

    def __init__(self, redundancy_cutoff=0.85):
        self.redundancy_cutoff = redundancy_cutoff

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        self.n_features_in_ = X.shape[1]
        self.scores_ = abs_correlation(X, y)
        order = rank_order(self.scores_)
        std = X.std(axis=0)
        kept: list[int] = []
        for j in order:
            if self.scores_[j] <= 0:
                break
            if kept:
                block = X[:, kept]
                corr = abs_correlation(block, X[:, j]) if std[j] > 0 else np.zeros(len(kept))
                if np.any(corr > self.redundancy_cutoff):
                    continue
            kept.append(int(j))
        self.kept_ = np.array(kept, dtype=int)
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "kept_")
        mask = np.zeros(self.n_features_in_, dtype=bool)
        mask[self.kept_] = True
        return mask


def correlation_select(m: FeatureMatrix, redundancy_cutoff: float = 0.85) -> tuple[Ranking, list[str]]:
    """Full relevance ranking and the redundancy-filtered list (in rank order)."""
    if len(m) < 2:
        raise DataError("correlation ranking needs at least two rows")
    sel = CorrelationSelector(redundancy_cutoff).fit(m.X, m.y)
    return _rank(m.names, sel.scores_), [m.names[j] for j in sel.kept_]


def fuse_selection(top_lists: dict[str, Ranking], k: int = 14) -> list[str]:
    """Union of per-method top lists, ordered by vote count then mean normalised score.

    Scores are normalised per method by that method's largest score.
    Remaining ties keep first-appearance order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not top_lists:
        raise ValueError("need at least one method's ranking")
    votes: dict[str, int] = {}
    score_sum: dict[str, float] = {}
    for ranking in top_lists.values():
        top = max((s for _, s in ranking), default=0.0)
        for name, score in ranking:
            votes[name] = votes.get(name, 0) + 1
            score_sum[name] = score_sum.get(name, 0.0) + (score / top if top > 0 else 0.0)
    names = list(votes)
    names.sort(key=lambda n: (-votes[n], -score_sum[n] / votes[n]))
    return names[:k]


@dataclass
class SelectionReport:
    rankings: dict[str, Ranking]
    top: dict[str, Ranking]
    fused: list[str]
    correlation_kept: list[str] = field(default_factory=list)
    sweep: list[tuple[int, float]] | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "rankings": {k: [[n, s] for n, s in v] for k, v in self.rankings.items()},
                "top": {k: [[n, s] for n, s in v] for k, v in self.top.items()},
                "fused": self.fused,
                "correlation_kept": self.correlation_kept,
                "sweep": None if self.sweep is None else [list(p) for p in self.sweep],
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "SelectionReport":
        d = json.loads(text)
        conv = lambda v: [(n, float(s)) for n, s in v]  # noqa: E731
        sweep = d.get("sweep")
        return cls(
            {k: conv(v) for k, v in d["rankings"].items()},
            {k: conv(v) for k, v in d["top"].items()},
            list(d["fused"]),
            list(d.get("correlation_kept", [])),
            None if sweep is None else [(int(c), float(a)) for c, a in sweep],
        )

    def table2_csv(self) -> str:
        """Top lists side by side, one column per method."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        methods = list(self.top)
        w.writerow(["rank"] + methods)
        depth = max((len(v) for v in self.top.values()), default=0)
        for i in range(depth):
            w.writerow([i + 1] + [self.top[m][i][0] if i < len(self.top[m]) else "" for m in methods])
        return buf.getvalue()

    def scores_csv(self, method: str) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "score"])
        for name, score in self.rankings[method]:
            w.writerow([name, repr(score)])
        return buf.getvalue()

    def fused_csv(self) -> str:
        return "rank,feature\n" + "".join(f"{i + 1},{n}\n" for i, n in enumerate(self.fused))

    def sweep_csv(self) -> str:
        return "n_features,accuracy\n" + "".join(f"{c},{a!r}\n" for c, a in self.sweep or [])


def select_features(train: FeatureMatrix, cfg: RunConfig | None = None) -> SelectionReport:
    """Normalise ``train`` with its own statistics, rank by all three methods, fuse."""
    cfg = cfg or RunConfig()
    m = apply_normalizer(fit_normalizer(train), train)
    rankings = {
        "extra_trees": extra_trees_importance(m, cfg.n_trees, cfg.max_features, cfg.seed),
        "gbt": gbt_importance(m, cfg.gbt_rounds, cfg.gbt_depth, cfg.gbt_learning_rate, cfg.seed),
    }
    corr_rank, kept = correlation_select(m, cfg.redundancy_cutoff)
    rankings["correlation"] = corr_rank
    corr_scores = dict(corr_rank)
    top = {
        "extra_trees": rankings["extra_trees"][: cfg.top_n],
        "gbt": rankings["gbt"][: cfg.top_n],
        "correlation": [(n, corr_scores[n]) for n in kept[: cfg.top_n]],
    }
    return SelectionReport(rankings, top, fuse_selection(top, cfg.selected_k), kept)


def accuracy_vs_feature_count(m: FeatureMatrix, ranking: Sequence[str], counts: Sequence[int],
                              cfg: RunConfig | None = None) -> list[tuple[int, float]]:
    """Boosted-tree test accuracy using the top-``count`` ranked features.

    Each run uses the same stratified split and seed; chosen columns keep
    their original matrix order, so ``count == n_features`` reproduces the
    all-feature model exactly.
    """
    from .evaluation import split

    cfg = cfg or RunConfig()
    ranking = [r[0] if isinstance(r, tuple) else r for r in ranking]
    bad = [c for c in counts if not 1 <= c <= min(len(ranking), m.n_features)]
    if bad:
        raise ValueError(f"feature counts out of range: {bad}")
    train, test = split(m, cfg.split_fraction, cfg.seed)
    norm = fit_normalizer(train)
    train, test = apply_normalizer(norm, train), apply_normalizer(norm, test)
    params = dict(n_estimators=cfg.gbt_rounds, max_depth=cfg.gbt_depth,
                  learning_rate=cfg.gbt_learning_rate, random_state=cfg.seed)
    params.update(cfg.learners.get("gbt", {}))
    out = []
    for count in counts:
        chosen = set(ranking[:count])
        cols = [n for n in m.names if n in chosen]
        model = GradientBoostedTrees(**params).fit(train.select(cols).X, train.y)
        acc = float(np.mean(model.predict(test.select(cols).X) == test.y))
        out.append((int(count), acc))
    return out
