"""Stratified split, timed prediction, confusion matrices and the
accuracy/time comparison between all and selected features."""
from __future__ import annotations

import csv
import gc
import io
import json
import time
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .core import DataError
from .features import FeatureMatrix
from .learners import DISPLAY_NAMES, ClassifierSpec
from .selection import MeanNormalizer, fit_normalizer

ORIENTATION = "rows=predicted class, columns=actual class"


def split_indices(y, test_fraction: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Stratified train/test row indices; each class gives round(fraction * n_c) test rows."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for cls in np.unique(y):
        rows = np.flatnonzero(y == cls)
        if len(rows) < 2:
            raise DataError(f"class {cls} has {len(rows)} row(s); need at least 2 to split")
        rows = rng.permutation(rows)
        n_test = min(max(int(round(test_fraction * len(rows))), 1), len(rows) - 1)
        test_idx.append(rows[:n_test])
        train_idx.append(rows[n_test:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))


def split(m: FeatureMatrix, test_fraction: float = 0.2, seed: int = 0) -> tuple[FeatureMatrix, FeatureMatrix]:
    train, test = split_indices(m.y, test_fraction, seed)
    return m.rows(train), m.rows(test)


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """A fitted classifier plus the normaliser fitted on its training rows.

    ``predict_labels`` takes raw (unnormalised) feature values.
    """

    family: str
    estimator: Any
    feature_names: tuple[str, ...]
    normalizer: MeanNormalizer | None = None

    def predict_labels(self, X) -> np.ndarray:
        if self.normalizer is not None:
            X = self.normalizer.transform(X)
        return np.asarray(self.estimator.predict(X))


def fit(spec: ClassifierSpec, train: FeatureMatrix, normalize: bool = True) -> TrainedModel:
    if len(np.unique(train.y)) < 2:
        raise DataError("training data holds a single class")
    norm = fit_normalizer(train) if normalize else None
    X = norm.transform(train.X) if norm is not None else train.X
    return TrainedModel(spec.family, spec.build().fit(X, train.y), train.names, norm)


def _check_names(model: TrainedModel, m: FeatureMatrix):
    if m.names != model.feature_names:
        raise DataError(
            f"feature mismatch: model expects {len(model.feature_names)} features, got {m.n_features}"
        )


def time_predictions(jobs: Sequence[tuple[TrainedModel, FeatureMatrix]], repeats: int = 15) -> list[float]:
    """Fastest prediction wall time in seconds for each (model, rows) pair.

    Every job gets one untimed warm-up call. Then ``repeats`` rounds call
    each job once, reversing the order every other round, so a slow spell
    on the machine lands on all jobs alike instead of on whichever one
    happened to be running. The timed region covers normalisation and the
    estimator's ``predict``. As in ``timeit``, garbage collection is off
    during the rounds.
    """
    for model, m in jobs:
        _check_names(model, m)
    best = [np.inf if len(m) else 0.0 for _, m in jobs]
    live = [i for i, (_, m) in enumerate(jobs) if len(m)]
    for i in live:
        jobs[i][0].predict_labels(jobs[i][1].X)
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for r in range(max(1, repeats)):
            for i in (live if r % 2 == 0 else live[::-1]):
                model, m = jobs[i]
                t0 = time.perf_counter()
                model.predict_labels(m.X)
                best[i] = min(best[i], time.perf_counter() - t0)
    finally:
        if gc_was_enabled:
            gc.enable()
    return best


def predict(model: TrainedModel, m: FeatureMatrix, repeats: int = 1) -> tuple[np.ndarray, float]:
    """Labels for ``m`` and the fastest of ``repeats`` timed predictions (after a warm-up)."""
    _check_names(model, m)
    if len(m) == 0:
        return np.zeros(0, dtype=int), 0.0
    seconds = time_predictions([(model, m)], repeats)[0]
    return model.predict_labels(m.X), seconds


def confusion(predicted, actual, classes) -> np.ndarray:
    """Counts with predicted classes on rows and actual classes on columns."""
    classes = list(classes)
    out = np.zeros((len(classes), len(classes)), dtype=int)
    pos = {c: i for i, c in enumerate(classes)}
    for p, a in zip(predicted, actual):
        out[pos[p], pos[a]] += 1
    return out


@dataclass
class EvalEntry:
    family: str
    feature_set: str  # "all" | "selected"
    n_features: int
    accuracy: float
    predict_seconds: float
    classes: list[int]
    confusion: np.ndarray

    @property
    def normalized(self) -> np.ndarray:
        total = self.confusion.sum()
        return self.confusion / total if total else self.confusion.astype(float)

    def to_dict(self, include_time: bool = True) -> dict[str, Any]:
        d = {
            "family": self.family,
            "feature_set": self.feature_set,
            "n_features": self.n_features,
            "accuracy": self.accuracy,
            "classes": self.classes,
            "confusion": self.confusion.tolist(),
            "confusion_normalized": self.normalized.tolist(),
        }
        if include_time:
            d["predict_seconds"] = self.predict_seconds
        return d


def _entry(model: TrainedModel, test: FeatureMatrix, feature_set: str, classes, labels, seconds) -> EvalEntry:
    classes = sorted(set(classes or []) | set(test.y.tolist()) | set(labels.tolist()))
    return EvalEntry(
        family=model.family,
        feature_set=feature_set,
        n_features=test.n_features,
        accuracy=float(np.mean(labels == test.y)),
        predict_seconds=seconds,
        classes=[int(c) for c in classes],
        confusion=confusion(labels, test.y, classes),
    )


def evaluate(model: TrainedModel, test: FeatureMatrix, feature_set: str = "all",
             classes: Sequence[int] | None = None, repeats: int = 1) -> EvalEntry:
    if len(test) == 0:
        raise DataError("cannot evaluate on an empty test set")
    labels, seconds = predict(model, test, repeats)
    return _entry(model, test, feature_set, classes, labels, seconds)


@dataclass
class EvalReport:
    entries: list[EvalEntry]
    split: dict[str, Any] = field(default_factory=dict)
    orientation: str = ORIENTATION
    # fitted models keyed by (family, feature_set); not serialised to JSON
    models: dict[tuple[str, str], TrainedModel] = field(default_factory=dict, repr=False)

    def get(self, family: str, feature_set: str) -> EvalEntry:
        for e in self.entries:
            if e.family == family and e.feature_set == feature_set:
                return e
        raise KeyError((family, feature_set))

    @property
    def families(self) -> list[str]:
        return list(dict.fromkeys(e.family for e in self.entries))

    def table4(self) -> list[dict[str, Any]]:
        rows = []
        for fam in self.families:
            a, s = self.get(fam, "all"), self.get(fam, "selected")
            rows.append({
                "classifier": DISPLAY_NAMES.get(fam, fam),
                "accuracy_all": a.accuracy,
                "predict_time_all_s": a.predict_seconds,
                "accuracy_selected": s.accuracy,
                "predict_time_selected_s": s.predict_seconds,
            })
        return rows

    def table4_csv(self) -> str:
        buf = io.StringIO()
        cols = ["classifier", "accuracy_all", "predict_time_all_s",
                "accuracy_selected", "predict_time_selected_s"]
        w = csv.DictWriter(buf, cols, lineterminator="\n")
        w.writeheader()
        w.writerows(self.table4())
        return buf.getvalue()

    def accuracy_csv(self) -> str:
        """The timing-free part of the table; byte-stable for a fixed seed."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["classifier", "accuracy_all", "accuracy_selected"])
        for row in self.table4():
            w.writerow([row["classifier"], repr(row["accuracy_all"]), repr(row["accuracy_selected"])])
        return buf.getvalue()

    def to_json(self, include_times: bool = True) -> str:
        return json.dumps(
            {
                "split": self.split,
                "orientation": self.orientation,
                "time_column": "prediction wall time only, fastest of repeated runs",
                "entries": [e.to_dict(include_times) for e in self.entries],
            },
            indent=2,
        )

    def format_table(self) -> str:
        head = f"{'classifier':<24}{'acc(all)':>10}{'time(all)':>12}{'acc(sel)':>10}{'time(sel)':>12}"
        lines = [head, "-" * len(head)]
        for r in self.table4():
            lines.append(
                f"{r['classifier']:<24}{r['accuracy_all']:>10.4f}{r['predict_time_all_s']:>11.4f}s"
                f"{r['accuracy_selected']:>10.4f}{r['predict_time_selected_s']:>11.4f}s"
            )
        return "\n".join(lines)


def run_table4(all_features: FeatureMatrix, selected: FeatureMatrix, specs: Sequence[ClassifierSpec],
               test_fraction: float = 0.2, seed: int = 0, repeats: int = 15) -> EvalReport:
    """Fit and score every spec on all and on selected features with one shared split.

    Each model gets its own normaliser fitted on the training rows of its
    feature set. Prediction times come from timing rounds shared by all
    models (see ``time_predictions``).
    """
    if len(all_features) != len(selected) or not np.array_equal(all_features.y, selected.y):
        raise DataError("all-feature and selected-feature matrices must have the same rows")
    extra = [n for n in selected.names if n not in all_features.names]
    if extra:
        raise DataError(f"selected features not among all features: {extra}")
    train_rows, test_rows = split_indices(all_features.y, test_fraction, seed)
    classes = sorted(set(all_features.y.tolist()))

    jobs, tags = [], []
    for spec in specs:
        for tag, m in (("all", all_features), ("selected", selected)):
            jobs.append((fit(spec, m.rows(train_rows)), m.rows(test_rows)))
            tags.append(tag)
    # all twelve models share the timing rounds
    seconds = time_predictions(jobs, repeats)
    entries = [
        _entry(model, test, tag, classes, model.predict_labels(test.X), t)
        for (model, test), tag, t in zip(jobs, tags, seconds)
    ]
    models = {(model.family, tag): model for (model, _), tag in zip(jobs, tags)}
    return EvalReport(
        entries,
        split={"test_fraction": test_fraction, "seed": seed, "n_train": len(train_rows),
               "n_test": len(test_rows), "stratified": True},
        models=models,
    )


def confusion_svg(matrix, classes, title: str = "", cell: int = 90) -> str:
    """Static heatmap of a normalised confusion matrix (predicted rows, actual columns)."""
    matrix = np.asarray(matrix, dtype=float)
    k = len(classes)
    left, top = 110, 70
    width, height = left + k * cell + 20, top + k * cell + 50
    vmax = matrix.max() if matrix.size and matrix.max() > 0 else 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="13">',
        f'<text x="{width / 2:.0f}" y="22" text-anchor="middle" font-size="15">{title}</text>',
        f'<text x="{left + k * cell / 2:.0f}" y="{top - 28}" text-anchor="middle">actual class</text>',
        f'<text x="20" y="{top + k * cell / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 20 {top + k * cell / 2:.0f})">predicted class</text>',
    ]
    for j, c in enumerate(classes):
        parts.append(f'<text x="{left + j * cell + cell / 2:.0f}" y="{top - 8}" text-anchor="middle">{c}</text>')
        parts.append(f'<text x="{left - 12}" y="{top + j * cell + cell / 2 + 5:.0f}" text-anchor="end">{c}</text>')
    for i in range(k):
        for j in range(k):
            v = matrix[i, j]
            shade = int(round(255 - 200 * v / vmax))
            fg = "#ffffff" if v / vmax > 0.6 else "#000000"
            x, y = left + j * cell, top + i * cell
            parts.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                         f'fill="rgb({shade},{shade},255)" stroke="#444"/>')
            parts.append(f'<text x="{x + cell / 2:.0f}" y="{y + cell / 2 + 5:.0f}" '
                         f'text-anchor="middle" fill="{fg}">{v:.3f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def confusion_csv(entry: EvalEntry, normalized: bool = True) -> str:
    mat = entry.normalized if normalized else entry.confusion
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["predicted\\actual"] + entry.classes)
    for c, row in zip(entry.classes, mat):
        w.writerow([c] + [repr(float(v)) if normalized else int(v) for v in row])
    return buf.getvalue()
