import gc
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eegflow.core import DataError
from eegflow.evaluation import (
    EvalReport, confusion, confusion_csv, confusion_svg, evaluate, fit, predict, run_table4,
    split, split_indices, time_predictions,
)
from eegflow.features import FeatureMatrix
from eegflow.learners import FAMILIES, ClassifierSpec, default_specs


def three_class(n_per=100, d=4, seed=0):
    rng = np.random.default_rng(seed)
    y = np.repeat([1, 2, 3], n_per)
    X = rng.normal(size=(len(y), d))
    X[:, 0] += 3 * y
    return FeatureMatrix(X, y, tuple(f"f{i}" for i in range(d)))


class ConstantEstimator:
    def __init__(self, label):
        self.label = label

    def predict(self, X):
        return np.full(len(X), self.label)


# --------------------------------------------------------------------------
# split

def test_split_counts_300_rows():
    y = np.repeat([1, 2, 3], 100)
    train, test = split_indices(y, 0.2, seed=0)
    assert len(train) == 240 and len(test) == 60
    for c in (1, 2, 3):
        assert np.sum(y[train] == c) == 80 and np.sum(y[test] == c) == 20
    assert not set(train) & set(test)


def test_split_half():
    y = np.repeat([1, 2, 3], 10)
    train, test = split_indices(y, 0.5, seed=3)
    for c in (1, 2, 3):
        assert np.sum(y[train] == c) == 5 and np.sum(y[test] == c) == 5


def test_split_deterministic_and_seed_dependent():
    y = np.repeat([1, 2, 3], 50)
    a, b, c = split_indices(y, seed=1), split_indices(y, seed=1), split_indices(y, seed=2)
    np.testing.assert_array_equal(a[1], b[1])
    assert not np.array_equal(a[1], c[1])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(2, 60), min_size=2, max_size=4), st.floats(0.05, 0.95), st.integers(0, 99))
def test_split_partitions_every_class(sizes, fraction, seed):
    y = np.repeat(np.arange(1, len(sizes) + 1), sizes)
    train, test = split_indices(y, fraction, seed)
    assert sorted(np.concatenate([train, test]).tolist()) == list(range(len(y)))
    for c in np.unique(y):
        assert np.sum(y[train] == c) >= 1 and np.sum(y[test] == c) >= 1


def test_split_errors():
    with pytest.raises(DataError, match="need at least 2"):
        split_indices([1, 1, 1, 2], 0.5)
    with pytest.raises(ValueError):
        split_indices([1, 1, 2, 2], 1.0)


def test_split_matrix():
    m = three_class()
    train, test = split(m, 0.2, 0)
    assert len(train) == 240 and len(test) == 60 and train.names == m.names


# --------------------------------------------------------------------------
# confusion and evaluate

def test_confusion_orientation():
    # predicted on rows, actual on columns
    mat = confusion([1, 1, 2], [1, 2, 2], [1, 2, 3])
    np.testing.assert_array_equal(mat, [[1, 1, 0], [0, 1, 0], [0, 0, 0]])


def test_perfect_predictor_gives_diagonal_thirds():
    m = three_class()
    _, test = split(m)
    model = fit(ClassifierSpec("decision_tree"), m)
    entry = evaluate(model, test, classes=[1, 2, 3])
    assert entry.accuracy == 1.0
    np.testing.assert_allclose(entry.normalized, np.eye(3) / 3)
    assert entry.confusion.sum() == 60


def test_single_class_predictor_scores_one_third():
    m = three_class()
    _, test = split(m)
    model = fit(ClassifierSpec("gaussian_nb"), m)
    model = type(model)(model.family, ConstantEstimator(2), model.feature_names, model.normalizer)
    entry = evaluate(model, test, classes=[1, 2, 3])
    assert entry.accuracy == pytest.approx(1 / 3)
    np.testing.assert_array_equal(entry.confusion, [[0, 0, 0], [20, 20, 20], [0, 0, 0]])
    assert entry.normalized.sum() == pytest.approx(1.0)


def test_predict_empty_and_mismatched():
    m = three_class()
    model = fit(ClassifierSpec("knn"), m)
    labels, seconds = predict(model, m.rows(np.array([], dtype=int)))
    assert labels.shape == (0,) and seconds == 0.0
    with pytest.raises(DataError, match="feature mismatch"):
        predict(model, m.select(("f0", "f1")))
    with pytest.raises(DataError, match="empty test set"):
        evaluate(model, m.rows(np.array([], dtype=int)))


def test_fit_rejects_single_class():
    m = three_class()
    with pytest.raises(DataError):
        fit(ClassifierSpec("gaussian_nb"), m.rows(np.flatnonzero(m.y == 1)))


def test_model_carries_training_normalizer():
    m = three_class()
    train, test = split(m)
    model = fit(ClassifierSpec("knn"), train)
    np.testing.assert_allclose(model.normalizer.mean_, train.X.mean(0))
    # raw values go in; normalisation happens inside the model
    labels, _ = predict(model, test)
    np.testing.assert_array_equal(labels, model.estimator.predict(model.normalizer.transform(test.X)))


def test_time_predictions_shared_rounds():
    m = three_class()
    knn, nb = fit(ClassifierSpec("knn"), m), fit(ClassifierSpec("gaussian_nb"), m.select(("f0",)))
    empty = m.rows(np.array([], dtype=int))
    times = time_predictions([(knn, m), (nb, m.select(("f0",))), (knn, empty)], repeats=3)
    assert len(times) == 3 and times[0] > 0 and times[1] > 0 and times[2] == 0.0
    assert gc.isenabled()
    with pytest.raises(DataError, match="feature mismatch"):
        time_predictions([(nb, m)])


# --------------------------------------------------------------------------
# report

@pytest.fixture(scope="module")
def report():
    m = three_class(n_per=60, d=8, seed=1)
    sel = m.select(("f0", "f3", "f5"))
    specs = default_specs(0, {"mlp": {"n_epochs": 30}, "gbt": {"n_estimators": 20}})
    return run_table4(m, sel, specs, test_fraction=0.2, seed=0, repeats=2)


def test_report_shape(report):
    rows = report.table4()
    assert len(rows) == 6
    assert all(len(r) == 5 for r in rows)
    assert report.families == list(FAMILIES)
    lines = report.table4_csv().splitlines()
    assert len(lines) == 7 and lines[0].count(",") == 4
    assert len(report.accuracy_csv().splitlines()) == 7
    for e in report.entries:
        assert e.confusion.sum() == report.split["n_test"] == 36
        assert np.all((e.normalized >= 0) & (e.normalized <= 1))
        assert (e.feature_set == "all") == (e.n_features == 8)
    assert set(report.models) == {(f, s) for f in FAMILIES for s in ("all", "selected")}
    assert "classifier" in report.format_table()


def test_report_json(report):
    data = json.loads(report.to_json())
    assert len(data["entries"]) == 12 and "predicted" in data["orientation"]
    no_time = json.loads(report.to_json(include_times=False))
    assert all("predict_seconds" not in e for e in no_time["entries"])


def test_run_table4_errors():
    m = three_class()
    specs = default_specs(0)[:1]
    other = FeatureMatrix(np.zeros((len(m), 1)), m.y, ("elsewhere",))
    with pytest.raises(DataError, match="not among"):
        run_table4(m, other, specs)
    with pytest.raises(DataError, match="same rows"):
        run_table4(m, m.rows(np.arange(10)), specs)


def test_accuracy_csv_is_reproducible():
    m = three_class(n_per=40, seed=2)
    sel = m.select(("f0",))
    specs = default_specs(0, {"mlp": {"n_epochs": 10}, "gbt": {"n_estimators": 5}})
    a = run_table4(m, sel, specs, repeats=1)
    b = run_table4(m, sel, specs, repeats=1)
    assert a.accuracy_csv() == b.accuracy_csv()
    assert a.to_json(include_times=False) == b.to_json(include_times=False)


def test_confusion_renderers(report):
    entry = report.get("gbt", "selected")
    svg = confusion_svg(entry.normalized, entry.classes, title="GBT")
    root = ET.fromstring(svg)
    assert len(root.findall("{http://www.w3.org/2000/svg}rect")) == 9
    lines = confusion_csv(entry).splitlines()
    assert lines[0] == "predicted\\actual,1,2,3"
    assert sum(float(v) for line in lines[1:] for v in line.split(",")[1:]) == pytest.approx(1.0)
    counts = confusion_csv(entry, normalized=False).splitlines()
    assert sum(int(v) for line in counts[1:] for v in line.split(",")[1:]) == 36
    assert isinstance(report, EvalReport)
    with pytest.raises(KeyError):
        report.get("gbt", "other")
