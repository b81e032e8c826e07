import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from eegflow.evaluation import fit, predict
from eegflow.features import FeatureMatrix
from eegflow.learners import (
    FAMILIES, KNN, MLP, ClassifierSpec, GaussianNB, LinearSVM, default_specs, mlp_loss_and_grads,
)


def two_gaussians(seed=0, n=500):
    rng = np.random.default_rng(seed)
    X = np.concatenate([rng.normal(0, 1, n), rng.normal(4, 1, n)])[:, None]
    y = np.repeat([1, 2], n)
    return X, y


def test_gaussian_nb_boundary_near_bayes_optimum():
    X, y = two_gaussians()
    model = GaussianNB().fit(X, y)
    grid = np.linspace(0, 4, 40001)[:, None]
    pred = model.predict(grid)
    boundary = grid[np.flatnonzero(pred == 2)[0], 0]
    # equal priors and unit variances: the Bayes boundary is the midpoint x = 2
    assert abs(boundary - 2.0) < 0.2


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.just(3)),
              elements=st.floats(-50, 50, allow_nan=False)))
def test_gaussian_nb_posteriors_sum_to_one(Xq):
    rng = np.random.default_rng(0)
    model = GaussianNB().fit(rng.normal(size=(60, 3)), np.tile([1, 2, 3], 20))
    np.testing.assert_allclose(model.predict_proba(Xq).sum(axis=1), 1.0, atol=1e-9)


def test_gaussian_nb_variance_floor_handles_constant_feature():
    X = np.column_stack([np.tile([0.0, 1.0], 10), np.ones(20)])
    y = np.tile([1, 2], 10)
    model = GaussianNB().fit(X, y)
    assert np.all(model.var_ >= 1e-9)
    assert model.score(X, y) == 1.0


def _rel_err(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


@pytest.mark.parametrize("seed", range(3))
def test_mlp_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(5, 4))
    Y = np.eye(3)[rng.integers(0, 3, 5)]
    params = [rng.normal(0, 0.5, (4, 6)), rng.normal(0, 0.1, 6), rng.normal(0, 0.5, (6, 3)), rng.normal(0, 0.1, 3)]
    _, grads = mlp_loss_and_grads(params, X, Y, alpha=1e-3)
    eps = 1e-6
    for p, g in zip(params, grads):
        num = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + eps
            up, _ = mlp_loss_and_grads(params, X, Y, alpha=1e-3)
            p[idx] = old - eps
            down, _ = mlp_loss_and_grads(params, X, Y, alpha=1e-3)
            p[idx] = old
            num[idx] = (up - down) / (2 * eps)
        assert np.max(_rel_err(g, num)) < 1e-4


def test_mlp_learns_and_is_seed_deterministic():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(300, 4))
    y = np.digitize(X[:, 0] + X[:, 1], [-0.7, 0.7])
    a = MLP(n_epochs=50, random_state=3).fit(X, y)
    b = MLP(n_epochs=50, random_state=3).fit(X, y)
    assert a.score(X, y) > 0.95
    for p, q in zip(a.coefs_, b.coefs_):
        np.testing.assert_array_equal(p, q)
    assert a.loss_curve_[-1] < a.loss_curve_[0]


def test_knn_matches_brute_force_oracle():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(200, 4))
    y = rng.integers(1, 4, 200)
    Xq = rng.normal(size=(200, 4))
    got = KNN(n_neighbors=5).fit(X, y).predict(Xq)
    np.testing.assert_array_equal(got, oracles.knn_predict(X.tolist(), y.tolist(), Xq.tolist(), k=5))


def test_knn_tie_breaks_match_oracle():
    rng = np.random.default_rng(3)
    X = rng.integers(0, 3, size=(60, 2)).astype(float)
    y = rng.integers(1, 5, 60)
    Xq = rng.integers(0, 3, size=(40, 2)).astype(float)
    for k in (1, 2, 4, 6):
        got = KNN(n_neighbors=k).fit(X, y).predict(Xq)
        np.testing.assert_array_equal(got, oracles.knn_predict(X.tolist(), y.tolist(), Xq.tolist(), k=k))


def test_knn_k1_reproduces_training_labels():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(100, 3))
    y = rng.integers(1, 4, 100)
    assert KNN(n_neighbors=1).fit(X, y).score(X, y) == 1.0


def test_linear_svm_separates_blobs():
    rng = np.random.default_rng(5)
    centres = np.array([[0, 0], [3, 0], [0, 3]])
    X = np.concatenate([rng.normal(c, 0.4, (50, 2)) for c in centres])
    y = np.repeat([1, 2, 3], 50)
    model = LinearSVM().fit(X, y)
    assert model.score(X, y) > 0.97
    assert model.coef_.shape == (3, 2)


def test_classifier_spec_validation():
    with pytest.raises(ValueError, match="unknown classifier family"):
        ClassifierSpec("random_forest")
    with pytest.raises(ValueError, match="unknown hyperparameters"):
        ClassifierSpec("knn", {"k": 3})
    spec = ClassifierSpec("mlp", {"hidden_units": 8}, seed=9)
    est = spec.build()
    assert est.hidden_units == 8 and est.random_state == 9
    specs = default_specs(1, {"knn": {"n_neighbors": 3}})
    assert [s.family for s in specs] == list(FAMILIES)
    assert specs[3].build().n_neighbors == 3
    with pytest.raises(ValueError):
        default_specs(0, {"svm": {}})


def test_default_hyperparameters():
    assert KNN().n_neighbors == 5
    assert LinearSVM().C == 1.0 and LinearSVM().n_passes == 1000
    m = MLP()
    assert (m.hidden_units, m.n_epochs, m.momentum) == (64, 200, 0.9)
    assert GaussianNB().var_floor == 1e-9


def _blobs(seed, n=300, d=6):
    rng = np.random.default_rng(seed)
    y = np.tile([1, 2, 3], n // 3)
    X = rng.normal(size=(n, d))
    X[:, 0] += y
    X[:, 1] -= 0.5 * y
    return X, y


@pytest.mark.parametrize("family", list(FAMILIES))
def test_training_row_order(family):
    X, y = _blobs(6)
    Xt, yt = _blobs(7)
    perm = np.random.default_rng(8).permutation(len(y))
    params = {"n_epochs": 60} if family == "mlp" else {}
    a = ClassifierSpec(family, params).build().fit(X, y).score(Xt, yt)
    b = ClassifierSpec(family, params).build().fit(X[perm], y[perm]).score(Xt, yt)
    if family in ("gaussian_nb", "knn", "decision_tree"):
        assert a == b
    else:
        assert abs(a - b) <= 0.02


@pytest.fixture(scope="module")
def wide_and_narrow():
    """52-column matrices (14 informative) with 5000 test rows, plus the 14-column subset."""
    rng = np.random.default_rng(10)
    n_train, n_test = 600, 5000
    y = np.tile([1, 2, 3], (n_train + n_test) // 3 + 1)[: n_train + n_test]
    X = rng.normal(size=(len(y), 52))
    X[:, :14] += 0.8 * y[:, None] * rng.uniform(0.5, 1.5, 14)
    names = tuple(f"f{i}" for i in range(52))
    full = FeatureMatrix(X, y, names)
    sel = full.select(names[:14])
    train, test = np.arange(n_train), np.arange(n_train, len(y))
    return full.rows(train), full.rows(test), sel.rows(train), sel.rows(test)


@pytest.mark.parametrize("family", list(FAMILIES))
def test_fewer_features_predict_no_slower(family, wide_and_narrow):
    full_train, full_test, sel_train, sel_test = wide_and_narrow
    params = {"n_epochs": 20} if family == "mlp" else {}
    spec = ClassifierSpec(family, params)
    m_full, m_sel = fit(spec, full_train), fit(spec, sel_train)
    labels, t_full = predict(m_full, full_test, repeats=5)
    _, t_sel = predict(m_sel, sel_test, repeats=5)
    assert len(labels) == 5000
    assert t_sel <= t_full
