"""Acceptance criteria 1-7; each test prints one PASS/FAIL line."""
import time

import numpy as np
import pytest

import oracles
from conftest import informative_matrix
from eegflow.core import RunConfig
from eegflow.features import DEFAULT_REGISTRY, FeatureConfig, extract_channels
from eegflow.learners import GaussianNB, KNN, mlp_loss_and_grads
from eegflow.selection import correlation_select, extra_trees_importance, gbt_importance, select_features
from eegflow.wavelet import dwt, idwt

NAMES = [d.name for d in DEFAULT_REGISTRY]


@pytest.fixture
def verdict(capsys):
    """Collect named checks, print one line, then fail with the broken ones."""
    def _verdict(number, title, checks):
        failed = [name for name, ok in checks if not ok]
        line = f"criterion {number} {'PASS' if not failed else 'FAIL'}: {title}"
        if failed:
            line += f" (failed: {'; '.join(failed)})"
        with capsys.disabled():
            print("\n" + line)
        assert not failed, line
    return _verdict


def test_criterion_1_feature_oracles(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    cfg = FeatureConfig()
    t = np.arange(128) / 128
    mismatches = []
    for i in range(24):
        x = rng.normal(0, rng.uniform(1, 50), 128) + rng.uniform(-20, 20)
        if i % 2:
            x += rng.uniform(5, 30) * np.sin(2 * np.pi * rng.uniform(1, 40) * t)
        got = dict(zip(NAMES, extract_channels(x, cfg)))
        ref = oracles.all_features(x)
        for name in NAMES:
            if name in oracles.COUNT_FEATURES:
                ok = got[name] == ref[name]
            else:
                ok = abs(got[name] - ref[name]) <= 1e-9 * abs(ref[name]) + 1e-12
            if not ok:
                mismatches.append(name)
        approx, details = dwt(x, 4)
        energy = np.sum(approx**2) + sum(np.sum(d**2) for d in details)
        if np.max(np.abs(idwt(approx, details) - x)) > 1e-8 or abs(energy - np.sum(x**2)) > 1e-8 * np.sum(x**2):
            mismatches.append("dwt")
    hjorth_ok = True
    for f in (3.0, 7.0, 12.0, 20.0):
        got = dict(zip(NAMES, extract_channels(np.sin(2 * np.pi * f * t), cfg)))
        # continuous sinusoid: activity 1/2, mobility 2 pi f / fs per sample, complexity 1
        hjorth_ok &= abs(got["hjorth_activity"] - 0.5) <= 0.025
        hjorth_ok &= abs(got["hjorth_mobility"] - 2 * np.pi * f / 128) <= 0.05 * 2 * np.pi * f / 128
        hjorth_ok &= abs(got["hjorth_complexity"] - 1.0) <= 0.05
    elapsed = time.perf_counter() - t0
    verdict(1, f"52 extractors vs oracles on 24 epochs in {elapsed:.2f} s", [
        (f"oracle mismatches {sorted(set(mismatches))}", not mismatches),
        ("hjorth within 5% on sinusoids", hjorth_ok),
        ("runtime < 10 s", elapsed < 10.0),
    ])


def test_criterion_2_selector_sanity(verdict):
    m = informative_matrix(n_rows=600, seed=0)
    et = extra_trees_importance(m, n_trees=200, seed=0)
    gbt = gbt_importance(m, rounds=100, depth=3, learning_rate=0.1, seed=0)
    corr, _ = correlation_select(m)

    def top_and_noise(ranking):
        scores = dict(ranking)
        return scores["informative"], max(v for k, v in scores.items() if k != "informative")

    (et_top, et_noise), (gbt_top, gbt_noise) = top_and_noise(et), top_and_noise(gbt)
    verdict(2, f"informative feature ranked first; ET {et_top:.3f} vs noise {et_noise:.4f}, "
               f"GBT {gbt_top:.3f} vs noise {gbt_noise:.4f}", [
        ("extra trees rank 1", et[0][0] == "informative"),
        ("gbt rank 1", gbt[0][0] == "informative"),
        ("correlation rank 1", corr[0][0] == "informative"),
        ("extra trees > 5x noise", et_top > 5 * et_noise),
        ("gbt > 5x noise", gbt_top > 5 * gbt_noise),
    ])


def test_criterion_3_learner_correctness(verdict):
    rng = np.random.default_rng(0)
    X = np.concatenate([rng.normal(0, 1, 500), rng.normal(4, 1, 500)])[:, None]
    y = np.repeat([1, 2], 500)
    grid = np.linspace(0, 4, 40001)[:, None]
    pred = GaussianNB().fit(X, y).predict(grid)
    boundary = grid[np.flatnonzero(pred == 2)[0], 0]

    rng = np.random.default_rng(1)
    Xb = rng.normal(size=(5, 4))
    Yb = np.eye(3)[rng.integers(0, 3, 5)]
    params = [rng.normal(0, 0.5, (4, 6)), rng.normal(0, 0.1, 6), rng.normal(0, 0.5, (6, 3)), rng.normal(0, 0.1, 3)]
    _, grads = mlp_loss_and_grads(params, Xb, Yb, alpha=1e-3)
    worst, eps = 0.0, 1e-6
    for p, g in zip(params, grads):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + eps
            up, _ = mlp_loss_and_grads(params, Xb, Yb, alpha=1e-3)
            p[idx] = old - eps
            down, _ = mlp_loss_and_grads(params, Xb, Yb, alpha=1e-3)
            p[idx] = old
            num = (up - down) / (2 * eps)
            worst = max(worst, abs(num - g[idx]) / max(abs(num), abs(g[idx]), 1e-8))

    Xk = rng.normal(size=(200, 4))
    yk = rng.integers(1, 4, 200)
    Xq = rng.normal(size=(200, 4))
    knn_ok = np.array_equal(KNN(5).fit(Xk, yk).predict(Xq), oracles.knn_predict(Xk.tolist(), yk.tolist(), Xq.tolist()))

    verdict(3, f"NB boundary {boundary:.3f}, MLP gradient rel err {worst:.1e}, KNN oracle agreement", [
        ("NB boundary within 0.2 of 2", abs(boundary - 2.0) < 0.2),
        ("MLP gradient <= 1e-4", worst <= 1e-4),
        ("KNN equals oracle", knn_ok),
    ])


def test_criterion_4_end_to_end(verdict, synthetic_run):
    report = synthetic_run.report
    a, s = report.get("gbt", "all"), report.get("gbt", "selected")
    n_epochs = len(synthetic_run.features)
    verdict(4, f"{n_epochs} epochs, GBT acc {a.accuracy:.3f} (all) / {s.accuracy:.3f} (selected), "
               f"time {a.predict_seconds * 1e3:.2f} / {s.predict_seconds * 1e3:.2f} ms, "
               f"run {synthetic_run.seconds:.1f} s", [
        ("2400 epochs", n_epochs == 2400),
        ("GBT all-feature accuracy >= 0.90", a.accuracy >= 0.90),
        ("selected within 10 points", abs(a.accuracy - s.accuracy) <= 0.10),
        ("selected predict time < all", s.predict_seconds < a.predict_seconds),
        ("run < 60 s", synthetic_run.seconds < 60.0),
    ])


def test_criterion_5_report_fidelity(verdict, synthetic_run):
    report, selection = synthetic_run.report, synthetic_run.selection
    rows = report.table4()
    n_test = report.split["n_test"]
    verdict(5, f"table4 {len(rows)}x4, table2 {len(selection.top)}x10, fused {len(selection.fused)}", [
        ("6 classifiers", len(rows) == 6),
        ("accuracy and time for all and selected",
         all({"accuracy_all", "predict_time_all_s", "accuracy_selected", "predict_time_selected_s"} <= set(r)
             for r in rows)),
        ("3 methods x top-10", sorted(selection.top) == ["correlation", "extra_trees", "gbt"]
         and all(len(v) == 10 for v in selection.top.values())),
        ("14 fused", len(selection.fused) == 14),
        ("normalized entries in [0, 1]", all(np.all((e.normalized >= 0) & (e.normalized <= 1))
                                             for e in report.entries)),
        ("counts sum to test size", all(e.confusion.sum() == n_test for e in report.entries)),
    ])


def test_criterion_6_determinism(verdict, synthetic_run, synthetic_rerun):
    a, b = synthetic_run, synthetic_rerun
    verdict(6, "two identical runs produce identical features, selection and eval tables", [
        ("feature matrix", a.features.to_json() == b.features.to_json()),
        ("selection report", a.selection.to_json() == b.selection.to_json()),
        ("accuracy table", a.report.accuracy_csv() == b.report.accuracy_csv()),
        ("eval report without times", a.report.to_json(include_times=False) == b.report.to_json(include_times=False)),
    ])


def test_criterion_7_affine_invariance(verdict, synthetic_run):
    m = synthetic_run.features
    rng = np.random.default_rng(7)
    scaled = m.with_values(m.X * rng.uniform(0.01, 100.0, m.n_features) + rng.uniform(-100, 100, m.n_features))
    cfg = RunConfig()
    r0, r1 = select_features(m, cfg), select_features(scaled, cfg)
    checks = [(method, [n for n, _ in r0.rankings[method]] == [n for n, _ in r1.rankings[method]])
              for method in r0.rankings]
    verdict(7, "selector rankings unchanged under positive affine rescaling of the synthetic matrix",
            checks + [("fused set", r0.fused == r1.fused)])
