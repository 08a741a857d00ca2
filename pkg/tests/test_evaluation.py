import itertools
import json

import numpy as np
import pytest
from scipy import stats
from scipy.spatial.distance import jensenshannon

from tabsynth._validation import ValidationError
from tabsynth.benchmarks import BENCHMARKS, SENTINEL, make_benchmark
from tabsynth.evaluation import (
    EvalReport,
    FeatureReport,
    MLPBinaryClassifier,
    MLPRegressorNet,
    TstrConfig,
    auc,
    evaluate,
    feature_reports,
    js_divergence,
    ks_statistic,
    tstr,
    tstr_result,
)
from tabsynth.pipeline import ColumnSchema, Schema
from tabsynth.table import RawTable

FAST_TSTR = TstrConfig(steps=300)


def brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p, q in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


# -- KS -----------------------------------------------------------------------

def test_ks_matches_scipy(rng):
    for _ in range(50):
        a = rng.normal(size=rng.integers(1, 60))
        b = rng.normal(0.3, 1.2, size=rng.integers(1, 60))
        # rounding creates ties within and across samples
        a, b = np.round(a, 1), np.round(b, 1)
        assert ks_statistic(a, b) == pytest.approx(stats.ks_2samp(a, b).statistic, abs=1e-12)


def test_ks_identical_and_disjoint():
    x = np.arange(10.0)
    assert ks_statistic(x, x) == 0.0
    assert ks_statistic(x, x + 100) == 1.0
    with pytest.raises(ValidationError):
        ks_statistic([], [1.0])


# -- JS -----------------------------------------------------------------------

def test_js_matches_scipy(rng):
    for _ in range(50):
        p = rng.integers(0, 5, size=8).astype(float)
        q = rng.integers(0, 5, size=8).astype(float)
        if p.sum() == 0 or q.sum() == 0:
            continue
        # scipy returns the square root of the divergence
        assert js_divergence(p, q) == pytest.approx(jensenshannon(p, q) ** 2, abs=1e-12)


def test_js_anchor_values():
    assert js_divergence([1, 0], [0, 1]) == pytest.approx(np.log(2), abs=1e-15)
    assert js_divergence([3, 1], [3, 1]) == 0.0
    with pytest.raises(ValidationError):
        js_divergence([1, 1], [1, 1, 1])
    with pytest.raises(ValidationError):
        js_divergence([0, 0], [1, 1])


# -- AUC ----------------------------------------------------------------------

def test_auc_matches_pairwise_enumeration(rng):
    for _ in range(200):
        n = int(rng.integers(2, 51))
        labels = rng.integers(0, 2, size=n)
        labels[0], labels[1] = 0, 1
        scores = rng.integers(0, 6, size=n) / 5.0  # heavy ties
        assert auc(scores, labels) == brute_auc(scores, labels)


def test_auc_anchors():
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0
    assert auc([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1]) == 0.5
    with pytest.raises(ValidationError):
        auc([0.1, 0.2], [1, 1])


def test_auc_invariant_under_monotone_maps(rng):
    s = rng.normal(size=40)
    y = rng.integers(0, 2, size=40)
    y[:2] = [0, 1]
    base = auc(s, y)
    assert auc(np.exp(s), y) == base
    assert auc(3 * s + 7, y) == base


# -- feature reports ----------------------------------------------------------

def test_feature_reports_cover_every_column():
    table, schema = make_benchmark("skew-missing", 500, seed=1)
    reports = feature_reports(table, table, schema)
    assert [r.name for r in reports] == schema.names
    for r in reports:
        assert r.js_divergence == 0.0
        if r.ks_stat is not None:
            assert r.ks_stat == 0.0


def test_feature_reports_sentinels_are_missing():
    table, schema = make_benchmark("skew-missing", 2000, seed=1)
    score = {r.name: r for r in feature_reports(table, table, schema)}["score"]
    raw = np.array(table["score"])
    assert score.missing_rate_real == pytest.approx(np.mean(raw == SENTINEL))
    assert score.mean_real > 500  # the -999 cells did not enter the mean


def test_feature_reports_detect_shift():
    schema = Schema([ColumnSchema("a", "continuous"), ColumnSchema("c", "categorical",
                                                                  vocabulary=("u", "v"))])
    real = RawTable(["a", "c"], {"a": [repr(float(v)) for v in range(100)], "c": ["u"] * 100})
    synth = RawTable(["a", "c"], {"a": [repr(float(v) + 50) for v in range(100)],
                                  "c": ["v"] * 100})
    rep = {r.name: r for r in feature_reports(real, synth, schema)}
    assert rep["a"].ks_stat == pytest.approx(0.5)
    assert rep["c"].js_divergence == pytest.approx(np.log(2))
    assert rep["c"].histogram["categories"] == ["u", "v"]


# -- supervised models --------------------------------------------------------

def test_mlp_classifier_learns_separable_data(rng):
    X = rng.normal(size=(400, 2))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    clf = MLPBinaryClassifier(steps=500).fit(X, y)
    assert auc(clf.predict_proba(X)[:, 1], y) > 0.98
    assert set(clf.predict(X)) <= {0, 1}


def test_mlp_regressor_fits_linear_signal(rng):
    X = rng.normal(size=(400, 3))
    y = 2 * X[:, 0] - X[:, 2] + 10
    reg = MLPRegressorNet(steps=800).fit(X, y)
    assert reg.score(X, y) > 0.95


# -- TSTR ---------------------------------------------------------------------

def test_tstr_identical_training_sets_give_zero_gap():
    table, schema = make_benchmark("logit-mixture", 1200, seed=2)
    train_part, hold = table.take(np.arange(800)), table.take(np.arange(800, 1200))
    res = tstr(train_part, train_part, hold, schema, FAST_TSTR)
    assert res.gap == 0.0
    assert res.auc_real == res.auc_synth and res.metric == "auc"
    assert res.hyperparameters["steps"] == 300


def test_tstr_report_formatting_anchor():
    res = tstr_result(0.89, 0.86)
    assert res.gap == pytest.approx(0.03)
    assert res.passes(0.05)
    assert not tstr_result(0.89, 0.80).passes(0.05)


def test_tstr_continuous_target_uses_spearman():
    table, schema = make_benchmark("two-moons+category", 600, seed=4)
    cols = [ColumnSchema(c.name, c.kind, c.target, vocabulary=c.vocabulary)
            for c in schema.columns[:-1]]
    cols[0] = ColumnSchema("x1", "continuous", "continuous_target")
    schema = Schema(cols)
    table = RawTable(schema.names, {c: table[c] for c in schema.names})
    res = tstr(table.take(np.arange(400)), table.take(np.arange(400)),
               table.take(np.arange(400, 600)), schema, FAST_TSTR)
    assert res.metric == "spearman" and res.gap == 0.0
    assert res.score_real > 0.3


def test_tstr_needs_target():
    table, schema = make_benchmark("two-moons+category", 200, seed=4)
    no_target = Schema([ColumnSchema(c.name, c.kind if c.kind != "discrete" else "categorical",
                                     vocabulary=c.vocabulary) for c in schema.columns])
    with pytest.raises(ValidationError):
        tstr(table, table, table, no_target)


# -- aggregate report ---------------------------------------------------------

def test_eval_report_identity_comparison(tmp_path):
    table, schema = make_benchmark("two-moons+category", 400, seed=5)
    hold, _ = make_benchmark("two-moons+category", 200, seed=6)
    report = evaluate(table, table, schema, holdout=hold, tstr_config=FAST_TSTR,
                      with_mixing=False)
    assert report.aggregates["ks_max"] == 0.0
    assert report.tstr.gap == 0.0
    assert report.passed
    path = tmp_path / "report.json"
    report.save(path)
    doc = json.loads(path.read_text())
    assert doc["passed"] and doc["checks"]["tstr_gap"]
    paths = report.write_histograms(tmp_path / "hist")
    assert len(paths) == len(schema.columns)
    assert (tmp_path / "hist" / "hist_x1.csv").read_text().startswith("bin_left,bin_right,real,synth")


def test_eval_report_threshold_checks():
    feats = [FeatureReport("a", "continuous", 0, 0, 0, 0, 0.2, 0.01, {}),
             FeatureReport("b", "categorical", None, None, 0, 0, None, 0.01, {})]
    rep = EvalReport(feats, tstr_result(0.9, 0.88), 0.6)
    assert rep.checks == {"ks": False, "js": True, "tstr_gap": True, "mixing": True}
    assert not rep.passed
    with pytest.raises(ValidationError):
        table, schema = make_benchmark("two-moons+category", 100)
        evaluate(table, table, schema, thresholds={"nope": 1})


# -- benchmarks ---------------------------------------------------------------

@pytest.mark.parametrize("name", BENCHMARKS)
def test_benchmarks_deterministic(name):
    a, sa = make_benchmark(name, 300, seed=8)
    b, sb = make_benchmark(name, 300, seed=8)
    assert a.equals(b) and sa.to_dict() == sb.to_dict()
    c, _ = make_benchmark(name, 300, seed=9)
    assert not a.equals(c)
    sa.check_table(a)


def test_skew_missing_pathologies():
    table, _ = make_benchmark("skew-missing", 20000, seed=0)
    balance_missing = np.mean([v is None for v in table["balance"]])
    assert abs(balance_missing - 0.60) <= 0.02
    spend_zero = np.mean([float(v) == 0.0 for v in table["spend"]])
    assert abs(spend_zero - 0.90) <= 0.02
    assert abs(np.mean(np.array(table["score"]) == SENTINEL) - 0.10) <= 0.02


def test_benchmark_argument_checks():
    with pytest.raises(ValidationError):
        make_benchmark("iris", 500)
    with pytest.raises(ValidationError):
        make_benchmark("logit-mixture", 10)
