"""Fidelity checks for synthetic tables.

Per-feature distribution reports (KS, Jensen-Shannon, means, missing rates),
a train-on-synthetic / test-on-real comparison, and the aggregate report.
"""

import csv
import io
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import ValidationError, check_matrix
from .diffnet import AdamHyper, AdamState, MlpSpec, adam_step, init_params, mlp_backward, mlp_forward
from .pipeline import MISSING_CATEGORY, fit_pipeline
from .table import atomic_write_text
from .tsne import TsneConfig, combined_embed, mixing_score

DEFAULT_THRESHOLDS = {"ks_max": 0.10, "js_max": 0.05, "tstr_gap_max": 0.05, "mixing_max": 0.65}


def ks_statistic(a, b):
    """Largest absolute gap between the empirical CDFs of ``a`` and ``b``."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValidationError("KS statistic needs two non-empty samples")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def js_divergence(p, q):
    """Jensen-Shannon divergence in nats between two histograms on the same bins."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValidationError(f"histograms have different binning: {p.shape} vs {q.shape}")
    if p.sum() <= 0 or q.sum() <= 0:
        raise ValidationError("histograms must have positive mass")
    p, q = p / p.sum(), q / q.sum()
    m = 0.5 * (p + q)

    def kl(a):
        nz = a > 0
        return np.sum(a[nz] * np.log(a[nz] / m[nz]))

    return float(max(0.5 * kl(p) + 0.5 * kl(q), 0.0))


def auc(scores, labels):
    """ROC AUC as the Mann-Whitney statistic; tied scores count one half."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValidationError("scores and labels differ in length")
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC needs both positive and negative labels")
    # average ranks; tie groups share the mean of their positions
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    avg_rank = upper - (counts - 1) / 2.0
    rank_sum = avg_rank[inverse][pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


# -- per-feature reports ------------------------------------------------------

@dataclass
class FeatureReport:
    name: str
    kind: str
    mean_real: float
    mean_synth: float
    missing_rate_real: float
    missing_rate_synth: float
    ks_stat: float
    js_divergence: float
    histogram: dict


def _missing_mask(col):
    return np.array([v is None for v in col], dtype=bool)


def _numeric_report(name, kind, real, synth, bins):
    mr, ms = _missing_mask(real), _missing_mask(synth)
    a = np.array(real[~mr], dtype=np.float64)
    b = np.array(synth[~ms], dtype=np.float64)
    rates = (float(mr.mean()) if mr.size else 0.0, float(ms.mean()) if ms.size else 0.0)
    if a.size and b.size:
        lo, hi = min(a.min(), b.min()), max(a.max(), b.max())
        if hi <= lo:
            hi = lo + 1.0
        edges = np.linspace(lo, hi, bins + 1)
        hr, _ = np.histogram(a, edges)
        hs, _ = np.histogram(b, edges)
        ks, js = ks_statistic(a, b), js_divergence(hr, hs)
    else:
        edges, hr, hs = np.zeros(0), np.zeros(0, int), np.zeros(0, int)
        ks, js = (0.0, 0.0) if a.size == b.size else (1.0, float(np.log(2)))
    return FeatureReport(
        name, kind,
        float(a.mean()) if a.size else None, float(b.mean()) if b.size else None,
        *rates, ks, js,
        {"edges": edges.tolist(), "real": hr.tolist(), "synth": hs.tolist()},
    )


def _categorical_report(name, real, synth):
    mr, ms = _missing_mask(real), _missing_mask(synth)
    a, b = list(real[~mr]), list(synth[~ms])
    cats = sorted(set(a) | set(b))
    hr = np.array([a.count(c) for c in cats]) if cats else np.zeros(0, int)
    hs = np.array([b.count(c) for c in cats]) if cats else np.zeros(0, int)
    if len(a) and len(b):
        js = js_divergence(hr, hs)
    else:
        js = 0.0 if len(a) == len(b) else float(np.log(2))
    return FeatureReport(
        name, "categorical", None, None,
        float(mr.mean()) if mr.size else 0.0, float(ms.mean()) if ms.size else 0.0,
        None, js, {"categories": cats, "real": hr.tolist(), "synth": hs.tolist()},
    )


def feature_reports(real, synth, schema, bins=50):
    """One :class:`FeatureReport` per schema column, in schema order."""
    schema.check_table(real)
    schema.check_table(synth)
    real, synth = schema.apply_sentinels(real), schema.apply_sentinels(synth)
    out = []
    for col in schema.columns:
        if col.kind == "categorical" or col.target == "binary_target":
            out.append(_categorical_report(col.name, real[col.name], synth[col.name]))
        else:
            out.append(_numeric_report(col.name, col.kind, real[col.name], synth[col.name], bins))
    return out


# -- supervised models --------------------------------------------------------

class _MLPBase(BaseEstimator):
    _output = "identity"

    def __init__(self, hidden=(32,), activation="tanh", learning_rate=1e-3, steps=2000,
                 batch_size=256, random_state=0):
        self.hidden = hidden
        self.activation = activation
        self.learning_rate = learning_rate
        self.steps = steps
        self.batch_size = batch_size
        self.random_state = random_state

    def _output_grad(self, out, target):
        raise NotImplementedError

    def _fit(self, X, target):
        X = check_matrix(X, "X")
        target = np.asarray(target, dtype=np.float64).reshape(-1, 1)
        if target.shape[0] != X.shape[0]:
            raise ValidationError("X and y differ in length")
        self.spec_ = MlpSpec((X.shape[1], *self.hidden, 1), self.activation, self._output)
        params = init_params(self.spec_, self.random_state)
        state = AdamState.zeros(params)
        hyper = AdamHyper(self.learning_rate, 0.9, 0.999, 1e-8)
        rng = np.random.default_rng([self.random_state, 7])
        b = min(self.batch_size, X.shape[0])
        for _ in range(self.steps):
            idx = rng.integers(0, X.shape[0], size=b)
            out, cache = mlp_forward(params, self.spec_, X[idx])
            grads, _ = mlp_backward(params, self.spec_, cache,
                                    self._output_grad(out, target[idx]) / b)
            params, state = adam_step(params, grads, state, hyper)
        self.params_ = params
        return self

    def _raw(self, X):
        check_is_fitted(self, "params_")
        return mlp_forward(self.params_, self.spec_, X)[0][:, 0]


class MLPBinaryClassifier(ClassifierMixin, _MLPBase):
    """Small sigmoid-output MLP trained with cross-entropy and Adam minibatches."""

    _output = "sigmoid"

    def _output_grad(self, out, target):
        # d(cross-entropy)/d(prob); times sigmoid' this is (p - y)
        p = np.clip(out, 1e-12, 1 - 1e-12)
        return (p - target) / (p * (1 - p))

    def fit(self, X, y):
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValidationError(f"need exactly two classes, got {len(self.classes_)}")
        return self._fit(X, (y == self.classes_[1]).astype(np.float64))

    def predict_proba(self, X):
        p = self._raw(X)
        return np.column_stack([1 - p, p])

    def predict(self, X):
        return self.classes_[(self._raw(X) > 0.5).astype(int)]


class MLPRegressorNet(RegressorMixin, _MLPBase):
    """Identity-output MLP trained on squared error."""

    def _output_grad(self, out, target):
        return 2.0 * (out - target)

    def fit(self, X, y):
        y = np.asarray(y, dtype=np.float64)
        self.y_mean_, self.y_std_ = y.mean(), (y.std() or 1.0)
        return self._fit(X, (y - self.y_mean_) / self.y_std_)

    def predict(self, X):
        return self._raw(X) * self.y_std_ + self.y_mean_


# -- TSTR ---------------------------------------------------------------------

@dataclass
class TstrConfig:
    hidden: tuple = (32,)
    activation: str = "tanh"
    learning_rate: float = 1e-3
    steps: int = 2000
    batch_size: int = 256
    seed: int = 0


@dataclass
class TstrResult:
    metric: str          # "auc", or "spearman" for a continuous target
    score_real: float
    score_synth: float
    gap: float
    hyperparameters: dict = field(default_factory=dict)

    @property
    def auc_real(self):
        return self.score_real

    @property
    def auc_synth(self):
        return self.score_synth

    def passes(self, gap_max):
        return self.gap <= gap_max


def tstr_result(score_real, score_synth, metric="auc", hyperparameters=None):
    return TstrResult(metric, float(score_real), float(score_synth),
                      float(score_real) - float(score_synth), dict(hyperparameters or {}))


def _supervised_arrays(pipeline, table):
    enc = pipeline.transform(table)
    target = pipeline.schema.target
    if target.target == "binary_target":
        _, start, stop = pipeline.target_group
        cats = pipeline.categorical[-1].categories
        positive = [c for c in cats if c != MISSING_CATEGORY][-1]
        labels = (np.argmax(enc.y[:, start:stop], axis=1) == cats.index(positive)).astype(int)
        X = np.hstack([enc.x, enc.y[:, :start], enc.y[:, stop:]])
        return X, labels
    cols = pipeline.x_columns
    keep = [i for i, c in enumerate(cols) if c not in (target.name, f"{target.name}__missing")]
    j = cols.index(target.name)
    num = pipeline.numeric[[c.name for c in pipeline.numeric if not c.degenerate].index(target.name)]
    values = enc.x[:, j] * num.scale + num.offset  # Box-Cox scale is fine for rank metrics
    return np.hstack([enc.x[:, keep], enc.y]), values


def tstr(real_train, synth_train, real_holdout, schema, config=None):
    """Train identical models on real and synthetic tables, score both on real holdout."""
    config = config or TstrConfig()
    target = schema.target
    if target is None:
        raise ValidationError("TSTR needs a target column in the schema")
    # one encoder fitted on the real training split serves all three tables
    pipeline = fit_pipeline(real_train, schema, strict=False)
    X_real, y_real = _supervised_arrays(pipeline, real_train)
    X_synth, y_synth = _supervised_arrays(pipeline, synth_train)
    X_hold, y_hold = _supervised_arrays(pipeline, real_holdout)
    kw = dict(hidden=tuple(config.hidden), activation=config.activation,
              learning_rate=config.learning_rate, steps=config.steps,
              batch_size=config.batch_size, random_state=config.seed)
    if target.target == "binary_target":
        for name, lab in (("real", y_real), ("synthetic", y_synth)):
            if len(np.unique(lab)) < 2:
                raise ValidationError(f"{name} training data has a single target class")
        real_model = MLPBinaryClassifier(**kw).fit(X_real, y_real)
        synth_model = MLPBinaryClassifier(**kw).fit(X_synth, y_synth)
        return tstr_result(auc(real_model.predict_proba(X_hold)[:, 1], y_hold),
                           auc(synth_model.predict_proba(X_hold)[:, 1], y_hold), "auc", kw)
    real_model = MLPRegressorNet(**kw).fit(X_real, y_real)
    synth_model = MLPRegressorNet(**kw).fit(X_synth, y_synth)
    rho_real = stats.spearmanr(real_model.predict(X_hold), y_hold).statistic
    rho_synth = stats.spearmanr(synth_model.predict(X_hold), y_hold).statistic
    return tstr_result(rho_real, rho_synth, "spearman", kw)


# -- aggregate report ---------------------------------------------------------

@dataclass
class EvalReport:
    features: list
    tstr: TstrResult = None
    mixing_score: float = None
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))

    @property
    def aggregates(self):
        ks = [f.ks_stat for f in self.features if f.ks_stat is not None]
        js = [f.js_divergence for f in self.features]
        return {
            "ks_max": max(ks) if ks else None,
            "ks_mean": float(np.mean(ks)) if ks else None,
            "js_max": max(js) if js else None,
            "js_mean": float(np.mean(js)) if js else None,
        }

    @property
    def checks(self):
        th = self.thresholds
        out = {}
        ks = [f.ks_stat for f in self.features if f.ks_stat is not None]
        out["ks"] = all(k <= th["ks_max"] for k in ks)
        cat_js = [f.js_divergence for f in self.features if f.kind == "categorical"]
        out["js"] = all(j <= th["js_max"] for j in cat_js)
        if self.tstr is not None:
            out["tstr_gap"] = self.tstr.passes(th["tstr_gap_max"])
        if self.mixing_score is not None:
            out["mixing"] = self.mixing_score <= th["mixing_max"]
        return out

    @property
    def passed(self):
        return all(self.checks.values())

    def to_dict(self):
        return {
            "features": [asdict(f) for f in self.features],
            "aggregates": self.aggregates,
            "tstr": None if self.tstr is None else asdict(self.tstr),
            "mixing_score": self.mixing_score,
            "thresholds": self.thresholds,
            "checks": self.checks,
            "passed": self.passed,
        }

    def save(self, path):
        atomic_write_text(path, json.dumps(self.to_dict(), indent=2) + "\n")

    def write_histograms(self, directory):
        """One CSV per feature: ``bin_left,bin_right,real,synth`` or ``category,real,synth``."""
        os.makedirs(directory, exist_ok=True)
        paths = []
        for f in self.features:
            h = f.histogram
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            if "categories" in h:
                w.writerow(["category", "real", "synth"])
                w.writerows(zip(h["categories"], h["real"], h["synth"]))
            else:
                e = h["edges"]
                w.writerow(["bin_left", "bin_right", "real", "synth"])
                w.writerows((repr(e[i]), repr(e[i + 1]), r, s)
                            for i, (r, s) in enumerate(zip(h["real"], h["synth"])))
            path = os.path.join(directory, f"hist_{_safe_name(f.name)}.csv")
            atomic_write_text(path, buf.getvalue())
            paths.append(path)
        return paths


def _safe_name(name):
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)


def encoded_matrix(pipeline, table):
    """Joined ``[x, y]`` encoding, the space in which t-SNE compares rows."""
    return pipeline.transform(table).joined()


def embedding_mixing(real, synth, schema, tsne_config=None, subsample=1000, k=10):
    """Mixing score of real vs synthetic rows in a joint t-SNE embedding."""
    pipeline = fit_pipeline(real, schema, strict=False)
    emb = combined_embed(encoded_matrix(pipeline, real), encoded_matrix(pipeline, synth),
                         tsne_config or TsneConfig(), subsample)
    return mixing_score(emb, k), emb


def evaluate(real, synth, schema, holdout=None, thresholds=None, tstr_config=None,
             tsne_config=None, with_mixing=True, mixing_subsample=1000, mixing_k=10, bins=50):
    """Build an :class:`EvalReport`.

    TSTR runs only when ``holdout`` (a held-out real table) is given and the
    schema has a target.
    """
    th = dict(DEFAULT_THRESHOLDS)
    for key, value in (thresholds or {}).items():
        if key not in th:
            raise ValidationError(f"unknown threshold {key!r}")
        th[key] = float(value)
    features = feature_reports(real, synth, schema, bins)
    tstr_res = None
    if holdout is not None and schema.target is not None:
        tstr_res = tstr(real, synth, holdout, schema, tstr_config)
    mix = None
    if with_mixing and real.n_rows and synth.n_rows:
        mix, _ = embedding_mixing(real, synth, schema, tsne_config, mixing_subsample, mixing_k)
    return EvalReport(features, tstr_res, mix, th)
