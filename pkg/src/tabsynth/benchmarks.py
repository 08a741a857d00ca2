"""Deterministic synthetic datasets standing in for proprietary tabular data."""

import numpy as np

from ._validation import ValidationError
from .pipeline import ColumnSchema, Schema
from .table import RawTable

BENCHMARKS = ("two-moons+category", "logit-mixture", "skew-missing")
SENTINEL = "-999"


def _fmt(values, digits=4):
    return [repr(round(float(v), digits)) for v in values]


def _sigmoid(a):
    return 1.0 / (1.0 + np.exp(-a))


def _two_moons(n, rng):
    upper = rng.random(n) < 0.5
    t = rng.uniform(0, np.pi, n)
    x1 = np.where(upper, np.cos(t), 1 - np.cos(t)) + rng.normal(0, 0.1, n)
    x2 = np.where(upper, np.sin(t), 0.5 - np.sin(t)) + rng.normal(0, 0.1, n)
    target = rng.random(n) < _sigmoid(3.0 * (x1 - 0.5) + 1.0 * upper - 0.5)
    cols = {
        "x1": _fmt(x1),
        "x2": _fmt(x2),
        "moon": np.where(upper, "upper", "lower").tolist(),
        "target": target.astype(int).astype(str).tolist(),
    }
    schema = Schema([
        ColumnSchema("x1", "continuous"),
        ColumnSchema("x2", "continuous"),
        ColumnSchema("moon", "categorical", vocabulary=("lower", "upper")),
        ColumnSchema("target", "discrete", "binary_target", vocabulary=("0", "1")),
    ])
    return cols, schema


_MIX_WEIGHTS = np.array([0.5, 0.3, 0.2])
_MIX_MEANS = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [2.0, -1.0, 1.0, 0.0, 1.5, -2.0],
    [-2.0, 2.0, -1.0, 1.5, 0.0, 1.0],
])
_MIX_SCALES = np.array([1.0, 0.7, 0.8])
_MIX_COEF = np.array([1.2, -0.8, 0.6, 0.4, -0.5, 0.3])
_REGIONS = ("north", "south", "west")
_CHANNELS = ("web", "branch", "phone", "partner")
_CHANNEL_P = np.array([0.4, 0.3, 0.2, 0.1])
_CHANNEL_EFFECT = np.array([0.5, 0.0, -0.3, -0.8])


def _logit_mixture(n, rng):
    comp = rng.choice(3, size=n, p=_MIX_WEIGHTS)
    mix = np.array([[1.0, 0.4, 0, 0, 0, 0], [0, 1.0, 0, 0.3, 0, 0], [0, 0, 1.0, 0, 0.5, 0],
                    [0, 0, 0, 1.0, 0, 0], [0, 0, 0, 0, 1.0, -0.4], [0, 0, 0, 0, 0, 1.0]])
    z = rng.normal(size=(n, 6)) @ mix
    x = _MIX_MEANS[comp] + z * _MIX_SCALES[comp, None]
    # region follows the component 70% of the time
    region = np.where(rng.random(n) < 0.7, comp, rng.integers(0, 3, n))
    channel = rng.choice(4, size=n, p=_CHANNEL_P)
    logit = 0.9 * (x @ _MIX_COEF) + _CHANNEL_EFFECT[channel] + 0.7 * (region == 2) - 0.3
    target = rng.random(n) < _sigmoid(logit)
    cols = {f"f{i + 1}": _fmt(x[:, i]) for i in range(6)}
    cols["region"] = [_REGIONS[r] for r in region]
    cols["channel"] = [_CHANNELS[c] for c in channel]
    cols["target"] = target.astype(int).astype(str).tolist()
    schema = Schema(
        [ColumnSchema(f"f{i + 1}", "continuous") for i in range(6)]
        + [ColumnSchema("region", "categorical", vocabulary=tuple(sorted(_REGIONS))),
           ColumnSchema("channel", "categorical", vocabulary=tuple(sorted(_CHANNELS))),
           ColumnSchema("target", "discrete", "binary_target", vocabulary=("0", "1"))]
    )
    return cols, schema


def _skew_missing(n, rng):
    active = rng.random(n) >= 0.9
    spend = np.where(active, rng.lognormal(4.0, 1.0, n), 0.0)
    balance = rng.normal(1000.0, 300.0, n)
    balance_missing = rng.random(n) < 0.6
    score = np.rint(rng.normal(650.0, 50.0, n))
    score_sentinel = rng.random(n) < 0.1
    segment = rng.choice(3, size=n, p=[0.6, 0.3, 0.1])
    logit = (1.5 * active + 0.002 * (balance - 1000) * ~balance_missing
             - 0.02 * (score - 650) * ~score_sentinel + 0.8 * (segment == 2) - 1.0)
    target = rng.random(n) < _sigmoid(logit)
    cols = {
        "spend": _fmt(spend, 2),
        "balance": [None if m else v for m, v in zip(balance_missing, _fmt(balance, 2))],
        "score": [SENTINEL if s else str(int(v)) for s, v in zip(score_sentinel, score)],
        "segment": [("retail", "small_business", "premium")[s] for s in segment],
        "default": target.astype(int).astype(str).tolist(),
    }
    schema = Schema([
        ColumnSchema("spend", "continuous"),
        ColumnSchema("balance", "continuous"),
        ColumnSchema("score", "continuous", sentinels=(SENTINEL,)),
        ColumnSchema("segment", "categorical",
                     vocabulary=("premium", "retail", "small_business")),
        ColumnSchema("default", "discrete", "binary_target", vocabulary=("0", "1")),
    ])
    return cols, schema


_BUILDERS = {
    "two-moons+category": _two_moons,
    "logit-mixture": _logit_mixture,
    "skew-missing": _skew_missing,
}


def make_benchmark(name, n, seed=0):
    """Build fixture ``name`` with ``n`` rows; returns ``(RawTable, Schema)``."""
    if name not in _BUILDERS:
        raise ValidationError(f"unknown benchmark {name!r}; choose from {BENCHMARKS}")
    if n < 100:
        raise ValidationError("benchmarks need n >= 100")
    cols, schema = _BUILDERS[name](int(n), np.random.default_rng(seed))
    return RawTable(list(cols), cols), schema
