"""Shared fixtures-by-function and independent numerical oracles for the tests."""

import numpy as np
from scipy import stats

from tabsynth.diffnet import MlpParams, MlpSpec, init_params
from tabsynth.pipeline import fit_pipeline, infer_schema, inverse_transform, transform
from tabsynth.table import RawTable


def random_net(rng, activation="tanh", output="identity", n_out=None):
    depth = int(rng.integers(1, 4))
    widths = [int(rng.integers(1, 9)) for _ in range(depth + 1)]
    if n_out is not None:
        widths[-1] = n_out
    spec = MlpSpec(tuple(widths), activation, output)
    params = init_params(spec, int(rng.integers(1 << 30)))
    # non-zero biases so every code path is exercised
    params.biases = [rng.normal(scale=0.3, size=b.shape) for b in params.biases]
    return spec, params


def linear_net(w, output="identity"):
    w = np.asarray(w, dtype=float).reshape(-1, 1)
    spec = MlpSpec((w.shape[0], 1), "tanh", output)
    return spec, MlpParams([w.copy()], [np.zeros(1)])


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-8)


def fd_param_grad(fn, params, h=1e-5):
    """Central differences of scalar ``fn(params)`` w.r.t. every parameter entry."""
    out = params.zeros_like()
    for src, dst in zip(params.arrays(), out.arrays()):
        for idx in np.ndindex(src.shape):
            keep = src[idx]
            src[idx] = keep + h
            up = fn(params)
            src[idx] = keep - h
            down = fn(params)
            src[idx] = keep
            dst[idx] = (up - down) / (2 * h)
    return out


def fd_input_grad(fn, x, h=1e-5):
    """Central differences of a row-wise scalar ``fn(x) -> (n,)`` w.r.t. each input column."""
    grad = np.zeros_like(x)
    for j in range(x.shape[1]):
        e = np.zeros_like(x)
        e[:, j] = h
        grad[:, j] = (fn(x + e) - fn(x - e)) / (2 * h)
    return grad


def flat(params):
    return np.concatenate([a.ravel() for a in params.arrays()])


# -- pipeline oracles ---------------------------------------------------------

def grid_lambda(x):
    """Independent oracle: scipy's log-likelihood on a 0.01 grid, refined to 0.001."""
    coarse = np.linspace(-5.0, 5.0, 1001)
    best = coarse[np.argmax([stats.boxcox_llf(lam, x) for lam in coarse])]
    fine = np.arange(best - 0.02, best + 0.0205, 0.001)
    return fine[np.argmax([stats.boxcox_llf(lam, x) for lam in fine])]


def fmt(values):
    return [repr(float(v)) for v in values]


def table(**cols):
    return RawTable(list(cols), {k: list(v) for k, v in cols.items()})


def numeric_close(a, b, rtol=1e-6):
    a = np.array([float(v) for v in a])
    b = np.array([float(v) for v in b])
    scale = max(np.max(np.abs(b)), 1.0)
    return np.allclose(a, b, rtol=rtol, atol=1e-12 * scale)


def random_table(rng, n_rows):
    cols = {}
    for j in range(int(rng.integers(1, 6))):
        kind = rng.choice(["normal", "lognormal", "zero_inflated", "discrete", "cat", "negative"])
        if kind == "normal":
            v = fmt(rng.normal(rng.normal(0, 50), rng.uniform(0.1, 20), n_rows))
        elif kind == "lognormal":
            v = fmt(rng.lognormal(rng.normal(), rng.uniform(0.2, 2), n_rows))
        elif kind == "zero_inflated":
            v = fmt(np.where(rng.random(n_rows) < 0.8, 0.0,
                                           rng.exponential(100, n_rows)))
        elif kind == "negative":
            v = fmt(-rng.exponential(5, n_rows))
        elif kind == "discrete":
            v = [str(x) for x in rng.poisson(3, n_rows)]
        else:
            v = list(rng.choice(["a", "b", "c,d", "e"], n_rows))
        cols[f"c{j}"] = v
    return table(**cols)


def assert_roundtrip(t, **opts):
    p = fit_pipeline(t, infer_schema(t), **opts)
    enc = transform(p, t)
    for name, start, stop in p.y_groups:
        assert np.all(enc.y[:, start:stop].sum(axis=1) == 1)
    back = inverse_transform(p, enc)
    for col in p.schema.columns:
        if col.kind == "categorical":
            assert list(back[col.name]) == list(t[col.name])
        else:
            assert numeric_close(back[col.name], t[col.name]), col.name
