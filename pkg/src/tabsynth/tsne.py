"""Exact t-SNE and the combine-then-split comparison of real and synthetic rows.

t-SNE has no out-of-sample mapping, so both sources are embedded together and
the coordinates are split afterwards; ``mixing_score`` then measures how well
the two clouds interleave.
"""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import TrainingError, ValidationError, check_matrix

MAX_POINTS = 5000
BINARY_SEARCH_STEPS = 64
ENTROPY_TOL = 1e-5
MIN_GAIN = 0.01


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    exaggeration: float = 12.0
    exaggeration_steps: int = 250
    momentum_start: float = 0.5
    momentum_final: float = 0.8
    seed: int = 0
    log_every: int = 50

    def __post_init__(self):
        if self.iterations <= self.exaggeration_steps:
            raise ValidationError("iterations must exceed exaggeration_steps")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be > 0")


@dataclass
class Embedding:
    coords: np.ndarray
    labels: np.ndarray = None
    kl_trace: list = field(default_factory=list)   # (step, KL) pairs

    @property
    def kl(self):
        return self.kl_trace[-1][1] if self.kl_trace else None


def squared_distances(X):
    sq = np.sum(X * X, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def conditional_entropy(dist, beta):
    """Entropy (nats) and probabilities of ``p_j ~ exp(-beta * dist_j)``."""
    dist = np.asarray(dist, dtype=np.float64)
    shifted = dist - dist.min()
    w = np.exp(-beta * shifted)
    s = w.sum()
    p = w / s
    return float(np.log(s) + beta * np.sum(shifted * p)), p


def conditional_affinities(X, perplexity):
    """Row-stochastic ``p_{j|i}``, each row's Gaussian bandwidth found by bisection."""
    X = check_matrix(X, "X")
    n = X.shape[0]
    if n < 10:
        raise ValidationError("t-SNE affinities need at least 10 points")
    if not 1 < perplexity < n - 1:
        raise ValidationError(f"perplexity {perplexity} outside (1, {n - 1})")
    d = squared_distances(X)
    off = ~np.eye(n, dtype=bool)
    # drop the diagonal: row i keeps its n - 1 neighbours
    d = d[off].reshape(n, n - 1)
    d = d - d.min(axis=1, keepdims=True)  # entropy is shift invariant
    target = np.log(perplexity)
    beta = np.ones(n)
    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    done = np.zeros(n, dtype=bool)
    for _ in range(BINARY_SEARCH_STEPS):
        w = np.exp(-d * beta[:, None])
        s = w.sum(axis=1)
        h = np.log(s) + beta * np.sum(d * w, axis=1) / s
        diff = h - target
        done |= np.abs(diff) < ENTROPY_TOL
        if done.all():
            break
        up = (diff > 0) & ~done     # too flat: sharpen
        down = (diff <= 0) & ~done
        lo[up] = beta[up]
        beta[up] = np.where(np.isinf(hi[up]), beta[up] * 2.0, 0.5 * (beta[up] + hi[up]))
        hi[down] = beta[down]
        beta[down] = 0.5 * (beta[down] + lo[down])
    w = np.exp(-d * beta[:, None])
    cond = np.zeros((n, n))
    cond[off] = (w / w.sum(axis=1, keepdims=True)).ravel()
    return cond


def perplexity_affinities(X, perplexity):
    """Symmetric joint affinities ``(p_{j|i} + p_{i|j}) / 2n``."""
    cond = conditional_affinities(X, perplexity)
    return (cond + cond.T) / (2.0 * cond.shape[0])


def _kl(P, Q):
    nz = P > 0
    return float(np.sum(P[nz] * np.log(P[nz] / np.maximum(Q[nz], 1e-300))))


def tsne_embed(X, config=None, init=None):
    """Embed the rows of ``X`` in two dimensions by exact t-SNE.

    ``init`` overrides the default Normal(0, 1e-4) starting coordinates.
    """
    cfg = config or TsneConfig()
    X = check_matrix(X, "X")
    n = X.shape[0]
    if n > MAX_POINTS:
        raise ValidationError(f"exact t-SNE is capped at {MAX_POINTS} points, got {n}")
    if not 1 < cfg.perplexity < n / 3:
        raise ValidationError(f"perplexity must lie in (1, n/3) = (1, {n / 3:.1f})")
    P = perplexity_affinities(X, cfg.perplexity)
    P = np.maximum(P, 1e-12)
    np.fill_diagonal(P, 0.0)
    P /= P.sum()

    if init is None:
        Y = np.random.default_rng(cfg.seed).normal(0.0, 1e-4, size=(n, 2))
    else:
        Y = check_matrix(init, "init", n_cols=2).copy()
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    trace = []
    P_exag = cfg.exaggeration * P
    # preallocated n x n buffers; the loop is memory bound
    num = np.empty((n, n))
    pq = np.empty((n, n))
    for it in range(1, cfg.iterations + 1):
        exaggerate = it <= cfg.exaggeration_steps
        sq = np.sum(Y * Y, axis=1)
        np.matmul(Y, Y.T, out=num)
        num *= -2.0
        num += sq[:, None]
        num += sq[None, :]
        np.maximum(num, 0.0, out=num)
        num += 1.0
        np.reciprocal(num, out=num)
        np.fill_diagonal(num, 0.0)
        z = num.sum()
        log_now = it % cfg.log_every == 0 or it == cfg.iterations
        if log_now:
            kl = _kl(P, num / z)
        # (P - Q) * num  ==  P * num - num**2 / z
        np.multiply(P_exag if exaggerate else P, num, out=pq)
        np.multiply(num, num, out=num)
        num /= z
        pq -= num
        grad = 4.0 * (pq.sum(axis=1)[:, None] * Y - pq @ Y)
        momentum = cfg.momentum_start if exaggerate else cfg.momentum_final
        same_sign = np.sign(grad) == np.sign(update)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, MIN_GAIN, out=gains)
        update = momentum * update - cfg.learning_rate * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
        if log_now:
            if not np.isfinite(kl) or not np.all(np.isfinite(Y)):
                raise TrainingError(f"t-SNE diverged at iteration {it} (KL={kl})")
            trace.append((it, kl))
    return Embedding(Y, None, trace)


def _subsample(X, size, rng):
    if X.shape[0] <= size:
        return X
    idx = np.sort(rng.choice(X.shape[0], size=size, replace=False))
    return X[idx]


def combined_embed(real, synth, config=None, subsample=1000):
    """Embed real and synthetic rows jointly; ``labels`` records each row's source."""
    cfg = config or TsneConfig()
    real = check_matrix(real, "real")
    synth = check_matrix(synth, "synth", n_cols=real.shape[1])
    rng = np.random.default_rng([cfg.seed, 11])
    a = _subsample(real, subsample, rng)
    b = _subsample(synth, subsample, rng)
    emb = tsne_embed(np.vstack([a, b]), cfg)
    emb.labels = np.array(["real"] * len(a) + ["synthetic"] * len(b), dtype=object)
    return emb


def mixing_score(embedding, k=10):
    """Mean fraction of each point's ``k`` nearest neighbours sharing its source.

    0.5 means the sources are indistinguishable, 1.0 fully separated. Ties in
    distance are broken by row index.
    """
    labels = np.asarray(embedding.labels)
    coords = np.asarray(embedding.coords, dtype=np.float64)
    n = coords.shape[0]
    if labels is None or len(set(labels.tolist())) < 2:
        raise ValidationError("mixing score needs points from two sources")
    if not 0 < k < n:
        raise ValidationError(f"k must lie in (0, {n})")
    d = squared_distances(coords)
    np.fill_diagonal(d, np.inf)
    nbrs = np.argsort(d, axis=1, kind="stable")[:, :k]
    same = labels[nbrs] == labels[:, None]
    return float(same.mean())


class TSNE(BaseEstimator):
    """Estimator front end for :func:`tsne_embed` (transductive: ``fit_transform`` only)."""

    def __init__(self, perplexity=30.0, iterations=1000, learning_rate=200.0,
                 exaggeration=12.0, exaggeration_steps=250, random_state=0):
        self.perplexity = perplexity
        self.iterations = iterations
        self.learning_rate = learning_rate
        self.exaggeration = exaggeration
        self.exaggeration_steps = exaggeration_steps
        self.random_state = random_state

    def _config(self):
        return TsneConfig(self.perplexity, self.iterations, self.learning_rate,
                          self.exaggeration, self.exaggeration_steps, seed=self.random_state)

    def fit(self, X, y=None):
        emb = tsne_embed(X, self._config())
        self.embedding_ = emb.coords
        self.kl_divergence_ = emb.kl
        self.kl_trace_ = emb.kl_trace
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X).embedding_
