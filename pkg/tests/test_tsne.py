import numpy as np
import pytest
from sklearn.cluster import KMeans

from tabsynth._validation import ValidationError
from tabsynth.tsne import (
    TSNE,
    Embedding,
    TsneConfig,
    combined_embed,
    conditional_affinities,
    conditional_entropy,
    mixing_score,
    perplexity_affinities,
    tsne_embed,
)

SHORT = TsneConfig(iterations=300, seed=3)


def three_clusters(rng, n_per=100, sigma=0.1):
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [5.0, 5.0 * np.sqrt(3)]])
    labels = np.repeat(np.arange(3), n_per)
    return centers[labels] + rng.normal(0, sigma, (3 * n_per, 2)), labels


def purity(assign, labels):
    return sum(np.bincount(labels[assign == c]).max() for c in np.unique(assign)) / len(labels)


# -- affinities ---------------------------------------------------------------

@pytest.mark.parametrize("m", [2, 5, 17])
def test_uniform_neighbours_have_perplexity_m(m):
    for beta in (0.1, 1.0, 30.0):
        h, p = conditional_entropy(np.full(m, 2.5), beta)
        assert h == pytest.approx(np.log(m), abs=1e-12)
        np.testing.assert_allclose(p, 1.0 / m)


def test_conditionals_hit_target_perplexity(rng):
    X = rng.normal(size=(120, 4))
    cond = conditional_affinities(X, 15.0)
    np.testing.assert_allclose(cond.sum(axis=1), 1.0)
    assert np.all(np.diag(cond) == 0)
    p = np.where(cond > 0, cond, 1.0)
    entropy = -np.sum(cond * np.log(p), axis=1)
    np.testing.assert_allclose(entropy, np.log(15.0), atol=1e-5)


def test_joint_affinities_are_symmetric_distribution(rng):
    P = perplexity_affinities(rng.normal(size=(60, 3)), 10.0)
    np.testing.assert_allclose(P, P.T, atol=0)
    assert P.sum() == pytest.approx(1.0)
    assert np.all(P >= 0) and np.all(np.diag(P) == 0)


def test_duplicate_points_terminate_with_finite_affinities(rng):
    X = np.repeat(rng.normal(size=(10, 2)), 4, axis=0)
    P = perplexity_affinities(X, 5.0)
    assert np.all(np.isfinite(P))
    assert P.sum() == pytest.approx(1.0)


def test_perplexity_range_checked(rng):
    X = rng.normal(size=(30, 2))
    with pytest.raises(ValidationError):
        perplexity_affinities(X, 1.0)
    with pytest.raises(ValidationError):
        perplexity_affinities(X, 40.0)
    with pytest.raises(ValidationError):
        tsne_embed(X, TsneConfig(perplexity=12.0))  # above n/3


# -- embedding ----------------------------------------------------------------

def test_three_clusters_recovered(rng):
    X, labels = three_clusters(rng)
    emb = tsne_embed(X, TsneConfig(seed=1))
    assign = KMeans(3, n_init=10, random_state=0).fit_predict(emb.coords)
    assert purity(assign, labels) >= 0.95


def test_kl_trace_schedule_and_decrease(rng):
    X, _ = three_clusters(rng, n_per=40)
    emb = tsne_embed(X, TsneConfig(perplexity=20.0, iterations=400, seed=2))
    steps = [s for s, _ in emb.kl_trace]
    assert steps == list(range(50, 401, 50))
    kl = dict(emb.kl_trace)
    assert kl[400] < kl[300]
    assert emb.kl == kl[400] and kl[400] >= 0


def test_embedding_deterministic(rng):
    X = rng.normal(size=(60, 3))
    a = tsne_embed(X, TsneConfig(perplexity=10.0, iterations=300, seed=4))
    b = tsne_embed(X, TsneConfig(perplexity=10.0, iterations=300, seed=4))
    np.testing.assert_array_equal(a.coords, b.coords)


def test_affinities_permutation_equivariant(rng):
    X = rng.normal(size=(50, 3))
    perm = rng.permutation(50)
    P = perplexity_affinities(X, 10.0)
    np.testing.assert_allclose(perplexity_affinities(X[perm], 10.0), P[np.ix_(perm, perm)],
                               rtol=1e-9, atol=1e-15)


def test_early_iterations_permutation_equivariant(rng):
    # exact in real arithmetic; over long runs t-SNE amplifies summation-order
    # rounding, so compare a short run
    X = rng.normal(size=(50, 3))
    init = rng.normal(0, 1e-4, size=(50, 2))
    perm = rng.permutation(50)
    cfg = TsneConfig(perplexity=10.0, iterations=20, exaggeration_steps=10)
    a = tsne_embed(X, cfg, init=init)
    b = tsne_embed(X[perm], cfg, init=init[perm])
    np.testing.assert_allclose(b.coords, a.coords[perm], rtol=1e-6, atol=1e-12)


def test_size_cap():
    with pytest.raises(ValidationError):
        tsne_embed(np.zeros((5001, 1)))


def test_config_validation():
    with pytest.raises(ValidationError):
        TsneConfig(iterations=200)
    with pytest.raises(ValidationError):
        TsneConfig(learning_rate=0)


# -- mixing -------------------------------------------------------------------

def test_mixing_separated_sources():
    rng = np.random.default_rng(0)
    coords = np.vstack([rng.normal(size=(50, 2)), rng.normal(size=(50, 2)) + 100])
    labels = np.array(["real"] * 50 + ["synthetic"] * 50)
    assert mixing_score(Embedding(coords, labels)) >= 0.95


def test_mixing_full_neighbourhood_counting():
    n = 40
    coords = np.random.default_rng(1).normal(size=(n, 2))
    labels = np.array(["a", "b"] * (n // 2))
    assert mixing_score(Embedding(coords, labels), k=n - 1) == pytest.approx((n / 2 - 1) / (n - 1))


def test_mixing_ties_broken_by_index():
    # all points coincide: neighbours are the lowest other indices
    coords = np.zeros((6, 2))
    labels = np.array(["a", "a", "b", "b", "b", "b"])
    # row 0 -> {1}, row 1 -> {0}, rows 2..5 -> {0}
    assert mixing_score(Embedding(coords, labels), k=1) == pytest.approx(2 / 6)


def test_mixing_exchangeable_labels_centered(rng):
    scores = []
    for _ in range(20):
        coords = rng.normal(size=(200, 2))
        labels = rng.permutation(np.array(["real"] * 100 + ["synthetic"] * 100))
        scores.append(mixing_score(Embedding(coords, labels)))
    # mean of 20 draws; the expected value is (n/2 - 1)/(n - 1) ~ 0.497
    assert abs(np.mean(scores) - 99 / 199) < 0.02


def test_mixing_requires_two_sources():
    with pytest.raises(ValidationError):
        mixing_score(Embedding(np.zeros((5, 2)), np.array(["a"] * 5)))


# -- combined embedding -------------------------------------------------------

def test_combined_embed_label_counts_and_determinism(rng):
    real = rng.normal(size=(150, 3))
    synth = rng.normal(size=(80, 3))
    a = combined_embed(real, synth, SHORT, subsample=100)
    assert list(a.labels).count("real") == 100
    assert list(a.labels).count("synthetic") == 80
    b = combined_embed(real, synth, SHORT, subsample=100)
    np.testing.assert_array_equal(a.coords, b.coords)


def test_combined_embed_same_distribution_mixes(rng):
    data = rng.normal(size=(400, 4))
    emb = combined_embed(data[:200], data[200:], SHORT)
    assert 0.4 <= mixing_score(emb) <= 0.6


def test_combined_embed_far_sources_separate(rng):
    emb = combined_embed(rng.normal(size=(100, 3)), rng.normal(size=(100, 3)) + 50,
                         TsneConfig(seed=3))
    assert mixing_score(emb) >= 0.95


def test_estimator_interface(rng):
    est = TSNE(perplexity=10.0, iterations=300, random_state=5)
    assert est.get_params()["perplexity"] == 10.0
    out = est.fit_transform(rng.normal(size=(40, 3)))
    assert out.shape == (40, 2) and est.kl_divergence_ >= 0
