import math

import numpy as np
from numpy.testing import assert_allclose
import pytest
from scipy import stats

from ldamix.inference import (
    AllocationConfig,
    Chain,
    ContractionConfig,
    Posterior,
    PriorSpec,
    align_labels,
    alr,
    allocation_experiment,
    config_dict,
    contraction_experiment,
    fit_loglog_slope,
    posterior_w_summary,
    run_mcmc,
    softmax0,
    summarize_allocation,
    true_measure,
)
from ldamix.metrics import wasserstein
from ldamix.models import Corpus, LdaParams, MixingMeasure, lda_density, sample_corpus
from ldamix.streams import make_rng, stream_id


def test_prior_spec():
    p = PriorSpec()
    assert_allclose(p.weight_hyper(3), np.ones(3))
    assert p.is_regular(3, 4)
    assert not PriorSpec(topic_prior=[2.0, 1.0]).is_regular(1, 2)
    with pytest.raises(ValueError):
        PriorSpec(weight_prior=[1.0]).weight_hyper(2)


def test_alr_roundtrip():
    p = np.array([[0.2, 0.3, 0.5], [0.1, 0.1, 0.8]])
    assert_allclose(softmax0(alr(p)), p)


def test_streams_are_deterministic_and_distinct():
    a = make_rng(7, "exact", 100, 0).random(3)
    assert_allclose(a, make_rng(7, "exact", 100, 0).random(3))
    assert not np.allclose(a, make_rng(7, "exact", 100, 1).random(3))
    assert stream_id(7, "x", 1) == stream_id(7, "x", 1)
    assert stream_id(7, "x", 1) != stream_id(8, "x", 1)


def test_posterior_loglik_matches_table():
    rng = np.random.default_rng(0)
    G = MixingMeasure([0.3, 0.7], rng.dirichlet(np.ones(3), size=2))
    P = LdaParams(G, 0.8)
    corpus = sample_corpus(P, 4, 30, rng)
    table = lda_density(P, 4)
    ref = sum(math.log(table[tuple(d)]) for d in corpus.docs)
    post = Posterior(corpus.counts(), 2, 0.8)
    assert post.loglik(G.weights, G.atoms) == pytest.approx(ref, rel=1e-12)


def test_single_topic_concentrates_at_word_frequencies():
    rng = np.random.default_rng(1)
    theta = np.array([0.1, 0.2, 0.3, 0.4])
    corpus = sample_corpus(LdaParams(MixingMeasure([1.0], [theta]), 1.0), 20, 1000, rng)
    chain = run_mcmc(corpus, 1, 1.0, steps=1500, rng=rng)
    mean = np.mean([s.atoms[0] for s in chain.samples], axis=0)
    freq = np.bincount(corpus.docs.ravel(), minlength=4) / corpus.docs.size
    assert np.linalg.norm(mean - freq) < 0.02
    assert np.linalg.norm(mean - theta) < 0.02
    assert 0.1 < chain.acceptance["topic0"] < 0.6


def test_single_topic_stationary_distribution_is_beta():
    # K = 1, V = 2 with a uniform prior: the posterior of theta_0 is Beta(1 + n0, 1 + n1).
    docs = np.array([[0, 0, 1], [0, 1, 1], [0, 0, 0], [1, 1, 0]])
    n0 = int((docs == 0).sum())
    n1 = docs.size - n0
    chain = run_mcmc(Corpus(docs, 2), 1, 1.0, steps=100_000, burn_in=5000, thin=20,
                     rng=np.random.default_rng(2), max_samples=10_000)
    x = np.array([s.atoms[0, 0] for s in chain.samples])
    edges = stats.beta.ppf(np.linspace(0, 1, 11), 1 + n0, 1 + n1)
    observed, _ = np.histogram(x, bins=edges)
    expected = np.full(10, x.size / 10)
    assert stats.chisquare(observed, expected).pvalue > 0.01


def test_two_topic_recovery():
    rng = np.random.default_rng(3)
    G0 = MixingMeasure([0.5, 0.5], [[0.5, 0.2, 0.1, 0.1, 0.1], [0.1, 0.1, 0.1, 0.2, 0.5]])
    corpus = sample_corpus(LdaParams(G0, 1.0), 5, 2000, rng)
    chain = run_mcmc(corpus, 2, 1.0, steps=1200, rng=rng)
    mean_w, (q25, q75) = posterior_w_summary(chain, G0, 1)
    assert mean_w < 0.1
    assert q25 <= q75


def test_summary_invariant_to_label_permutation():
    rng = np.random.default_rng(4)
    G0 = MixingMeasure([0.4, 0.6], [[0.7, 0.2, 0.1], [0.1, 0.2, 0.7]])
    corpus = sample_corpus(LdaParams(G0, 1.0), 5, 200, rng)
    chain = run_mcmc(corpus, 2, 1.0, steps=200, rng=np.random.default_rng(5))
    flipped = Chain([MixingMeasure(s.weights[::-1], s.atoms[::-1]) for s in chain.samples], chain.log_post, {})
    a, (a25, a75) = posterior_w_summary(flipped, G0, 1)
    b, (b25, b75) = posterior_w_summary(chain, G0, 1)
    assert_allclose([a, a25, a75], [b, b25, b75], atol=1e-14)


def test_samples_respect_floor_and_simplex():
    rng = np.random.default_rng(6)
    G0 = MixingMeasure([0.5, 0.5], [[0.8, 0.1, 0.1], [0.1, 0.1, 0.8]])
    corpus = sample_corpus(LdaParams(G0, 1.0), 4, 100, rng)
    chain = run_mcmc(corpus, 2, 1.0, PriorSpec(topic_floor=0.05), steps=300, rng=rng)
    for s in chain.samples:
        assert s.atoms.min() >= 0.05
        assert_allclose(s.atoms.sum(axis=1), 1.0)
        assert s.weights.sum() == pytest.approx(1.0)


def test_invalid_initialization():
    corpus = Corpus(np.array([[0, 1], [1, 1]]), 2)
    init = MixingMeasure([1.0], [[1.0, 0.0]])
    with pytest.raises(ValueError, match="invalid initialization"):
        run_mcmc(corpus, 1, 1.0, PriorSpec(topic_floor=0.0), steps=10, init=init)
    with pytest.raises(ValueError):
        run_mcmc(corpus, 1, 1.0, steps=10, burn_in=10)


def test_chain_is_seeded():
    corpus = Corpus(np.array([[0, 1, 2], [2, 2, 1], [0, 0, 1]]), 3)
    a = run_mcmc(corpus, 2, 1.0, steps=100, rng=np.random.default_rng(9))
    b = run_mcmc(corpus, 2, 1.0, steps=100, rng=np.random.default_rng(9))
    assert a.log_post == b.log_post
    assert_allclose(a.samples[-1].atoms, b.samples[-1].atoms)


def test_posterior_w_summary_examples():
    G0 = MixingMeasure([0.5, 0.5], [[0.9, 0.1], [0.1, 0.9]])
    assert posterior_w_summary(Chain([G0, G0], [0, 0], {}), G0) == (0.0, (0.0, 0.0))
    G1 = MixingMeasure([1.0], [[0.5, 0.5]])
    w = wasserstein(G1, G0, 1)[0]
    assert posterior_w_summary(Chain([G0, G1], [0, 0], {}), G0)[0] == pytest.approx(w / 2)
    with pytest.raises(ValueError):
        posterior_w_summary(Chain([], [], {}), G0)


def test_slope_fit():
    m = np.array([100, 316, 1000, 3162])
    slope, se, icpt = fit_loglog_slope(m, 3.0 * m**-0.5)
    assert slope == pytest.approx(-0.5)
    assert se == pytest.approx(0.0, abs=1e-12)
    assert icpt == pytest.approx(math.log(3.0))
    with pytest.raises(ValueError):
        fit_loglog_slope([100, 100, 316], [1.0, 2.0, 3.0])


def test_true_measure():
    G = true_measure(10, 3, 1, dependent_topic=True)
    assert G.K == 4
    assert_allclose(G.atoms[3], G.atoms[:3].mean(axis=0))
    assert_allclose(G.weights, 0.25)
    assert_allclose(true_measure(10, 3, 1).atoms, true_measure(10, 3, 1).atoms)


def test_align_labels():
    G0 = MixingMeasure([0.2, 0.3, 0.5], np.eye(3) * 0.7 + 0.1)
    order = np.array([2, 0, 1])
    G = MixingMeasure(G0.weights[order], G0.atoms[order])
    perm = align_labels(G, G0)
    assert_allclose(G.atoms[perm], G0.atoms)


def test_small_contraction_experiment_is_deterministic():
    cfg = ContractionConfig(V=4, K0=2, N=5, m_grid=(20, 40, 80), K_fit=2, replications=2, steps=60)
    a = contraction_experiment(cfg)
    b = contraction_experiment(cfg)
    assert a.rows == b.rows
    assert a.slope is not None and np.isfinite(a.slope)
    assert [r["m"] for r in a.by_m()] == [20, 40, 80]
    single = contraction_experiment(ContractionConfig(V=4, K0=2, N=5, m_grid=(20,), K_fit=2, replications=1, steps=40))
    assert single.slope is None
    assert ContractionConfig.from_dict(config_dict(cfg)) == cfg


def test_allocation_identity_topics():
    # With basis-vector topics the extra document reveals its proportions directly.
    cfg = AllocationConfig(V=3, K0=3, N=5, grid=((200, 4000),), q0=(0.6, 0.3, 0.1), replications=1, steps=400)
    G0 = MixingMeasure(np.full(3, 1 / 3), np.eye(3) * 0.97 + 0.01)
    rows = allocation_experiment(cfg, G0=G0)
    assert rows[0]["error"] < 0.05
    summary = summarize_allocation(rows, cfg.grid)
    assert summary[0]["n"] == 1
    with pytest.raises(ValueError):
        allocation_experiment(AllocationConfig(q0=(0.5, 0.5)))
