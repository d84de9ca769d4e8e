import itertools
import math

import numpy as np
from numpy.testing import assert_allclose
import pytest
from hypothesis import given, settings, strategies as st

from ldamix.models import LdaParams, MixingMeasure, marginalize, mixture_density
from ldamix.metrics import (
    SupportMismatch,
    check_prop2_bounds,
    hellinger_distance,
    hellinger_sq,
    kl_divergence,
    tv_distance,
    voronoi_surrogate,
    wasserstein,
)
from ldamix.transport import solve_transport
from ldamix.tensor import outer_product


def _random_table(rng, shape):
    p = rng.random(shape) + 1e-3
    return p / p.sum()


def test_tv_examples():
    assert tv_distance([0.6, 0.4], [0.5, 0.5]) == pytest.approx(0.1)
    assert tv_distance([1.0, 0.0], [0.0, 1.0]) == 1.0
    assert tv_distance([0.3, 0.7], [0.3, 0.7]) == 0.0
    with pytest.raises(ValueError):
        tv_distance([1.0], [0.5, 0.5])


def test_kl_bernoulli():
    assert kl_divergence([0.25, 0.75], [0.5, 0.5]) == pytest.approx(0.75 * math.log(1.5) + 0.25 * math.log(0.5))
    assert kl_divergence([0.25, 0.75], [0.5, 0.5]) == pytest.approx(0.1308, abs=1e-4)
    assert kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.1438, abs=1e-4)


def test_kl_support_mismatch_is_signalled():
    with pytest.raises(SupportMismatch):
        kl_divergence([0.5, 0.5], [1.0, 0.0])
    assert kl_divergence([0.5, 0.5], [1.0, 0.0], strict=False) == math.inf
    assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2))


def test_hellinger_disjoint():
    assert hellinger_distance([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10**6))
def test_distance_chain(V, seed):
    rng = np.random.default_rng(seed)
    p, q = _random_table(rng, V), _random_table(rng, V)
    h = hellinger_distance(p, q)
    tv = tv_distance(p, q)
    assert h**2 <= tv + 1e-15
    assert tv <= math.sqrt(2) * h + 1e-15
    assert h**2 <= kl_divergence(p, q) / 2 + 1e-15


def _product_density(theta, N):
    return outer_product([theta] * N)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.integers(1, 6), st.integers(0, 10**6))
def test_multinomial_distance_bounds(V, N, seed):
    rng = np.random.default_rng(seed)
    c0 = 0.05
    if N * 1.0 * V ** N > 5000:
        N = 3
    th = c0 + (1 - V * c0) * rng.dirichlet(np.ones(V))
    thp = c0 + (1 - V * c0) * rng.dirichlet(np.ones(V))
    p, q = _product_density(th, N), _product_density(thp, N)
    d = np.linalg.norm(th - thp)
    assert hellinger_distance(p, q) <= math.sqrt(N / (8 * c0)) * d + 1e-12
    assert kl_divergence(p, q) <= N / c0 * d + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_convexity_marginalization_and_products(seed):
    rng = np.random.default_rng(seed)
    p1, q1, p2, q2 = (_random_table(rng, (2, 3)) for _ in range(4))
    lam = rng.uniform()
    for d in (tv_distance, hellinger_sq, kl_divergence):
        mix = d(lam * p1 + (1 - lam) * p2, lam * q1 + (1 - lam) * q2)
        assert mix <= lam * d(p1, q1) + (1 - lam) * d(p2, q2) + 1e-14
        assert d(marginalize(p1, [0]), marginalize(q1, [0])) <= d(p1, q1) + 1e-14
        prod = d(np.multiply.outer(p1, p2), np.multiply.outer(q1, q2))
        assert prod <= d(p1, q1) + d(p2, q2) + 1e-14
    kl_prod = kl_divergence(np.multiply.outer(p1, p2), np.multiply.outer(q1, q2))
    assert kl_prod == pytest.approx(kl_divergence(p1, q1) + kl_divergence(p2, q2), rel=1e-10)


def test_wasserstein_examples():
    a, b = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    G = MixingMeasure([0.5, 0.5], [a, b])
    assert wasserstein(G, G, 1)[0] == pytest.approx(0.0, abs=1e-15)
    Ga = MixingMeasure([1.0], [a])
    Gb = MixingMeasure([1.0], [b])
    for r in (1, 2):
        assert wasserstein(Ga, Gb, r)[0] == pytest.approx(math.sqrt(2))
    # ||a - b|| = sqrt(2) here, so rescale to unit distance through the atoms.
    c = np.array([0.5, 0.5])
    d = np.array([0.5 + 1 / math.sqrt(2) / 1, 0.5 - 1 / math.sqrt(2)])
    H = MixingMeasure([0.5, 0.5], [c, np.clip(d, 0, 1) / np.clip(d, 0, 1).sum()])
    dist = np.linalg.norm(H.atoms[0] - H.atoms[1])
    val, plan = wasserstein(H, MixingMeasure([1.0], [c]), 1)
    assert val == pytest.approx(0.5 * dist)
    assert_allclose(plan.matrix, [[0.5], [0.5]])


def test_wasserstein_plan_marginals_and_cost():
    rng = np.random.default_rng(0)
    G = MixingMeasure(rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(3), size=4))
    H = MixingMeasure(rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3), size=3))
    val, plan = wasserstein(G, H, 2)
    assert np.all(plan.matrix >= 0)
    assert_allclose(plan.matrix.sum(axis=1), G.weights, atol=1e-9)
    assert_allclose(plan.matrix.sum(axis=0), H.weights, atol=1e-9)
    assert val == pytest.approx(math.sqrt(plan.cost))


def test_transport_simplex_matches_lp():
    rng = np.random.default_rng(1)
    for t in range(200):
        m, n = rng.integers(1, 9, size=2)
        a = rng.dirichlet(np.ones(m))
        b = rng.dirichlet(np.ones(n))
        if t % 3 == 0:
            a, b = np.full(m, 1.0 / m), np.full(n, 1.0 / n)
        if t % 5 == 0 and m > 1:
            a[0] = 0.0
            a /= a.sum()
        cost = rng.random((m, n))
        if t % 4 == 0:
            cost = np.round(cost, 1)
        _, v1 = solve_transport(a, b, cost, method="simplex")
        _, v2 = solve_transport(a, b, cost, method="lp")
        assert v1 == pytest.approx(v2, abs=1e-12)


def test_transport_brute_force_on_permutations():
    # With uniform equal-size marginals an optimal plan is a permutation.
    rng = np.random.default_rng(2)
    for _ in range(20):
        cost = rng.random((4, 4))
        best = min(sum(cost[i, p[i]] for i in range(4)) for p in itertools.permutations(range(4))) / 4
        assert solve_transport(np.full(4, 0.25), np.full(4, 0.25), cost)[1] == pytest.approx(best)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_wasserstein_properties(seed):
    rng = np.random.default_rng(seed)

    def rand(K):
        return MixingMeasure(rng.dirichlet(np.ones(K)), rng.dirichlet(np.ones(3), size=K))

    A, B, C = rand(2), rand(3), rand(4)
    for r in (1, 2):
        ab, bc, ac = (wasserstein(x, y, r)[0] for x, y in ((A, B), (B, C), (A, C)))
        assert ac <= ab + bc + 1e-12
    perm = rng.permutation(3)
    Bp = MixingMeasure(B.weights[perm], B.atoms[perm])
    assert wasserstein(A, Bp, 1)[0] == pytest.approx(wasserstein(A, B, 1)[0], abs=1e-14)
    assert wasserstein(A, B, 1)[0] <= wasserstein(A, B, 2)[0] + 1e-12


def test_voronoi_surrogate():
    G0 = MixingMeasure([0.4, 0.6], [[0.7, 0.2, 0.1], [0.1, 0.2, 0.7]])
    assert voronoi_surrogate(G0, G0, 1) == 0.0
    delta = np.array([0.01, -0.01, 0.0])
    G = MixingMeasure(G0.weights, G0.atoms + np.array([delta, np.zeros(3)]))
    assert voronoi_surrogate(G, G0, 1) == pytest.approx(0.4 * np.linalg.norm(delta))
    assert voronoi_surrogate(G, G0, 2) == pytest.approx(0.4 * np.linalg.norm(delta) ** 2)


def test_prop2_identical_and_rejects_different_abar():
    P = LdaParams(MixingMeasure([0.5, 0.5], [[0.2, 0.8], [0.6, 0.4]]), 1.0)
    rep = check_prop2_bounds(P, P, 3)
    assert rep.ok
    assert rep.lda["tv"] == 0.0
    with pytest.raises(ValueError):
        check_prop2_bounds(P, LdaParams(P.mixing, 2.0), 3)


def test_prop2_random_pair_constants():
    rng = np.random.default_rng(3)
    P = LdaParams(MixingMeasure(rng.dirichlet(np.ones(2)), rng.dirichlet(np.ones(3), size=2)), 1.0)
    Q = LdaParams(MixingMeasure(rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3), size=3)), 1.0)
    rep = check_prop2_bounds(P, Q, 3)
    assert rep.c1 == pytest.approx(11 / 6)
    assert rep.c2 == pytest.approx(7.0)
    assert rep.ok


def test_prop2_skips_infinite_kl():
    P = LdaParams(MixingMeasure([1.0], [[1.0, 0.0]]), 1.0)
    Q = LdaParams(MixingMeasure([1.0], [[0.5, 0.5]]), 1.0)
    rep = check_prop2_bounds(Q, P, 2)
    assert rep.skipped == ["kl"]
    assert "kl_lda_le_c1_mix" not in rep.holds
    assert rep.ok
