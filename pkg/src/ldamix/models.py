"""Mixture-of-product and LDA document models, their densities and likelihoods."""

from dataclasses import dataclass
import functools
import json
import math

import numpy as np
from numba import njit
from scipy.special import comb, gammaln, logsumexp

from .combinatorics import rising_factorial, set_partitions
from .dirichlet import dirichlet_cubature, moment_tensor_closed, sample_dirichlet
from .tensor import diag_tensor, partition_outer, weighted_outer

_SUM_TOL = 1e-9


@dataclass(frozen=True)
class MixingMeasure:
    """Discrete measure ``sum_k weights[k] delta_{atoms[k]}`` over topics."""

    weights: np.ndarray
    atoms: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        th = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        if w.ndim != 1 or w.size == 0 or th.shape[0] != w.size:
            raise ValueError("need one atom per weight")
        if np.any(w < 0) or abs(w.sum() - 1) > _SUM_TOL:
            raise ValueError("weights must be a probability vector")
        if np.any(th < 0) or np.any(np.abs(th.sum(axis=1) - 1) > _SUM_TOL):
            raise ValueError("atoms must be probability vectors")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "atoms", th)

    @property
    def K(self):
        return self.weights.size

    @property
    def V(self):
        return self.atoms.shape[1]


@dataclass(frozen=True)
class LdaParams:
    """LDA parameters: Dirichlet concentration ``abar`` and mean weights of ``mixing``."""

    mixing: MixingMeasure
    abar: float

    def __post_init__(self):
        if not self.abar > 0:
            raise ValueError("abar must be positive")
        if np.any(self.mixing.weights <= 0):
            raise ValueError("LDA weights must be strictly positive")

    @property
    def alpha(self):
        return self.abar * self.mixing.weights

    @property
    def K(self):
        return self.mixing.K

    @property
    def V(self):
        return self.mixing.V

    def to_json(self):
        return json.dumps(
            {
                "abar": self.abar,
                "weights": self.mixing.weights.tolist(),
                "topics": self.mixing.atoms.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        return cls(MixingMeasure(obj["weights"], obj["topics"]), float(obj["abar"]))


@dataclass(frozen=True)
class Corpus:
    """``m`` documents of ``N`` words each over a vocabulary of size ``V``."""

    docs: np.ndarray
    V: int

    def __post_init__(self):
        d = np.asarray(self.docs)
        if d.ndim != 2 or d.shape[1] < 1:
            raise ValueError("docs must be an m x N integer array")
        d = d.astype(np.int64)
        if d.size and (d.min() < 0 or d.max() >= self.V):
            raise ValueError("word index out of range")
        object.__setattr__(self, "docs", d)

    @property
    def m(self):
        return self.docs.shape[0]

    @property
    def N(self):
        return self.docs.shape[1]

    def counts(self):
        """Bag-of-words matrix of shape ``(m, V)``."""
        return word_counts(self.docs, self.V)

    def to_json(self):
        return json.dumps({"V": self.V, "N": self.N, "docs": self.docs.tolist()})

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        docs = np.asarray(obj["docs"], dtype=np.int64).reshape(-1, int(obj["N"]))
        return cls(docs, int(obj["V"]))


def word_counts(docs, V):
    docs = np.atleast_2d(docs)
    out = np.zeros((docs.shape[0], V))
    np.add.at(out, (np.repeat(np.arange(docs.shape[0]), docs.shape[1]), docs.ravel()), 1.0)
    return out


def mixture_density(G, N):
    """Joint table of ``N`` words under the mixture of products."""
    return weighted_outer(diag_tensor(G.weights, N), G.atoms)


def lda_density(P, N):
    """Joint table of ``N`` words of one LDA document."""
    return weighted_outer(moment_tensor_closed(P.alpha, N), P.mixing.atoms)


def marginalize(table, coords):
    """Marginal on ``coords`` (0-based); output axes follow sorted ``coords``."""
    table = np.asarray(table)
    keep = sorted(int(c) for c in coords)
    if len(set(keep)) != len(keep) or (keep and (keep[0] < 0 or keep[-1] >= table.ndim)):
        raise ValueError("invalid coordinate subset")
    drop = tuple(i for i in range(table.ndim) if i not in keep)
    return table.sum(axis=drop) if drop else table.copy()


def _block_marginals(table, p):
    return [marginalize(table, b) for b in p]


def lda_from_mixture_marginals(G, abar, N):
    """LDA table built from marginals of the mixture table over set partitions."""
    pm = mixture_density(G, N)
    out = np.zeros_like(pm)
    for n in range(1, N + 1):
        coef = abar**n
        for p in set_partitions(N, n):
            w = math.prod(math.factorial(len(b) - 1) for b in p)
            out += coef * w * partition_outer(_block_marginals(pm, p), p)
    return out / rising_factorial(abar, N)


def mixture_from_lda_marginals(P, N):
    """Mixture table recovered from marginals of the LDA table (alternating sum)."""
    abar = P.abar
    pl = lda_density(P, N)
    rf = [rising_factorial(abar, s) for s in range(N + 1)]
    out = np.zeros_like(pl)
    for n in range(1, N + 1):
        coef = (-1) ** (n - 1) * math.factorial(n - 1)
        for p in set_partitions(N, n):
            w = math.prod(rf[len(b)] for b in p)
            out += coef * w * partition_outer(_block_marginals(pl, p), p)
    return out / (math.factorial(N - 1) * abar)


def _sample_words(probs, N, rng):
    cdf = np.cumsum(probs, axis=-1)
    cdf[..., -1] = 1.0
    u = rng.uniform(size=probs.shape[:-1] + (N,))
    return (u[..., :, None] >= cdf[..., None, :]).sum(axis=-1)


def sample_corpus(P, N, m, rng):
    """Draw ``m`` LDA documents of length ``N``."""
    q = sample_dirichlet(P.alpha, m, rng)
    return Corpus(_sample_words(q @ P.mixing.atoms, N, rng), P.V)


def sample_fixed_allocation_doc(theta, q, N, rng):
    """One document of length ``N`` with the topic proportions fixed to ``q``."""
    probs = np.asarray(q, dtype=float) @ np.asarray(theta, dtype=float)
    return _sample_words(probs, N, rng)


@functools.lru_cache(maxsize=32)
def _composition_lattice(K, N):
    """States (count vectors summing to j) per layer and successor indices.

    States of layer ``j`` are ranked in colex order via the combinatorial
    number system on stars-and-bars bar positions.
    """
    layers = []
    succ = []
    for j in range(N + 1):
        states = _compositions(j, K)
        layers.append(states)
    for j in range(N):
        nxt = np.empty((len(layers[j]), K), dtype=np.int64)
        for k in range(K):
            s = layers[j].copy()
            s[:, k] += 1
            nxt[:, k] = _colex_rank(s)
        succ.append(nxt)
    return layers, succ


def _compositions(j, K):
    n = int(comb(j + K - 1, K - 1, exact=True))
    out = np.zeros((n, K), dtype=np.int64)
    for c in _iter_compositions(j, K):
        out[_colex_rank(np.array([c]))[0]] = c
    return out


def _iter_compositions(j, K):
    if K == 1:
        yield (j,)
        return
    for first in range(j + 1):
        for rest in _iter_compositions(j - first, K - 1):
            yield (first,) + rest


def _colex_rank(states):
    """Colex rank of count vectors among those with the same sum."""
    states = np.atleast_2d(states)
    K = states.shape[1]
    # Bar positions b_i = n_0 + ... + n_i + i for i < K-1; rank = sum C(b_i, i+1).
    bars = np.cumsum(states[:, : K - 1], axis=1) + np.arange(K - 1)
    rank = np.zeros(states.shape[0], dtype=np.int64)
    for i in range(K - 1):
        rank += np.array([math.comb(int(b), i + 1) for b in bars[:, i]], dtype=np.int64)
    return rank


def lda_doc_loglik(P, doc):
    """Exact log-likelihood of one document by dynamic programming over topic counts.

    Each word ``x_j`` moves a count vector ``n`` to ``n + e_k`` with weight
    ``(alpha_k + n_k) theta_{k, x_j}``; the total is divided by ``abar^[N]``.
    Values are rescaled per layer to stay in floating point range.
    """
    doc = np.asarray(doc, dtype=np.int64).ravel()
    N = doc.size
    K = P.K
    alpha = P.alpha
    theta = P.mixing.atoms
    layers, succ = _composition_lattice(K, N)
    v = np.ones(1)
    log_scale = 0.0
    for j in range(N):
        states = layers[j]
        new = np.zeros(len(layers[j + 1]))
        for k in range(K):
            np.add.at(new, succ[j][:, k], v * (alpha[k] + states[:, k]) * theta[k, doc[j]])
        top = new.max()
        if top <= 0:
            return -np.inf
        v = new / top
        log_scale += math.log(top)
    return log_scale + math.log(v.sum()) - float(gammaln(P.abar + N) - gammaln(P.abar))


@njit(cache=True, fastmath=True)
def _block_products(powers, rows, nnz, w, block):
    """``sum_n w[n] prod_j powers[rows[i, j], n]`` for every document ``i``.

    Nodes are processed in blocks so the slices of ``powers`` stay in cache.
    """
    m = rows.shape[0]
    n_nodes = w.shape[0]
    out = np.zeros(m)
    tmp = np.empty(block)
    for b0 in range(0, n_nodes, block):
        b1 = min(n_nodes, b0 + block)
        size = b1 - b0
        wb = w[b0:b1]
        for i in range(m):
            r = powers[rows[i, 0], b0:b1]
            for n in range(size):
                tmp[n] = wb[n] * r[n]
            for j in range(1, nnz[i]):
                r = powers[rows[i, j], b0:b1]
                for n in range(size):
                    tmp[n] *= r[n]
            s = 0.0
            for n in range(size):
                s += tmp[n]
            out[i] += s
    return out


class CorpusLikelihood:
    """Exact log-likelihood of a bag-of-words corpus, batched over documents.

    Each document's likelihood is the Dirichlet expectation of a polynomial of
    degree ``N`` in the topic proportions, integrated exactly by
    ``dirichlet_cubature``. The fast path multiplies tabulated powers
    ``(q_n . theta_v)^c`` per node; documents whose sum underflows are
    recomputed in log space.
    """

    def __init__(self, counts, block=256):
        self.counts = np.asarray(counts, dtype=float)
        c = self.counts.astype(np.int64)
        if np.any(c != self.counts) or np.any(c < 0):
            raise ValueError("counts must be non-negative integers")
        lengths = c.sum(axis=1)
        self.degree = int(lengths.max()) if lengths.size else 0
        self.V = c.shape[1]
        self.block = block
        nnz = (c > 0).sum(axis=1)
        self.nnz = np.maximum(nnz, 1)
        self.rows = np.zeros((c.shape[0], max(1, int(nnz.max(initial=1)))), dtype=np.int64)
        for i in range(c.shape[0]):
            idx = np.flatnonzero(c[i])
            self.rows[i, : idx.size] = idx * (self.degree + 1) + c[i, idx]

    def _log_space(self, log_a, log_w, docs):
        terms = self.counts[docs] @ np.maximum(log_a, -1e250).T
        return logsumexp(terms + log_w[None, :], axis=1)

    def per_doc(self, alpha, theta):
        theta = np.asarray(theta, dtype=float)
        nodes, w = dirichlet_cubature(alpha, self.degree)
        a = nodes @ theta
        powers = np.empty((self.V, self.degree + 1, a.shape[0]))
        powers[:, 0, :] = 1.0
        for c in range(1, self.degree + 1):
            powers[:, c, :] = powers[:, c - 1, :] * a.T
        sums = _block_products(powers.reshape(-1, a.shape[0]), self.rows, self.nnz, w, self.block)
        with np.errstate(divide="ignore"):
            out = np.log(sums)
        bad = np.flatnonzero(~(sums > 1e-280))
        if bad.size:
            with np.errstate(divide="ignore"):
                out[bad] = self._log_space(np.log(a), np.log(w), bad)
        return out

    def __call__(self, alpha, theta):
        return float(self.per_doc(alpha, theta).sum())


def corpus_loglik(P, corpus):
    return CorpusLikelihood(corpus.counts())(P.alpha, P.mixing.atoms)
