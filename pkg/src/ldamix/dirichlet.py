"""Moments of the Dirichlet distribution and their partition decompositions."""

from dataclasses import dataclass
import functools
import math

import numpy as np
from scipy.special import gammaln, logsumexp

from .combinatorics import rising_factorial, set_partitions
from .tensor import check_size, diag_tensor, partition_outer


@dataclass(frozen=True)
class DirichletParam:
    alpha: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("alpha must be a non-empty vector")
        if not np.all(np.isfinite(a)) or np.any(a <= 0):
            raise ValueError("alpha entries must be positive and finite")
        object.__setattr__(self, "alpha", a)

    @property
    def K(self):
        return self.alpha.size

    @property
    def abar(self):
        return float(self.alpha.sum())

    @property
    def atilde(self):
        return self.alpha / self.alpha.sum()

    @classmethod
    def from_mean(cls, abar, atilde):
        return cls(abar * np.asarray(atilde, dtype=float))


def _alpha(alpha):
    if isinstance(alpha, DirichletParam):
        return alpha.alpha
    return DirichletParam(alpha).alpha


def moment_tensor_closed(alpha, N):
    """``E[q^{(x)N}]`` for ``q ~ Dir(alpha)``: entry is ``prod_k alpha_k^[n_k] / abar^[N]``.

    ``n_k`` counts how often index ``k`` occurs in the multi-index.
    """
    a = _alpha(alpha)
    K = a.size
    if N == 0:
        return np.array(1.0)
    check_size((K,) * N)
    # rf[k, n] = a_k^[n]
    rf = np.ones((K, N + 1))
    for n in range(1, N + 1):
        rf[:, n] = rf[:, n - 1] * (a + n - 1)
    idx = np.indices((K,) * N).reshape(N, -1)
    out = np.ones(idx.shape[1])
    for k in range(K):
        out *= rf[k, (idx == k).sum(axis=0)]
    out /= rising_factorial(a.sum(), N)
    return out.reshape((K,) * N)


def moment_tensor_from_diagonals(alpha, N):
    """Moment tensor assembled from diagonal tensors of the mean vector.

    Sums, over set partitions of the N coordinates, outer products of
    diagonal tensors weighted by ``abar^n prod (|S_i|-1)!``.
    """
    a = _alpha(alpha)
    abar = a.sum()
    atilde = a / abar
    K = a.size
    check_size((K,) * N)
    diags = {s: diag_tensor(atilde, s) for s in range(1, N + 1)}
    out = np.zeros((K,) * N)
    for n in range(1, N + 1):
        coef = abar**n
        for p in set_partitions(N, n):
            w = math.prod(math.factorial(len(b) - 1) for b in p)
            out += coef * w * partition_outer([diags[len(b)] for b in p], p)
    return out / rising_factorial(abar, N)


def diagonal_from_moments(alpha, N, moments=None):
    """Recover ``diag_N(atilde)`` from the moment tensors of orders 1..N.

    Alternating sum over set partitions with weights
    ``(-1)^(n-1) (n-1)! prod abar^[|S_i|]``. ``moments`` may map an order to
    a precomputed moment tensor; missing orders use the closed form.
    """
    a = _alpha(alpha)
    abar = a.sum()
    K = a.size
    check_size((K,) * N)
    moments = dict(moments or {})
    for s in range(1, N + 1):
        if s not in moments:
            moments[s] = moment_tensor_closed(a, s)
    rf = [rising_factorial(abar, s) for s in range(N + 1)]
    out = np.zeros((K,) * N)
    for n in range(1, N + 1):
        coef = (-1) ** (n - 1) * math.factorial(n - 1)
        for p in set_partitions(N, n):
            w = math.prod(rf[len(b)] for b in p)
            out += coef * w * partition_outer([moments[len(b)] for b in p], p)
    return out / (math.factorial(N - 1) * abar)


def _log_c(abar, n):
    # log of abar^[n] / n!
    return gammaln(abar + n) - gammaln(abar) - gammaln(n + 1)


def linear_moments_recursive(alpha, x, N):
    """``E[(q . x)^n]`` for ``n = 0..N`` via the power-sum recursion.

    With ``c_n = abar^[n]/n!`` and ``xbar_d = sum_k atilde_k x_k^d``,
    ``c_{n+1} M_{n+1} = (abar/(n+1)) sum_{l=0}^{n} xbar_{l+1} c_{n-l} M_{n-l}``.
    The factor ``abar`` comes from the generating function
    ``sum_n c_n M_n t^n = prod_k (1 - t x_k)^(-alpha_k)``.
    """
    a = _alpha(alpha)
    x = np.asarray(x, dtype=float)
    if x.shape != a.shape:
        raise ValueError("x must have the same length as alpha")
    abar = a.sum()
    atilde = a / abar
    xbar = np.array([np.dot(atilde, x**d) for d in range(N + 1)])
    log_c = np.array([_log_c(abar, n) for n in range(N + 1)])
    # d[n] = c_n M_n
    d = np.zeros(N + 1)
    d[0] = 1.0
    for n in range(N):
        d[n + 1] = abar * sum(xbar[l + 1] * d[n - l] for l in range(n + 1)) / (n + 1)
    return d * np.exp(-log_c)


def sample_dirichlet(alpha, size, rng):
    """Draw ``size`` Dirichlet vectors, stable for very small concentrations.

    Gamma variates are drawn in log space as ``log G(a+1) + log(U)/a`` and
    normalised with a log-sum-exp.
    """
    a = _alpha(alpha)
    if a.size == 1:
        return np.ones((size, 1))
    log_g = np.log(rng.standard_gamma(a + 1.0, size=(size, a.size)))
    log_g += np.log(rng.uniform(size=(size, a.size))) / a
    return np.exp(log_g - logsumexp(log_g, axis=1, keepdims=True))


def monte_carlo_linear_moment(alpha, x, N, m, rng):
    """Monte Carlo estimate of ``E[(q . x)^N]`` and its standard error."""
    q = sample_dirichlet(alpha, m, rng)
    vals = (q @ np.asarray(x, dtype=float)) ** N
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(m))


@functools.lru_cache(maxsize=64)
def _jacobi_rule(a, b, n):
    from scipy.special import roots_jacobi

    # Nodes on [0, 1] for the weight u^(a-1) (1-u)^(b-1), normalised to sum 1.
    # scipy evaluates an unused sqrt of a negative number when n == 1.
    with np.errstate(invalid="ignore", divide="ignore"):
        x, w = roots_jacobi(n, b - 1.0, a - 1.0)
    w = w / w.sum()
    return (x + 1.0) / 2.0, w


def dirichlet_cubature(alpha, degree):
    """Nodes and weights integrating polynomials of total degree <= ``degree`` exactly.

    Uses a tensor Gauss-Jacobi rule in stick-breaking coordinates
    ``q_k = u_k prod_{j<k} (1 - u_j)`` with ``u_k ~ Beta(alpha_k, sum_{j>k} alpha_j)``.
    Returns ``(nodes, weights)`` with nodes of shape ``(n, K)``.
    """
    a = _alpha(alpha)
    K = a.size
    n = degree // 2 + 1
    nodes = np.ones((1, 1))
    weights = np.ones(1)
    tails = np.cumsum(a[::-1])[::-1]
    for k in range(K - 1):
        u, w = _jacobi_rule(float(a[k]), float(tails[k + 1]), n)
        rest = nodes[:, -1:]
        head = nodes[:, :-1]
        nodes = np.concatenate(
            [
                np.repeat(head, n, axis=0),
                (rest * u[None, :]).reshape(-1, 1),
                (rest * (1.0 - u)[None, :]).reshape(-1, 1),
            ],
            axis=1,
        )
        weights = (weights[:, None] * w[None, :]).ravel()
    return nodes, weights
