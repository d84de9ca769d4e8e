"""Grid checks of the moment decompositions, the model correspondence and linear moments."""

from dataclasses import dataclass

import numpy as np

from .dirichlet import (
    diagonal_from_moments,
    linear_moments_recursive,
    moment_tensor_closed,
    moment_tensor_from_diagonals,
    monte_carlo_linear_moment,
)
from .models import (
    LdaParams,
    MixingMeasure,
    lda_density,
    lda_from_mixture_marginals,
    mixture_density,
    mixture_from_lda_marginals,
)
from .streams import make_rng
from .tensor import contract_repeated, diag_tensor, max_relative_error

IDENTITY_TOL = 1e-10


@dataclass
class IdentityCell:
    check: str
    K: int
    V: int
    N: int
    abar: float
    max_rel_error: float

    @property
    def ok(self):
        return self.max_rel_error <= IDENTITY_TOL


def _fuzzed(t, fuzz, rng):
    if not fuzz:
        return t
    return t * (1.0 + fuzz * rng.choice([-1.0, 1.0], size=np.shape(t)))


def decomposition_grid(K_range=range(1, 5), N_range=range(1, 6), samples=20, abar_range=(0.1, 10.0),
                       seed=0, fuzz=0.0):
    """Forward and inverse moment-tensor identities on random Dirichlet parameters.

    ``abar`` is drawn log-uniformly from ``abar_range`` and the normalised
    parameter uniformly from the simplex. ``fuzz`` multiplies the assembled
    tensors entrywise by ``1 +- fuzz``, as a negative control.
    """
    cells = []
    for K in K_range:
        for N in N_range:
            rng = make_rng(seed, "decomposition", K, N)
            fwd = inv = 0.0
            for _ in range(samples):
                abar = float(np.exp(rng.uniform(*np.log(abar_range))))
                alpha = abar * rng.dirichlet(np.ones(K))
                alpha = np.maximum(alpha, 1e-8)
                Q = moment_tensor_closed(alpha, N)
                fwd = max(fwd, max_relative_error(_fuzzed(moment_tensor_from_diagonals(alpha, N), fuzz, rng), Q))
                D = diagonal_from_moments(alpha, N, {N: Q})
                inv = max(inv, max_relative_error(_fuzzed(D, fuzz, rng), diag_tensor(alpha / alpha.sum(), N)))
            cells.append(IdentityCell("forward", K, 0, N, float("nan"), fwd))
            cells.append(IdentityCell("inverse", K, 0, N, float("nan"), inv))
    return cells


def correspondence_grid(K_range=range(1, 4), V_range=(2, 3), N_range=range(1, 6), abars=(0.3, 1.0, 4.0),
                        samples=10, seed=0, fuzz=0.0):
    """Both directions of the LDA / mixture-of-products density correspondence."""
    cells = []
    for K in K_range:
        for V in V_range:
            for N in N_range:
                for abar in abars:
                    rng = make_rng(seed, "correspondence", K, V, N, repr(abar))
                    to_lda = to_mix = 0.0
                    for _ in range(samples):
                        G = MixingMeasure(rng.dirichlet(np.ones(K)), rng.dirichlet(np.ones(V), size=K))
                        P = LdaParams(G, abar)
                        a = _fuzzed(lda_from_mixture_marginals(G, abar, N), fuzz, rng)
                        to_lda = max(to_lda, max_relative_error(a, lda_density(P, N)))
                        b = _fuzzed(mixture_from_lda_marginals(P, N), fuzz, rng)
                        to_mix = max(to_mix, max_relative_error(b, mixture_density(G, N)))
                    cells.append(IdentityCell("mixture_to_lda", K, V, N, abar, to_lda))
                    cells.append(IdentityCell("lda_to_mixture", K, V, N, abar, to_mix))
    return cells


@dataclass
class MomentRow:
    kind: str
    pair: int
    N: int
    m: int
    theoretical: float
    contraction: float
    empirical: float
    q25: float
    q75: float
    se: float


def recursion_mismatches(alpha, x, N_max, tol=IDENTITY_TOL):
    """Orders ``N <= N_max`` where the recursion disagrees with the tensor contraction."""
    rec = linear_moments_recursive(alpha, x, N_max)
    bad = []
    for N in range(N_max + 1):
        c = contract_repeated(moment_tensor_closed(alpha, N), x)
        if max_relative_error(rec[N], c) > tol:
            bad.append((N, rec[N], c))
    return rec, bad


def moment_convergence(alpha, x, N_max, m_grid, replications, seed):
    """Recursive moments against Monte Carlo estimates over a grid of sample sizes.

    Returns ``(rows, mismatches)``; each row summarises ``replications``
    independent estimates by their mean and quartiles.
    """
    rec, bad = recursion_mismatches(alpha, x, N_max)
    rows = []
    for N in range(1, N_max + 1):
        c = contract_repeated(moment_tensor_closed(alpha, N), x)
        for m in m_grid:
            est = []
            ses = []
            for rep in range(replications):
                e, s = monte_carlo_linear_moment(alpha, x, N, m, make_rng(seed, "moments", N, m, rep))
                est.append(e)
                ses.append(s)
            q25, q75 = np.quantile(est, [0.25, 0.75])
            rows.append(MomentRow("convergence", 0, N, int(m), float(rec[N]), float(c), float(np.mean(est)),
                                  float(q25), float(q75), float(np.mean(ses))))
    return rows, bad


def random_moment_pairs(pairs, N_max, m, seed, K=3):
    """Recursive against Monte Carlo moments for random ``(x, alpha)`` pairs.

    ``alpha`` has entries uniform on (0.1, 3) and ``x`` entries uniform on (0, 1).
    """
    rows, bad = [], []
    for i in range(pairs):
        rng = make_rng(seed, "pairs", i)
        alpha = rng.uniform(0.1, 3.0, size=K)
        x = rng.uniform(0.0, 1.0, size=K)
        rec, mism = recursion_mismatches(alpha, x, N_max)
        bad += [(alpha, x) + b for b in mism]
        for N in range(1, N_max + 1):
            c = contract_repeated(moment_tensor_closed(alpha, N), x)
            e, s = monte_carlo_linear_moment(alpha, x, N, m, make_rng(seed, "pairs", i, N))
            rows.append(MomentRow("random", i, N, int(m), float(rec[N]), float(c), e, float("nan"), float("nan"), s))
    return rows, bad
