"""Distances between word densities and between mixing measures."""

from dataclasses import dataclass, field

import numpy as np

from .combinatorics import c1_constant, c2_constant
from .models import lda_density, mixture_density
from .transport import solve_transport

# Slack for floating point round-off when auditing inequalities.
BOUND_SLACK = 1e-12


class SupportMismatch(ValueError):
    """KL divergence is infinite: ``p`` puts mass where ``q`` has none."""


def _pair(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {q.shape}")
    return p, q


def tv_distance(p, q):
    p, q = _pair(p, q)
    return 0.5 * float(np.abs(p - q).sum())


def hellinger_sq(p, q):
    p, q = _pair(p, q)
    return 0.5 * float(((np.sqrt(p) - np.sqrt(q)) ** 2).sum())


def hellinger_distance(p, q):
    return float(np.sqrt(hellinger_sq(p, q)))


def kl_divergence(p, q, strict=True):
    """``sum p log(p/q)`` in nats.

    If ``p > 0`` somewhere that ``q = 0`` the divergence is infinite: raises
    ``SupportMismatch`` when ``strict``, otherwise returns ``inf``.
    """
    p, q = _pair(p, q)
    pos = p > 0
    if np.any(q[pos] <= 0):
        if strict:
            raise SupportMismatch("q vanishes where p is positive")
        return float("inf")
    return max(0.0, float(np.sum(p[pos] * np.log(p[pos] / q[pos]))))


@dataclass
class TransportPlan:
    matrix: np.ndarray
    cost: float

    @property
    def shape(self):
        return self.matrix.shape


def atom_costs(G, Gp, r):
    diff = G.atoms[:, None, :] - Gp.atoms[None, :, :]
    return np.linalg.norm(diff, axis=2) ** r


def wasserstein(G, Gp, r=1):
    """Exact ``W_r`` between two mixing measures with Euclidean atom distance.

    Returns ``(W_r, plan)``; ``plan.cost`` is ``W_r ** r``.
    """
    if G.V != Gp.V:
        raise ValueError("mixing measures live on different simplices")
    if r <= 0:
        raise ValueError("r must be positive")
    matrix, cost = solve_transport(G.weights, Gp.weights, atom_costs(G, Gp, r))
    cost = max(cost, 0.0)
    return cost ** (1.0 / r), TransportPlan(matrix, cost)


def voronoi_assignment(G, G0):
    """Index of the nearest ``G0`` atom for each atom of ``G`` (ties go to the lowest index)."""
    d = np.linalg.norm(G.atoms[:, None, :] - G0.atoms[None, :, :], axis=2)
    return np.argmin(d, axis=1)


def voronoi_surrogate(G, G0, r=1):
    """Weight mismatch per Voronoi cell plus weighted distances to the cell centre."""
    cell = voronoi_assignment(G, G0)
    total = 0.0
    for k in range(G0.K):
        members = cell == k
        total += abs(G.weights[members].sum() - G0.weights[k])
        d = np.linalg.norm(G.atoms[members] - G0.atoms[k], axis=1) ** r
        total += float((G.weights[members] * d).sum())
    return total


@dataclass
class Prop2Report:
    N: int
    abar: float
    c1: float
    c2: float
    lda: dict = field(default_factory=dict)
    mixture: dict = field(default_factory=dict)
    holds: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)

    @property
    def ok(self):
        return all(self.holds.values())


_DISTANCES = {"tv": tv_distance, "h2": hellinger_sq, "kl": kl_divergence}


def check_prop2_bounds(P, Pp, N):
    """Compare LDA and mixture-of-product distances for two parameter sets.

    Checks ``d(p^L, p^L') <= C1 d(p^M, p^M')`` for TV, squared Hellinger and
    KL, and ``TV(p^M, p^M') <= C2 TV(p^L, p^L')``. A KL pair with mismatched
    supports is listed in ``skipped`` instead of being checked.
    """
    if not np.isclose(P.abar, Pp.abar, rtol=1e-12, atol=0):
        raise ValueError("both parameter sets must share abar")
    rep = Prop2Report(N, P.abar, c1_constant(N, P.abar), c2_constant(N, P.abar))
    pl, plp = lda_density(P, N), lda_density(Pp, N)
    pm, pmp = mixture_density(P.mixing, N), mixture_density(Pp.mixing, N)
    for name, fn in _DISTANCES.items():
        try:
            rep.lda[name] = fn(pl, plp)
            rep.mixture[name] = fn(pm, pmp)
        except SupportMismatch:
            rep.skipped.append(name)
            continue
        rep.holds[f"{name}_lda_le_c1_mix"] = rep.lda[name] <= rep.c1 * rep.mixture[name] + BOUND_SLACK
    rep.holds["tv_mix_le_c2_lda"] = rep.mixture["tv"] <= rep.c2 * rep.lda["tv"] + BOUND_SLACK
    return rep
