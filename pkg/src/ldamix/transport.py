"""Exact discrete optimal transport by the transportation simplex method."""

from collections import deque
import logging

import numpy as np
from scipy.optimize import linprog

log = logging.getLogger(__name__)


def _northwest_corner(a, b):
    m, n = a.size, b.size
    ra, rb = a.copy(), b.copy()
    flow = np.zeros((m, n))
    basis = []
    i = j = 0
    while True:
        f = min(ra[i], rb[j])
        flow[i, j] = f
        basis.append((i, j))
        ra[i] -= f
        rb[j] -= f
        if i == m - 1 and j == n - 1:
            break
        if i == m - 1:
            j += 1
        elif j == n - 1:
            i += 1
        elif ra[i] <= rb[j]:
            i += 1
        else:
            j += 1
    return flow, basis


def _tree_adjacency(basis, m):
    adj = {}
    for i, j in basis:
        adj.setdefault(i, []).append(m + j)
        adj.setdefault(m + j, []).append(i)
    return adj


def _potentials(basis, cost, m, n):
    adj = _tree_adjacency(basis, m)
    pot = np.full(m + n, np.nan)
    pot[0] = 0.0
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in adj.get(u, ()):
            if np.isnan(pot[v]):
                i, j = (u, v - m) if u < m else (v, u - m)
                pot[v] = cost[i, j] - pot[u]
                queue.append(v)
    return pot[:m], pot[m:]


def _tree_path(basis, m, src, dst):
    adj = _tree_adjacency(basis, m)
    prev = {src: None}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        if u == dst:
            break
        for v in adj.get(u, ()):
            if v not in prev:
                prev[v] = u
                queue.append(v)
    path = [dst]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    return path[::-1]


def _simplex(a, b, cost, max_iter):
    m, n = a.size, b.size
    flow, basis = _northwest_corner(a, b)
    scale = max(1.0, float(np.abs(cost).max()))
    for _ in range(max_iter):
        u, v = _potentials(basis, cost, m, n)
        reduced = cost - u[:, None] - v[None, :]
        ie, je = np.unravel_index(np.argmin(reduced), reduced.shape)
        if reduced[ie, je] >= -1e-12 * scale:
            return flow, True
        # Cycle: entering cell, then the tree path from row ie to column je.
        nodes = _tree_path(basis, m, ie, m + je)
        cells = []
        for s, t in zip(nodes[:-1], nodes[1:]):
            cells.append((s, t - m) if s < m else (t, s - m))
        minus = cells[0::2]
        plus = cells[1::2]
        k = min(range(len(minus)), key=lambda c: flow[minus[c]])
        theta = flow[minus[k]]
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[ie, je] += theta
        basis.remove(minus[k])
        basis.append((int(ie), int(je)))
        flow[minus[k]] = 0.0
    return flow, False


def _linprog(a, b, cost):
    m, n = a.size, b.size
    rows = np.zeros((m + n, m * n))
    for i in range(m):
        rows[i, i * n : (i + 1) * n] = 1.0
    for j in range(n):
        rows[m + j, j::n] = 1.0
    res = linprog(cost.ravel(), A_eq=rows, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return res.x.reshape(m, n)


def solve_transport(a, b, cost, method="auto", max_iter=10000):
    """Minimise ``<P, cost>`` over couplings ``P`` of ``a`` and ``b``.

    Zero-mass points are dropped before solving. ``method`` is ``"simplex"``
    (transportation simplex, falling back to an LP solver if it stalls),
    ``"lp"``, or ``"auto"`` (simplex for small problems). Returns ``(plan, value)`` with ``plan`` of shape
    ``(len(a), len(b))``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cost = np.asarray(cost, dtype=float)
    if cost.shape != (a.size, b.size):
        raise ValueError("cost must have shape (len(a), len(b))")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("masses must be non-negative")
    if not np.isclose(a.sum(), b.sum(), rtol=1e-9, atol=1e-12):
        raise ValueError("marginals must have equal total mass")
    ia = np.flatnonzero(a > 0)
    ib = np.flatnonzero(b > 0)
    aa, bb = a[ia], b[ib] * (a.sum() / b.sum())
    sub = cost[np.ix_(ia, ib)]
    if method == "auto":
        method = "simplex" if aa.size * bb.size <= 400 else "lp"
    if method == "lp":
        flow = _linprog(aa, bb, sub)
    else:
        flow, ok = _simplex(aa, bb, sub, max_iter)
        if not ok:
            log.warning("transport simplex hit its iteration cap; using LP solver")
            flow = _linprog(aa, bb, sub)
    plan = np.zeros(cost.shape)
    plan[np.ix_(ia, ib)] = np.maximum(flow, 0.0)
    return plan, float((plan * cost).sum())
