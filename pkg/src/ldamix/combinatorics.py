"""Set partitions and the counting functions built on them.

A set partition of ``{0, ..., N-1}`` is a tuple of blocks; each block is a
sorted tuple and blocks are ordered by their smallest element.
"""

import functools
import math

import numpy as np
from scipy.special import gammaln

# Beyond this magnitude ewens_weight switches to log space.
_LINEAR_LIMIT = 1e300


def restricted_growth_strings(N):
    """Yield every restricted growth string of length ``N`` in lexicographic order."""
    if N < 1:
        return
    a = [0] * N
    mx = [0] * N  # mx[i] = max(a[:i+1])

    def rec(i):
        if i == N:
            yield tuple(a)
            return
        for v in range(mx[i - 1] + 2):
            a[i] = v
            mx[i] = max(mx[i - 1], v)
            yield from rec(i + 1)

    yield from rec(1)


def rgs_to_blocks(rgs):
    n = max(rgs) + 1
    blocks = [[] for _ in range(n)]
    for i, b in enumerate(rgs):
        blocks[b].append(i)
    return tuple(tuple(b) for b in blocks)


def canonical_partition(blocks):
    """Sort elements within blocks and blocks by their minimum."""
    bl = [tuple(sorted(int(x) for x in b)) for b in blocks if len(b)]
    return tuple(sorted(bl, key=lambda b: b[0]))


@functools.lru_cache(maxsize=None)
def _partitions_by_count(N):
    out = {}
    for rgs in restricted_growth_strings(N):
        out.setdefault(max(rgs) + 1, []).append(rgs_to_blocks(rgs))
    return {n: tuple(p) for n, p in out.items()}


def set_partitions(N, n=None):
    """All partitions of ``{0..N-1}`` into ``n`` blocks (any number if ``n`` is None).

    The order follows the lexicographic order of restricted growth strings.
    """
    if N < 1:
        raise ValueError("N must be positive")
    table = _partitions_by_count(N)
    if n is None:
        return [rgs_to_blocks(r) for r in restricted_growth_strings(N)]
    return list(table.get(n, ()))


def bell_numbers(N):
    """Bell numbers ``B_0..B_N`` from the Bell triangle."""
    bells = [1]
    row = [1]
    for _ in range(N):
        new = [row[-1]]
        for v in row:
            new.append(new[-1] + v)
        bells.append(new[0])
        row = new
    return bells[: N + 1]


@functools.lru_cache(maxsize=None)
def stirling2(N, n):
    """Stirling numbers of the second kind (exact integers)."""
    if N == n:
        return 1
    if n == 0 or n > N:
        return 0
    return n * stirling2(N - 1, n) + stirling2(N - 1, n - 1)


@functools.lru_cache(maxsize=None)
def stirling1_unsigned(N, n):
    """Unsigned Stirling numbers of the first kind (exact integers)."""
    if N == n:
        return 1
    if n == 0 or n > N:
        return 0
    return (N - 1) * stirling1_unsigned(N - 1, n) + stirling1_unsigned(N - 1, n - 1)


def rising_factorial(a, n):
    """``a (a+1) ... (a+n-1)`` for ``a > 0``."""
    if a <= 0:
        raise ValueError("rising factorial requires a > 0")
    if n < 0 or int(n) != n:
        raise ValueError("n must be a non-negative integer")
    out = 1.0
    for i in range(int(n)):
        out *= a + i
    return out


def log_rising_factorial(a, n):
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise ValueError("rising factorial requires a > 0")
    return gammaln(a + n) - gammaln(a)


def ewens_weight(blocks, abar, log=False):
    """``abar^n prod (|S_i|-1)! / abar^[N]`` for a partition with ``n`` blocks."""
    if abar <= 0:
        raise ValueError("abar must be positive")
    sizes = [len(b) for b in blocks]
    N = sum(sizes)
    lw = (
        len(sizes) * math.log(abar)
        + sum(math.lgamma(s) for s in sizes)
        - float(log_rising_factorial(abar, N))
    )
    if log:
        return lw
    if abs(lw) > math.log(_LINEAR_LIMIT):
        raise OverflowError("weight out of linear range; use log=True")
    return math.exp(lw)


def c1_constant(N, abar):
    """``sum_{i<N} abar / (abar + i)``: expected number of blocks under the Ewens law."""
    if abar <= 0:
        raise ValueError("abar must be positive")
    return float(sum(abar / (abar + i) for i in range(N)))


def c1_from_partitions(N, abar):
    """The same constant summed directly over set partitions (cross-check)."""
    total = 0.0
    for p in set_partitions(N):
        total += len(p) * ewens_weight(p, abar)
    return total


def c2_constant(N, abar):
    """``(1/((N-1)! abar)) sum_n (n-1)! sum_{|p|=n} prod abar^[|S_i|]``."""
    if abar <= 0:
        raise ValueError("abar must be positive")
    rf = [rising_factorial(abar, s) for s in range(N + 1)]
    total = 0.0
    for n in range(1, N + 1):
        inner = sum(math.prod(rf[len(b)] for b in p) for p in set_partitions(N, n))
        total += math.factorial(n - 1) * inner
    return total / (math.factorial(N - 1) * abar)
