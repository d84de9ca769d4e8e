import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldamix.combinatorics import (
    bell_numbers,
    c1_constant,
    c1_from_partitions,
    c2_constant,
    canonical_partition,
    ewens_weight,
    restricted_growth_strings,
    rising_factorial,
    set_partitions,
    stirling1_unsigned,
    stirling2,
)


def test_small_partition_lists():
    assert set_partitions(3, 2) == [((0, 1), (2,)), ((0, 2), (1,)), ((0,), (1, 2))]
    assert set_partitions(1, 1) == [((0,),)]
    assert len(set_partitions(4, 2)) == 7
    assert set_partitions(3, 4) == []


def test_partitions_are_canonical_and_distinct():
    for N in range(1, 7):
        parts = set_partitions(N)
        assert len(set(parts)) == len(parts)
        for p in parts:
            assert canonical_partition(p) == p
            assert sorted(x for b in p for x in b) == list(range(N))


def test_rgs_lexicographic():
    strings = list(restricted_growth_strings(4))
    assert strings == sorted(strings)
    assert strings[0] == (0, 0, 0, 0)
    assert strings[-1] == (0, 1, 2, 3)


def test_counts_match_bell_triangle_and_stirling2():
    bells = bell_numbers(10)
    assert bells[:6] == [1, 1, 2, 5, 15, 52]
    for N in range(1, 11):
        total = 0
        for n in range(1, N + 1):
            s = stirling2(N, n)
            if N <= 8:
                assert len(set_partitions(N, n)) == s
            total += s
        assert total == bells[N]


def test_stirling_values():
    assert stirling2(4, 2) == 7
    assert stirling1_unsigned(4, 2) == 11
    assert stirling1_unsigned(5, 1) == 24


def test_stirling1_generates_rising_factorial():
    for N in range(1, 9):
        for a in (0.3, 1.0, 2.5):
            poly = sum(stirling1_unsigned(N, n) * a**n for n in range(N + 1))
            assert poly == pytest.approx(rising_factorial(a, N), rel=1e-13)


def test_stirling1_counts_cycle_weights():
    # Number of permutations with n cycles equals the sum over n-block partitions of prod (|S|-1)!.
    for N in range(1, 7):
        for n in range(1, N + 1):
            s = sum(math.prod(math.factorial(len(b) - 1) for b in p) for p in set_partitions(N, n))
            assert s == stirling1_unsigned(N, n)


def test_rising_factorial():
    assert rising_factorial(0.5, 3) == pytest.approx(0.5 * 1.5 * 2.5)
    assert rising_factorial(2.0, 0) == 1.0
    with pytest.raises(ValueError):
        rising_factorial(0.0, 2)
    with pytest.raises(ValueError):
        rising_factorial(-1.0, 2)


def test_ewens_single_block():
    assert ewens_weight(((0, 1, 2),), 1.0) == pytest.approx(1.0 / 3.0)


def test_ewens_weights_sum_to_one():
    for N in range(1, 8):
        for abar in (0.1, 1.0, 7.0):
            total = sum(ewens_weight(p, abar) for p in set_partitions(N))
            assert total == pytest.approx(1.0, rel=1e-12)


def test_ewens_log_space():
    p = (tuple(range(200)),)
    lw = ewens_weight(p, 1e-3, log=True)
    assert np.isfinite(lw)
    assert lw == pytest.approx(math.log(1e-3) + math.lgamma(200) - (math.lgamma(200.001) - math.lgamma(0.001)))


def test_c1_constant():
    assert c1_constant(3, 1.0) == pytest.approx(11.0 / 6.0)
    assert c1_constant(1, 5.0) == 1.0
    for N in range(1, 8):
        for abar in (0.2, 1.0, 3.0):
            assert c1_constant(N, abar) == pytest.approx(c1_from_partitions(N, abar), rel=1e-12)
            assert c1_constant(N, abar) <= N


def _c2_exact(N, abar):
    abar = Fraction(abar)
    rf = [math.prod((abar + i for i in range(s)), start=Fraction(1)) for s in range(N + 1)]
    total = Fraction(0)
    for p in set_partitions(N):
        total += math.factorial(len(p) - 1) * math.prod((rf[len(b)] for b in p), start=Fraction(1))
    return total / (math.factorial(N - 1) * abar)


def test_c2_constant():
    assert c2_constant(2, 1.0) == pytest.approx(3.0)
    # n=1: 0! * 1^[3] = 6; n=2: 1! * 3 * (2 * 1) = 6; n=3: 2! * 1 = 2; total 14 / 2.
    assert c2_constant(3, 1.0) == pytest.approx(7.0)
    assert c2_constant(1, 0.4) == pytest.approx(1.0)
    for N in range(1, 7):
        for abar in (0.25, 1.0, 4.0):
            assert c2_constant(N, abar) == pytest.approx(float(_c2_exact(N, abar)), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.floats(0.05, 20.0))
def test_c1_bounded_by_length(N, abar):
    c = c1_constant(N, abar)
    assert 1.0 <= c <= N + 1e-12
