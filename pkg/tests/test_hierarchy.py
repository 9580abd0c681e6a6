from math import comb

import pytest
from hypothesis import given, strategies as st

from hseom.hierarchy import OUTSIDE, enumerate_hierarchy, hierarchy_size, neighbor


def test_small_enumeration_order():
    sp = enumerate_hierarchy(2, 2)
    assert [sp.label(i) for i in range(sp.size)] == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


@pytest.mark.parametrize("K, size", [(40, 861), (100, 5151)])
def test_depth_two_sizes(K, size):
    assert hierarchy_size(K, 2) == size == 1 + K + K * (K + 1) // 2
    assert enumerate_hierarchy(K, 2).size == size


def test_neighbor_moves():
    sp = enumerate_hierarchy(2, 2)
    assert neighbor(sp, sp.id_of((0, 0)), {0: -1}) == OUTSIDE
    assert neighbor(sp, sp.id_of((2, 0)), {1: +1}) == OUTSIDE
    assert neighbor(sp, sp.id_of((1, 0)), {0: -1, 1: +1}) == sp.id_of((0, 1))


@given(K=st.integers(1, 8), L=st.integers(0, 3))
def test_enumeration_is_bijective(K, L):
    sp = enumerate_hierarchy(K, L)
    assert sp.size == comb(K + L, L)
    labels = {sp.label(i) for i in range(sp.size)}
    assert len(labels) == sp.size
    assert all(sum(lab) <= L for lab in labels)
    for i in range(sp.size):
        assert sp.id_of(sp.label(i)) == i
        for k in range(K):
            up = sp.plus[i, k]
            if up != OUTSIDE:
                assert sp.minus[up, k] == i


def test_size_limit():
    with pytest.raises(MemoryError):
        enumerate_hierarchy(100, 4, max_size=10_000)
