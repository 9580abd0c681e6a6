"""Multi-index bookkeeping for the auxiliary wavefunctions.

Indices ``n = [n_0, ..., n_{K-1}]`` with ``sum(n) <= L`` are numbered in
graded order: by depth ``sum(n)``, then descending lexicographic order, so the
root ``[0, ..., 0]`` has id 0 and ``[1, 0]`` precedes ``[0, 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Mapping

import numpy as np

__all__ = ["OUTSIDE", "HierarchySpace", "enumerate_hierarchy", "neighbor", "hierarchy_size"]

OUTSIDE = -1
DEFAULT_MAX_SIZE = 2_000_000


def hierarchy_size(K: int, L: int) -> int:
    return comb(K + L, L)


def _compositions(total: int, parts: int):
    """Yield compositions of ``total`` into ``parts`` in descending lex order."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@dataclass(frozen=True)
class HierarchySpace:
    K: int
    L: int
    labels: np.ndarray  # (size, K) int
    plus: np.ndarray  # (size, K): id of n + e_k or OUTSIDE
    minus: np.ndarray  # (size, K): id of n - e_k or OUTSIDE
    _index: dict

    @property
    def size(self) -> int:
        return int(self.labels.shape[0])

    @property
    def depth(self) -> np.ndarray:
        return self.labels.sum(axis=1)

    def id_of(self, counts) -> int:
        return self._index.get(tuple(int(c) for c in counts), OUTSIDE)

    def label(self, idx: int) -> tuple[int, ...]:
        return tuple(int(c) for c in self.labels[idx])


def enumerate_hierarchy(K: int, L: int, max_size: int = DEFAULT_MAX_SIZE) -> HierarchySpace:
    if K < 1 or L < 0:
        raise ValueError(f"need K >= 1 and L >= 0, got K={K}, L={L}")
    size = hierarchy_size(K, L)
    if size > max_size:
        raise MemoryError(f"hierarchy with K={K}, L={L} has {size} members, above the limit {max_size}")
    labels = []
    for d in range(L + 1):
        labels.extend(_compositions(d, K))
    index = {lab: i for i, lab in enumerate(labels)}
    arr = np.array(labels, dtype=np.int64).reshape(size, K)
    plus = np.full((size, K), OUTSIDE, dtype=np.int64)
    minus = np.full((size, K), OUTSIDE, dtype=np.int64)
    for i, lab in enumerate(labels):
        for k in range(K):
            if lab[k] > 0:
                lower = lab[:k] + (lab[k] - 1,) + lab[k + 1:]
                j = index[lower]
                minus[i, k] = j
                plus[j, k] = i
    return HierarchySpace(K, L, arr, plus, minus, index)


def neighbor(space: HierarchySpace, idx: int, move: Mapping[int, int]) -> int:
    """Apply ``move`` (``{k: +1 or -1}``) to member ``idx``.

    Returns OUTSIDE when a count would go negative or the depth would exceed L.
    Removals are applied before additions.
    """
    for k, step in move.items():
        if step not in (-1, 1):
            raise ValueError(f"move steps must be +1 or -1, got {step} for k={k}")
    removes = [k for k, s in move.items() if s < 0]
    adds = [k for k, s in move.items() if s > 0]
    for k in removes:
        idx = int(space.minus[idx, k])
        if idx == OUTSIDE:
            return OUTSIDE
    for k in adds:
        idx = int(space.plus[idx, k])
        if idx == OUTSIDE:
            return OUTSIDE
    return idx
