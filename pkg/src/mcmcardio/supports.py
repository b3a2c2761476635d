"""Support domains: neighbor lists of each collocation node."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .nodes import NodeCloud

# relative tolerance for treating two distances as tied
TIE_RTOL = 1e-12


@dataclass
class SupportTable:
    """Neighbor lists in CSR layout.

    ``indices[indptr[I]:indptr[I+1]]`` is the sorted neighbor list of node
    ``I`` (itself included) and ``radius[I]`` its support radius ``d_c``.
    """

    indptr: np.ndarray
    indices: np.ndarray
    radius: np.ndarray

    def __len__(self):
        return len(self.radius)

    def neighbors(self, i) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.indptr)

    def check(self, min_size):
        for i in range(len(self)):
            nb = self.neighbors(i)
            if len(nb) < min_size:
                raise ValueError(
                    f"node {i} has {len(nb)} support nodes, needs at least {min_size}"
                )
            if not np.all(np.diff(nb) > 0):
                raise ValueError(f"support of node {i} is not sorted and unique")
            if i not in nb:
                raise ValueError(f"node {i} is missing from its own support")


def _from_lists(lists, radius):
    counts = np.array([len(x) for x in lists], dtype=np.int64)
    indptr = np.zeros(len(lists) + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.concatenate(lists).astype(np.int64) if lists else np.zeros(0, np.int64)
    return SupportTable(indptr, indices, np.asarray(radius, float))


def min_support_size(dim):
    """n >= m + 1 with m = dim + 1 linear basis terms."""
    return dim + 2


def build_support_radius(cloud: NodeCloud, alpha_sd) -> SupportTable:
    """All nodes within ``alpha_sd * h`` (inclusive) of each node."""
    if alpha_sd <= 1:
        raise ValueError(f"alpha_sd must exceed 1, got {alpha_sd}")
    dc = alpha_sd * cloud.h
    coords = cloud.coords
    tree = cKDTree(coords)
    lists = tree.query_ball_point(coords, r=dc * (1 + 1e-12), return_sorted=True)
    lists = [np.asarray(nb, dtype=np.int64) for nb in lists]
    table = _from_lists(lists, np.full(len(cloud), dc))
    table.check(min_support_size(cloud.dim))
    return table


def build_support_knn(cloud: NodeCloud, k) -> SupportTable:
    """The ``k`` nearest nodes of each node, ties broken by node index."""
    n = len(cloud)
    need = min_support_size(cloud.dim)
    if not need <= k <= n:
        raise ValueError(f"k must lie in [{need}, {n}], got {k}")
    coords = cloud.coords
    tree = cKDTree(coords)
    lists, radius = [], np.empty(n)
    extra = min(n, k + 8)
    dist, idx = tree.query(coords, k=extra)
    if extra == 1:
        dist, idx = dist[:, None], idx[:, None]
    for i in range(n):
        d, j = dist[i], idx[i]
        while True:
            dk = d[k - 1]
            # all tied candidates must be present before picking by index
            if len(d) == n or d[-1] > dk * (1 + TIE_RTOL) + 1e-300:
                break
            d, j = tree.query(coords[i], k=min(n, 2 * len(d)))
        tied = np.abs(d - dk) <= dk * TIE_RTOL
        inner = j[(d < dk) & ~tied]
        ties = np.sort(j[tied])[: k - len(inner)]
        nb = np.sort(np.concatenate([inner, ties]))
        lists.append(nb)
        radius[i] = np.max(np.linalg.norm(coords[nb] - coords[i], axis=1))
    table = _from_lists(lists, radius)
    table.check(need)
    return table
