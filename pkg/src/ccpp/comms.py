"""Communication range relation, its transitive closure and vertex-level indexes."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .graph import WeightedGraph, euclidean_distance

RANGE_TOL = 1e-9


@dataclass(frozen=True)
class CommConfig:
    limit: float
    metric: Callable = field(default=euclidean_distance, compare=False)

    def __post_init__(self):
        if not self.limit > 0:
            raise ValueError("communication limit must be positive")

    @property
    def euclidean(self) -> bool:
        return self.metric is euclidean_distance


def within_range(cfg: CommConfig, a, b) -> bool:
    return cfg.metric(a, b) <= cfg.limit + RANGE_TOL


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def components(cfg: CommConfig, positions: Sequence) -> list[list[int]]:
    """Maximal groups of agents that can talk, directly or through relays.

    Groups are sorted by their smallest member.
    """
    n = len(positions)
    if n == 0:
        raise ValueError("positions must be non-empty")
    uf = UnionFind(n)
    for i in range(n):
        for j in range(i + 1, n):
            if within_range(cfg, positions[i], positions[j]):
                uf.union(i, j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(uf.find(i), []).append(i)
    return sorted(groups.values())


def fleet_connected(cfg: CommConfig, positions: Sequence) -> bool:
    return len(components(cfg, positions)) == 1


class CommIndex:
    """Vertex pairs of a graph within communication range, as CSR.

    When the limit covers every vertex pair the index is ``complete`` and no
    pair list is materialised.
    """

    def __init__(self, graph: WeightedGraph, cfg: CommConfig):
        self.graph = graph
        self.cfg = cfg
        coords = graph.coords
        n = graph.n_vertices
        span = coords.max(axis=0) - coords.min(axis=0)
        self.complete = bool(cfg.euclidean and np.hypot(*span) <= cfg.limit + RANGE_TOL)
        if self.complete:
            self.indptr = np.zeros(n + 1, dtype=np.intp)
            self.indices = np.zeros(0, dtype=np.intp)
            return
        if cfg.euclidean:
            tree = cKDTree(coords)
            lists = tree.query_ball_point(coords, cfg.limit + RANGE_TOL,
                                          return_sorted=True)
        else:
            lists = []
            for i in range(n):
                a = coords[i]
                lists.append([j for j in range(n)
                              if cfg.metric(a, coords[j]) <= cfg.limit + RANGE_TOL])
        lens = np.fromiter((len(x) for x in lists), dtype=np.intp, count=n)
        self.indptr = np.zeros(n + 1, dtype=np.intp)
        np.cumsum(lens, out=self.indptr[1:])
        self.indices = (np.concatenate([np.asarray(x, dtype=np.intp) for x in lists])
                        if n else np.zeros(0, dtype=np.intp))
        self.complete = bool(self.indices.size == n * n)

    def neighbors(self, v: int) -> np.ndarray:
        if self.complete:
            return np.arange(self.graph.n_vertices)
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def near_mask(self, vertices) -> np.ndarray:
        """Boolean mask of vertices within range of at least one of ``vertices``."""
        n = self.graph.n_vertices
        vs = np.unique(np.asarray(list(vertices), dtype=np.intp))
        mask = np.zeros(n, dtype=bool)
        if len(vs) == 0:
            return mask
        if self.complete:
            mask[:] = True
            return mask
        starts, ends = self.indptr[vs], self.indptr[vs + 1]
        idx = np.concatenate([self.indices[s:e] for s, e in zip(starts, ends)])
        mask[idx] = True
        return mask

    def in_range(self, u: int, v: int) -> bool:
        return within_range(self.cfg, self.graph.coords[u], self.graph.coords[v])
