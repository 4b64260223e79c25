"""Directed weighted environment graph and shortest-path primitives."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from heapq import heappop, heappush
from typing import Callable, Iterable, Mapping, NamedTuple

import numpy as np

from . import _kernels

INF = math.inf
COST_TOL = 1e-9


class Coord(NamedTuple):
    x: float
    y: float


def euclidean_distance(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


class GraphError(ValueError):
    pass


class WeightedGraph:
    """Immutable directed graph with per-vertex coordinates, stored as CSR.

    Vertices are the dense range ``[0, n)``. Out-edges of ``v`` live in
    ``indices[indptr[v]:indptr[v+1]]`` with matching ``weights``.
    """

    def __init__(self, coords, edges: Iterable[tuple[int, int, float]]):
        coords = np.asarray(coords, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(coords)):
            raise GraphError("coordinates must be finite")
        n = len(coords)
        edges = list(edges)
        src = np.fromiter((e[0] for e in edges), dtype=np.intp, count=len(edges))
        dst = np.fromiter((e[1] for e in edges), dtype=np.intp, count=len(edges))
        w = np.fromiter((e[2] for e in edges), dtype=float, count=len(edges))
        if len(edges):
            if src.min() < 0 or dst.min() < 0 or src.max() >= n or dst.max() >= n:
                raise GraphError("edge endpoint out of range")
            if not np.all(w > 0) or not np.all(np.isfinite(w)):
                raise GraphError("edge weights must be positive and finite")
        # stable sort keeps insertion order inside each source row
        order = np.lexsort((dst, src))
        self._build(coords, src[order], dst[order], w[order])

    def _build(self, coords, src, dst, w):
        n = len(coords)
        self.coords = coords
        self.coords.setflags(write=False)
        self.indptr = np.zeros(n + 1, dtype=np.intp)
        np.add.at(self.indptr, src + 1, 1)
        np.cumsum(self.indptr, out=self.indptr)
        self.indices = np.ascontiguousarray(dst, dtype=np.intp)
        self.weights = np.ascontiguousarray(w, dtype=float)
        for arr in (self.indptr, self.indices, self.weights):
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.coords)

    @property
    def n_edges(self) -> int:
        return len(self.indices)

    def __len__(self):
        return self.n_vertices

    def coord(self, v: int) -> Coord:
        x, y = self.coords[v]
        return Coord(float(x), float(y))

    def out_edges(self, v: int) -> list[tuple[int, float]]:
        lo, hi = self.indptr[v], self.indptr[v + 1]
        return list(zip(self.indices[lo:hi].tolist(), self.weights[lo:hi].tolist()))

    def edges(self):
        src = np.repeat(np.arange(self.n_vertices), np.diff(self.indptr))
        return list(zip(src.tolist(), self.indices.tolist(), self.weights.tolist()))

    def edge_weight(self, u: int, v: int) -> float | None:
        for t, w in self.out_edges(u):
            if t == v:
                return w
        return None

    @cached_property
    def max_weight(self) -> float:
        return float(self.weights.max()) if self.n_edges else 0.0

    @cached_property
    def reversed(self) -> "WeightedGraph":
        return reverse_graph(self)

    def __repr__(self):
        return f"WeightedGraph(|V|={self.n_vertices}, |E|={self.n_edges})"


def reverse_graph(graph: WeightedGraph) -> WeightedGraph:
    src = np.repeat(np.arange(graph.n_vertices), np.diff(graph.indptr))
    return WeightedGraph(
        graph.coords.copy(),
        zip(graph.indices.tolist(), src.tolist(), graph.weights.tolist()),
    )


@dataclass
class CostMap:
    """Result of a shortest-path search. ``inf`` cost / ``-1`` parent = unreached."""

    cost: np.ndarray
    parent: np.ndarray

    def reached(self) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.cost))

    def __getitem__(self, v: int) -> float:
        return float(self.cost[v])

    def path_to(self, v: int) -> list[int]:
        if not np.isfinite(self.cost[v]):
            raise GraphError(f"vertex {v} was not reached")
        path = [int(v)]
        while self.parent[path[-1]] >= 0:
            path.append(int(self.parent[path[-1]]))
        return path[::-1]


def _normalize_sources(sources) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(sources, Mapping):
        items = list(sources.items())
    else:
        items = [(s, 0.0) if np.isscalar(s) else tuple(s) for s in sources]
    if not items:
        raise GraphError("no sources")
    v = np.array([int(a) for a, _ in items], dtype=np.intp)
    c = np.array([float(b) for _, b in items], dtype=float)
    if not np.all(np.isfinite(c)) or np.any(c < 0):
        raise GraphError("source costs must be finite and non-negative")
    return v, c


def multi_source_dijkstra(
    graph: WeightedGraph,
    sources,
    stop: Callable[[int, float], bool] | None = None,
    allowed=None,
    targets: Iterable[int] | None = None,
    all_targets: bool = False,
    max_cost: float = INF,
) -> CostMap:
    """Shortest paths from several sources, each with its own initial cost.

    ``sources`` is a mapping or iterable of ``(vertex, initial_cost)`` pairs
    (bare vertices get cost 0). ``allowed`` restricts the vertices the search
    may enter. The search halts when ``stop(v, cost)`` first returns true for a
    popped vertex, or, with ``targets``, once any (or, with ``all_targets``,
    every) target is settled. Costs above ``max_cost`` are never settled.
    """
    src_v, src_c = _normalize_sources(sources)
    if np.any(src_v < 0) or np.any(src_v >= graph.n_vertices):
        raise GraphError("source vertex out of range")
    mask = None
    if allowed is not None:
        mask = np.asarray(allowed)
        if mask.dtype != bool or mask.shape != (graph.n_vertices,):
            m = np.zeros(graph.n_vertices, dtype=bool)
            m[np.fromiter(allowed, dtype=np.intp)] = True
            mask = m
        mask = mask.astype(np.uint8)
    if stop is not None:
        return _dijkstra_with_predicate(graph, src_v, src_c, stop, mask, max_cost)
    tmask = None
    n_stop = 0
    if targets is not None:
        tset = np.unique(np.fromiter(targets, dtype=np.intp))
        tmask = np.zeros(graph.n_vertices, dtype=np.uint8)
        tmask[tset] = 1
        n_stop = len(tset) if all_targets else 1
        if n_stop == 0:
            tmask = None
    cost, parent = _kernels.dijkstra(
        graph.indptr, graph.indices, graph.weights, src_v, src_c,
        mask, tmask, n_stop, max_cost,
    )
    return CostMap(cost, parent)


def _dijkstra_with_predicate(graph, src_v, src_c, stop, mask, max_cost):
    n = graph.n_vertices
    cost = np.full(n, INF)
    parent = np.full(n, -1, dtype=np.intp)
    tent = np.full(n, INF)
    heap = []
    for v, c in zip(src_v.tolist(), src_c.tolist()):
        if c < tent[v]:
            tent[v] = c
            heappush(heap, (c, v, -1))
    while heap:
        c, v, p = heappop(heap)
        if np.isfinite(cost[v]) or c > tent[v]:
            continue
        cost[v] = c
        parent[v] = p
        if stop(v, c):
            break
        for u, w in graph.out_edges(v):
            if np.isfinite(cost[u]) or (mask is not None and not mask[u]):
                continue
            nc = c + w
            if nc <= max_cost + COST_TOL and nc < tent[u]:
                tent[u] = nc
                heappush(heap, (nc, u, v))
    return CostMap(cost, parent)


def shortest_distance(graph: WeightedGraph, source: int, target: int) -> float:
    cm = multi_source_dijkstra(graph, [(source, 0.0)], targets=[target])
    return cm[target]
