"""Problem instances: definition, feasibility, goal ordering, start placement."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .comms import CommConfig, components
from .graph import INF, WeightedGraph, multi_source_dijkstra
from .maps import GridMap, build_graph, load_map, nearest_passable, parse_movingai, scale_map, serialize_movingai

DEFAULT_ALPHA = 1.5
EXACT_TSP_GOALS = 10


class ScenarioError(ValueError):
    """Malformed or infeasible problem instance. ``category`` is machine-readable."""

    def __init__(self, category, message="", agents=()):
        self.category = category
        self.agents = tuple(agents)
        super().__init__(f"{category}: {message}" if message else category)


@dataclass(frozen=True)
class Scenario:
    graph: WeightedGraph
    starts: tuple[int, ...]
    goals: tuple[int, ...]
    comm: CommConfig
    alpha: float = DEFAULT_ALPHA
    # optional provenance, used for serialisation
    grid: GridMap | None = field(default=None, compare=False)
    cells: dict | None = field(default=None, compare=False, repr=False)
    depot: int | None = field(default=None, compare=False)   # start centre, if any

    def __post_init__(self):
        object.__setattr__(self, "starts", tuple(int(s) for s in self.starts))
        object.__setattr__(self, "goals", tuple(int(g) for g in self.goals))
        n = self.graph.n_vertices
        if not self.starts:
            raise ScenarioError("invalid scenario", "at least one agent is required")
        if not self.goals:
            raise ScenarioError("invalid scenario", "at least one goal is required")
        for v in self.starts + self.goals:
            if not 0 <= v < n:
                raise ScenarioError("invalid scenario", f"vertex {v} out of range")
        if not self.alpha > 0:
            raise ScenarioError("invalid scenario", "alpha must be positive")

    @property
    def n_agents(self) -> int:
        return len(self.starts)

    def position(self, v: int):
        return self.graph.coords[v]

    def vertex_label(self, v: int) -> list:
        """JSON-friendly label of a vertex: its coordinate pair."""
        x, y = self.graph.coords[v]
        return [_num(x), _num(y)]

    @property
    def vertex_by_label(self) -> dict:
        if self.cells is not None:
            return self.cells
        lookup = {}
        for v, (x, y) in enumerate(self.graph.coords.tolist()):
            lookup.setdefault((_num(x), _num(y)), v)
        object.__setattr__(self, "cells", lookup)
        return lookup

    def digest(self) -> str:
        h = hashlib.sha256()
        if self.grid is not None:
            h.update(serialize_movingai(self.grid).encode())
        else:
            h.update(self.graph.coords.tobytes())
            h.update(self.graph.indptr.tobytes())
            h.update(self.graph.indices.tobytes())
            h.update(self.graph.weights.tobytes())
        payload = json.dumps({
            "starts": [self.vertex_label(v) for v in self.starts],
            "goals": [self.vertex_label(v) for v in self.goals],
            "comm_limit": self.comm.limit,
            "alpha": self.alpha,
        }, sort_keys=True)
        h.update(payload.encode())
        return h.hexdigest()[:16]


def _num(x):
    return int(x) if float(x).is_integer() else float(x)


@dataclass(frozen=True)
class ScenarioReport:
    ok: bool
    reason: str | None = None
    agents: tuple[int, ...] = ()


def validate_scenario(s: Scenario) -> ScenarioReport:
    seen = {}
    for i, v in enumerate(s.starts):
        if v in seen:
            return ScenarioReport(False, "start collision", (seen[v], i))
        seen[v] = i
    parts = components(s.comm, [s.graph.coords[v] for v in s.starts])
    if len(parts) > 1:
        main = max(parts, key=len)
        cut = tuple(sorted(a for p in parts if p is not main for a in p))
        return ScenarioReport(False, "start communication violation", cut)
    return ScenarioReport(True)


def require_valid(s: Scenario) -> None:
    rep = validate_scenario(s)
    if not rep.ok:
        raise ScenarioError(rep.reason, f"agents {list(rep.agents)}", rep.agents)


def _tour_length(dist, tour):
    return sum(dist[a][b] for a, b in zip(tour, tour[1:]))


def _held_karp(dist) -> list[int]:
    """Exact shortest open path from node 0 through all others (indices >= 1)."""
    m = len(dist) - 1
    full = (1 << m) - 1
    # best[(mask, j)] = (length, prev) for paths covering ``mask`` ending at goal j
    best = {(1 << j, j): (dist[0][j + 1], -1) for j in range(m)}
    for mask in range(1, full + 1):
        for j in range(m):
            cur = best.get((mask, j))
            if cur is None:
                continue
            for k in range(m):
                if mask & (1 << k):
                    continue
                key = (mask | (1 << k), k)
                cand = (cur[0] + dist[j + 1][k + 1], j)
                if key not in best or cand[0] < best[key][0] - 1e-12:
                    best[key] = cand
    end = min(range(m), key=lambda j: (best[(full, j)][0], j))
    path, mask, j = [], full, end
    while j >= 0:
        path.append(j + 1)
        prev = best[(mask, j)][1]
        mask &= ~(1 << j)
        j = prev
    return path[::-1]


def order_goals_tsp(graph: WeightedGraph, depot: int, goals) -> list[int]:
    """Open tour from ``depot`` over the distinct goals.

    Exact (Held-Karp) up to ``EXACT_TSP_GOALS`` goals, otherwise nearest
    neighbour followed by 2-opt to a local optimum.
    """
    goals = sorted(set(int(g) for g in goals))
    if not goals:
        return []
    nodes = [depot] + goals
    dist = []
    for v in nodes:
        cm = multi_source_dijkstra(graph, [(v, 0.0)], targets=nodes, all_targets=True)
        row = [cm[u] for u in nodes]
        for g, d in zip(nodes, row):
            if d == INF:
                raise ScenarioError("unreachable goal", f"goal vertex {g} unreachable from {v}")
        dist.append(row)

    if len(goals) <= EXACT_TSP_GOALS:
        return [nodes[j] for j in _held_karp(dist)]
    # indices into ``nodes``; 0 is the depot
    tour = [0]
    left = list(range(1, len(nodes)))
    while left:
        cur = tour[-1]
        nxt = min(left, key=lambda j: (dist[cur][j], j))
        tour.append(nxt)
        left.remove(nxt)

    best = _tour_length(dist, tour)
    improved = True
    while improved:
        improved = False
        for i in range(1, len(tour) - 1):
            for j in range(i + 1, len(tour)):
                cand = tour[:i] + tour[i:j + 1][::-1] + tour[j + 1:]
                length = _tour_length(dist, cand)
                if length < best - 1e-9:
                    tour, best, improved = cand, length, True
    return [nodes[j] for j in tour[1:]]


def brute_force_tour(dist_fn, depot, goals):
    """Exhaustive optimum over all goal orders (tiny inputs only)."""
    best, best_order = INF, None
    for order in permutations(goals):
        tour = (depot,) + order
        length = sum(dist_fn(a, b) for a, b in zip(tour, tour[1:]))
        if length < best:
            best, best_order = length, list(order)
    return best, best_order


def random_starts(graph: WeightedGraph, center: int, n: int, rng_seed,
                  comm: CommConfig | None = None, max_retries: int = 100) -> list[int]:
    """Draw ``n`` distinct starts among the ``4n`` vertices nearest to ``center``.

    With ``comm`` given, draws whose fleet is not connected are retried.
    """
    cm = multi_source_dijkstra(graph, [(center, 0.0)])
    reached = cm.reached()
    if len(reached) < n:
        raise ScenarioError("invalid scenario",
                            f"only {len(reached)} vertices reachable from center")
    order = np.lexsort((reached, cm.cost[reached]))
    candidates = reached[order][:4 * n]
    rng = np.random.default_rng(rng_seed)
    for _ in range(max_retries):
        pick = candidates[rng.choice(len(candidates), size=n, replace=False)]
        starts = [int(v) for v in pick]
        if comm is None or len(components(comm, [graph.coords[v] for v in starts])) == 1:
            return starts
    raise ScenarioError("no feasible start placement", f"after {max_retries} draws")


# -- scenario files ---------------------------------------------------------

def _map_cell(grid, scale, cell):
    col, row = int(cell[0]), int(cell[1])
    if scale != 1.0:
        col, row = int(col * scale), int(row * scale)
    return nearest_passable(grid, col, row)


def scenario_from_dict(data: dict, base_dir: str = ".") -> Scenario:
    """Build a :class:`Scenario` from the JSON document described in docs/formats.md."""
    try:
        if "map_text" in data:
            grid = parse_movingai(data["map_text"])
        else:
            grid = load_map(os.path.join(base_dir, data["map"]))
        scale = float(data.get("scale", 1.0))
        if scale != 1.0:
            grid = scale_map(grid, scale)
        graph, cells = build_graph(grid)
        comm = CommConfig(float(data["comm_limit"]))
        alpha = float(data.get("alpha", DEFAULT_ALPHA))

        def vertex(cell):
            return cells[_map_cell(grid, scale, cell)]

        goals = [vertex(c) for c in data["goals"]]
        if "starts" in data:
            starts = [vertex(c) for c in data["starts"]]
            depot = starts[0]
        else:
            center = vertex(data["start_center"])
            starts = random_starts(graph, center, int(data["agents"]),
                                   int(data.get("seed", 0)), comm)
            depot = center
        if "agents" in data and len(starts) != int(data["agents"]):
            raise ScenarioError("invalid scenario", "agents does not match number of starts")
        if data.get("order_goals", False):
            goals = order_goals_tsp(graph, depot, goals)
    except KeyError as exc:
        raise ScenarioError("invalid scenario", f"missing field {exc}") from None
    return Scenario(graph, tuple(starts), tuple(goals), comm, alpha, grid=grid,
                    cells=cells, depot=depot)


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError("invalid scenario", f"bad JSON: {exc}") from None
    return scenario_from_dict(data, os.path.dirname(os.path.abspath(path)))
