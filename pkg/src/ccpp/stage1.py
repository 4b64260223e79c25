"""First planning stage: per-epoch reachability searches under the communication limit.

For every goal (epoch) a leader is chosen, the fleet is ordered so that each
follower only has to stay in touch with agents earlier in the order, and every
agent gets a search tree plus a set of candidate end positions (result nodes).
Costs inside an epoch are relative to the epoch start.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .comms import CommIndex
from .errors import PlanningError, at_epoch
from .graph import INF, WeightedGraph, multi_source_dijkstra

MAX_FALLBACK_STEPS = 100
STEP_NAMES = ("leader_selection", "ordering", "leader_plan", "follower_plan",
              "backward_validation")


class SearchNode(NamedTuple):
    vertex: int
    cost: float
    parent: "SearchNode | None"
    is_result: bool


@dataclass
class AgentSearch:
    """Search tree of one agent in one epoch, stored as dense arrays."""

    agent: int
    cost: np.ndarray            # inf where not opened
    parent: np.ndarray          # -1 for roots
    init: dict[int, float]
    result: dict[int, float] = field(default_factory=dict)
    discarded: int = 0          # nodes rejected for lack of a witness
    fallback_steps: int = 0

    def opened(self) -> dict[int, float]:
        vs = np.flatnonzero(np.isfinite(self.cost))
        return dict(zip(vs.tolist(), self.cost[vs].tolist()))

    def opened_vertices(self) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.cost))

    def node(self, v: int) -> SearchNode:
        if not np.isfinite(self.cost[v]):
            raise KeyError(v)
        chain = []
        while v >= 0:
            chain.append(v)
            v = int(self.parent[v])
        node = None
        for u in reversed(chain):
            node = SearchNode(u, float(self.cost[u]), node, u in self.result)
        return node


@dataclass
class EpochRecord:
    index: int
    goal: int
    leader: int
    leader_start: int
    leader_cost: float
    order: list[int]
    searches: dict[int, AgentSearch]

    @property
    def horizon(self) -> float:
        return self.searches[self.leader].result[self.goal]


@dataclass
class Stage1Output:
    epochs: list[EpochRecord]
    timings: dict[str, float] = field(default_factory=lambda: dict.fromkeys(STEP_NAMES, 0.0))


# -- leader and ordering ----------------------------------------------------

def select_leader(graph: WeightedGraph, prev_results, goal: int):
    """Agent whose previous result node is nearest to ``goal``.

    Returns ``(agent, vertex, distance)``; ties go to the lower agent index,
    then the lower vertex.
    """
    candidates = sorted({v for res in prev_results for v in res})
    dist = multi_source_dijkstra(graph.reversed, [(goal, 0.0)],
                                 targets=candidates, all_targets=True)
    best = None
    for a, res in enumerate(prev_results):
        for v in res:
            key = (dist[v], a, v)
            if best is None or key < best:
                best = key
    if best is None or best[0] == INF:
        raise PlanningError("epoch infeasible", f"goal {goal} unreachable from every agent")
    d, a, v = best
    return a, v, d


def init_follower(prev_result, earlier_init, comm_index: CommIndex) -> dict[int, float]:
    """Previous result vertices within range of an earlier agent's init vertex."""
    near = comm_index.near_mask(earlier_init)
    kept = {v: 0.0 for v in sorted(prev_result) if near[v]}
    if not kept:
        raise PlanningError("follower initialization infeasible")
    return kept


def select_order(graph: WeightedGraph, comm_index: CommIndex, leader: int,
                 leader_start: int, prev_results):
    """Follower order by repeated multi-source search from the ordered agents.

    Returns ``(order, init)`` with ``init[agent]`` the agent's init node set.
    """
    order = [leader]
    init = {leader: {leader_start: 0.0}}
    sources = [leader_start]
    pending = [a for a in range(len(prev_results)) if a != leader]
    while pending:
        near = comm_index.near_mask(sources)
        cand = [(a, v) for a in pending for v in prev_results[a] if near[v]]
        if not cand:
            raise PlanningError("ordering infeasible",
                                f"agents {pending} have no start within range")
        dist = multi_source_dijkstra(graph, [(s, 0.0) for s in sources],
                                     targets=[v for _, v in cand], all_targets=True)
        _, a, _ = min((dist[v], a, v) for a, v in cand)
        init[a] = init_follower(prev_results[a], sources, comm_index)
        order.append(a)
        pending.remove(a)
        sources.extend(init[a])
    return order, init


# -- searches ---------------------------------------------------------------

def plan_leader_path(graph: WeightedGraph, leader: int, leader_start: int,
                     goal: int) -> AgentSearch:
    cm = multi_source_dijkstra(graph, [(leader_start, 0.0)], targets=[goal])
    if not np.isfinite(cm.cost[goal]):
        raise PlanningError("epoch infeasible", f"goal {goal} unreachable by leader")
    return AgentSearch(leader, cm.cost, cm.parent, {leader_start: 0.0},
                       {goal: float(cm.cost[goal])})


def _witness_tables(n, earlier):
    k = len(earlier)
    e_cost = np.full((n, k), INF)
    e_res = np.zeros((n, k), dtype=np.uint8)
    sorted_costs = np.full((k, max(n, 1)), INF)
    counts = np.zeros(k, dtype=np.intp)
    min_result = np.full(k, INF)
    for j, s in enumerate(earlier):
        e_cost[:, j] = s.cost
        rv = np.fromiter(s.result, dtype=np.intp, count=len(s.result))
        e_res[rv, j] = 1
        fin = np.sort(s.cost[np.isfinite(s.cost)])
        sorted_costs[j, :len(fin)] = fin
        counts[j] = len(fin)
        if s.result:
            min_result[j] = min(s.result.values())
    return e_cost, e_res, sorted_costs, counts, min_result


def follower_search(graph: WeightedGraph, comm_index: CommIndex, agent: int,
                    init: dict[int, float], earlier: list[AgentSearch],
                    leader_cost: float, window: float | None = None) -> AgentSearch:
    """Best-first search where every node needs a witness of an earlier agent.

    A node ``(v, c)`` is kept if an earlier agent opened some ``u`` within
    range at a cost within ``window`` of ``c``, or has a result node at ``u``
    reached no later than ``c``. The search stops at ``leader_cost + window``.
    Without any result node the waiting fallback lowers the frontier costs
    by the smallest deficit and resumes.
    """
    n = graph.n_vertices
    if window is None:
        window = graph.max_weight
    horizon = leader_cost + window
    tables = _witness_tables(n, earlier)
    earlier_results = sorted({v for s in earlier for v in s.result})
    near_result = comm_index.near_mask(earlier_results)

    cost = np.full(n, INF)
    parent = np.full(n, -1, dtype=np.intp)
    seed_v = np.fromiter(init, dtype=np.intp, count=len(init))
    seed_c = np.fromiter(init.values(), dtype=float, count=len(init))
    seed_p = np.full(len(init), -1, dtype=np.intp)
    search = AgentSearch(agent, cost, parent, dict(init))

    for step in range(MAX_FALLBACK_STEPS + 1):
        d_par, d_child, d_cost, d_def = _kernels.follower_pass(
            graph.indptr, graph.indices, graph.weights,
            comm_index.indptr, comm_index.indices, comm_index.complete,
            *tables, window, horizon, seed_v, seed_c, seed_p, cost, parent)
        # children past the horizon are cut, not discarded for lack of a witness
        search.discarded += int(np.count_nonzero(d_cost <= horizon + 1e-9))
        hits = np.flatnonzero(np.isfinite(cost) & near_result)
        if len(hits):
            search.result = dict(zip(hits.tolist(), cost[hits].tolist()))
            search.fallback_steps = step
            return search
        if step == MAX_FALLBACK_STEPS:
            break
        live = ~np.isfinite(cost[d_child]) & np.isfinite(d_def)
        if not live.any():
            break
        delta = float(d_def[live].min())
        frontier = np.unique(d_par[live])
        frontier = frontier[frontier >= 0]
        seed_v = frontier
        seed_c = np.maximum(cost[frontier] - delta, 0.0)
        seed_p = parent[frontier].copy()
        cost[frontier] = INF
        parent[frontier] = -1
    raise PlanningError("follower search stalled",
                        f"agent {agent} found no result node")


def compute_result_nodes(search: AgentSearch, earlier: list[AgentSearch],
                         comm_index: CommIndex, horizon: float) -> AgentSearch:
    """Opened nodes within range of an earlier agent's result vertex."""
    near = comm_index.near_mask({v for s in earlier for v in s.result})
    ok = near & (search.cost <= horizon + 1e-9)
    hits = np.flatnonzero(ok)
    search.result = dict(zip(hits.tolist(), search.cost[hits].tolist()))
    if not search.result:
        raise PlanningError("follower has no result nodes", f"agent {search.agent}")
    return search


def backward_validate(epoch: EpochRecord, comm_index: CommIndex) -> EpochRecord:
    """Keep only result nodes that support an agent later in the order.

    Agents left without any valid node are treated as leaves of the
    communication tree: the sweep is restarted from the last of them with all
    its nodes marked valid. Validity accumulates over sweeps.
    """
    order = epoch.order
    results = [sorted(epoch.searches[a].result) for a in order]
    valid = [set() for _ in order]

    def sweep(start):
        valid[start].update(results[start])
        support = set(valid[start])
        for k in range(start + 1, len(order)):
            support |= valid[k]
        for k in range(start - 1, -1, -1):
            near = comm_index.near_mask(support)
            valid[k].update(v for v in results[k] if near[v])
            support |= valid[k]

    sweep(len(order) - 1)
    while True:
        empty = [k for k, s in enumerate(valid) if not s]
        if not empty:
            break
        before = sum(map(len, valid))
        sweep(empty[-1])
        if sum(map(len, valid)) == before:
            raise PlanningError("backward validation deadlock",
                                f"agents {[order[k] for k in empty]} unsupported",
                                epoch.index)
    for k, a in enumerate(order):
        s = epoch.searches[a]
        s.result = {v: c for v, c in s.result.items() if v in valid[k]}
    return epoch


# -- driver -----------------------------------------------------------------

def run_epoch(graph, comm_index, index, goal, prev_results, timings) -> EpochRecord:
    t0 = time.perf_counter()
    leader, leader_start, _ = select_leader(graph, prev_results, goal)
    prev_results[leader] = {leader_start: prev_results[leader][leader_start]}
    t1 = time.perf_counter()
    order, init = select_order(graph, comm_index, leader, leader_start, prev_results)
    t2 = time.perf_counter()
    lead = plan_leader_path(graph, leader, leader_start, goal)
    leader_cost = lead.result[goal]
    t3 = time.perf_counter()
    searches = {leader: lead}
    earlier = [lead]
    for a in order[1:]:
        s = follower_search(graph, comm_index, a, init[a], earlier, leader_cost)
        compute_result_nodes(s, earlier, comm_index, leader_cost + graph.max_weight)
        searches[a] = s
        earlier.append(s)
    t4 = time.perf_counter()
    epoch = EpochRecord(index, goal, leader, leader_start, leader_cost, order, searches)
    backward_validate(epoch, comm_index)
    t5 = time.perf_counter()
    for name, dt in zip(STEP_NAMES, (t1 - t0, t2 - t1, t3 - t2, t4 - t3, t5 - t4)):
        timings[name] += dt
    return epoch


def run_stage1(scenario, comm_index: CommIndex | None = None) -> Stage1Output:
    graph = scenario.graph
    if comm_index is None:
        comm_index = CommIndex(graph, scenario.comm)
    out = Stage1Output([])
    prev = [{s: 0.0} for s in scenario.starts]
    for i, goal in enumerate(scenario.goals):
        try:
            epoch = run_epoch(graph, comm_index, i, goal, prev, out.timings)
        except PlanningError as exc:
            raise at_epoch(exc, i) from None
        if out.epochs:
            # the next epoch only starts from init nodes; trim the previous ends
            last = out.epochs[-1]
            for a, s in last.searches.items():
                keep = epoch.searches[a].init
                s.result = {v: c for v, c in s.result.items() if v in keep}
        out.epochs.append(epoch)
        prev = [dict(epoch.searches[a].result) for a in range(scenario.n_agents)]
    return out


def stage1_to_dict(out: Stage1Output, scenario) -> dict:
    """Per-epoch init/opened/result node sets keyed by vertex coordinates."""
    def nodes(d):
        return [scenario.vertex_label(v) + [round(c, 9)] for v, c in sorted(d.items())]

    epochs = []
    for ep in out.epochs:
        agents = []
        for a in ep.order:
            s = ep.searches[a]
            agents.append({"agent": a, "init": nodes(s.init), "opened": nodes(s.opened()),
                           "result": nodes(s.result)})
        epochs.append({"index": ep.index, "goal": scenario.vertex_label(ep.goal),
                       "leader": ep.leader, "leader_start": scenario.vertex_label(ep.leader_start),
                       "leader_cost": round(ep.leader_cost, 9), "order": list(ep.order),
                       "agents": agents})
    return {"kind": "stage1", "scenario": scenario.digest(), "epochs": epochs}
