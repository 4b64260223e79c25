"""Second planning stage: greedy best-first search in the joint state space.

Each epoch is searched separately. Per-agent heuristic fields come from the
first stage's result nodes; the search always lets the agent with the lowest
clock act next, so departures along any search path are time-ordered and the
sequence of joint positions is exactly the sequence of fleet configurations.
A node whose last action broke communication is kept as *speculative* while
the link can still be restored at the same instant.
"""
from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .comms import RANGE_TOL
from .errors import PlanningError, at_epoch
from .graph import INF, multi_source_dijkstra
from .plan import Plan, TimedAction, plan_from_moves

DEFAULT_NODE_BUDGET = 5_000_000
KEY_SCALE = 1e6
TOL = 1e-9


def snap(t: float) -> float:
    # half-even rounding to 1e-9, reproducible bit for bit in the compiled search
    return round(t * 1e9) / 1e9


# -- heuristic --------------------------------------------------------------

@dataclass
class HeuristicField:
    """Per-agent cost-to-reach of the agent's result nodes.

    ``inner`` is confined to the vertices the agent opened in the first stage
    (``inf`` elsewhere). Outside that region the value is ``sentinel`` plus
    the unconstrained distance raised to ``alpha``, so such states still rank
    after all confined ones but keep a gradient.
    """

    inner: np.ndarray      # (n_agents, V)
    outer: np.ndarray      # (n_agents, V) unconstrained distance
    sentinel: float
    alpha: float

    def term(self, agent: int, v: int) -> float:
        c = self.inner[agent, v]
        if math.isfinite(c):
            return float(c) ** self.alpha
        return self.sentinel + float(self.outer[agent, v]) ** self.alpha

    def terms(self) -> list[list[float]]:
        inner = self.inner ** self.alpha
        outer = self.sentinel + self.outer ** self.alpha
        return np.where(np.isfinite(self.inner), inner, outer).tolist()


def build_heuristic(graph, epoch, alpha: float, n_agents: int | None = None) -> HeuristicField:
    n_agents = n_agents if n_agents is not None else len(epoch.searches)
    rev = graph.reversed
    V = graph.n_vertices
    inner = np.full((n_agents, V), INF)
    outer = np.full((n_agents, V), INF)
    for a, s in epoch.searches.items():
        src = [(v, 0.0) for v in sorted(s.result)]
        opened = np.isfinite(s.cost)
        inner[a] = multi_source_dijkstra(rev, src, allowed=opened).cost
        outer[a] = multi_source_dijkstra(rev, src).cost
    fin = inner[np.isfinite(inner)]
    diam = float(fin.max()) if fin.size else 0.0
    sentinel = n_agents * (diam + 1.0) ** alpha + 1.0
    return HeuristicField(inner, outer, sentinel, alpha)


def heuristic_value(field: HeuristicField, state: "CompositeState", alpha: float | None = None) -> float:
    if alpha is not None and alpha != field.alpha:
        field = HeuristicField(field.inner, field.outer, field.sentinel, alpha)
    return sum(field.term(a, v) for a, v in enumerate(state.positions))


# -- joint states -----------------------------------------------------------

class CompositeState:
    """Joint search node. ``waiting`` marks agents that chose to wait and are
    skipped until no non-waiting agent shares the lowest clock."""

    __slots__ = ("positions", "times", "waiting", "arrivals", "speculative_since",
                 "parent", "action", "h")

    def __init__(self, positions, times, waiting=None, arrivals=None,
                 speculative_since=None, parent=None, action=None, h=0.0):
        self.positions = tuple(positions)
        self.times = tuple(times)
        self.waiting = tuple(waiting) if waiting is not None else (False,) * len(self.positions)
        self.arrivals = tuple(arrivals) if arrivals is not None else self.times
        self.speculative_since = speculative_since
        self.parent = parent
        self.action = action      # (agent, from, to, depart, arrive) for moves
        self.h = h

    @property
    def min_time(self) -> float:
        return min(self.times)

    def key(self, release: float = 0.0):
        """Closed-set key: clocks relative to the lowest one.

        A configuration reached again later with the same clock offsets is
        treated as a revisit, except across ``release`` (the time before
        which the epoch may not end).
        """
        m = min(self.times)
        rel = tuple(round((t - m) * KEY_SCALE) for t in self.times)
        return (self.positions, rel, self.waiting, m < release - TOL)

    def actor(self) -> int:
        best = None
        for i, (t, w) in enumerate(zip(self.times, self.waiting)):
            if not w and (best is None or t < self.times[best] - TOL):
                best = i
        return best

    def __repr__(self):
        return (f"CompositeState(pos={self.positions}, t={self.times}, "
                f"wait={self.waiting}, stamp={self.speculative_since})")


def normalize_waits(times, waiting, release: float = 0.0):
    """Advance waiting agents once no non-waiting agent holds the lowest clock.

    If every agent waits, the only future event is ``release``; the fleet
    jumps there, or the wait is pointless and ``None`` is returned.
    """
    if True not in waiting:
        return times, waiting
    free = [t for t, w in zip(times, waiting) if not w]
    if not free:
        m = min(times)
        if m < release - TOL:
            return tuple(max(t, release) for t in times), (False,) * len(times)
        return None
    m_free = min(free)
    if m_free <= min(times) + TOL:
        return times, waiting
    times = tuple(max(t, m_free) if w else t for t, w in zip(times, waiting))
    return times, (False,) * len(times)


class RangeCheck:
    """Memoised fleet connectivity test on vertex tuples."""

    def __init__(self, graph, comm):
        self.coords = graph.coords.tolist()
        self.comm = comm
        self.sq = (comm.limit + RANGE_TOL) ** 2
        self.cache: dict = {}

    def linked(self, u, v) -> bool:
        a, b = self.coords[u], self.coords[v]
        if self.comm.euclidean:
            dx, dy = a[0] - b[0], a[1] - b[1]
            return dx * dx + dy * dy <= self.sq
        return self.comm.metric(a, b) <= self.comm.limit + RANGE_TOL

    def connected(self, positions) -> bool:
        hit = self.cache.get(positions)
        if hit is not None:
            return hit
        n = len(positions)
        seen = [False] * n
        seen[0] = True
        stack, count = [0], 1
        while stack:
            i = stack.pop()
            for j in range(n):
                if not seen[j] and self.linked(positions[i], positions[j]):
                    seen[j] = True
                    count += 1
                    stack.append(j)
        ok = count == n
        if len(self.cache) > 1_000_000:
            self.cache.clear()
        self.cache[positions] = ok
        return ok


def check_speculative(child: CompositeState, depart: float, rc: RangeCheck):
    """Apply the speculation rule to a freshly built child; ``None`` = discard.

    A disconnected configuration that appears at time ``depart`` can only be
    repaired by another departure at that same instant, so the node is
    discarded as soon as the lowest clock moves past the stamp.
    """
    if rc.connected(child.positions):
        child.speculative_since = None
        return child
    if child.speculative_since is None:
        child.speculative_since = depart
    if child.min_time > child.speculative_since + TOL:
        return None
    return child


class EpochContext:
    """Everything ``expand`` needs for one epoch.

    ``terms`` is the (agents, vertices) array of heuristic terms and
    ``leader_ok`` flags the CSR edges the leader may take.
    """

    def __init__(self, graph, leader: int, goal: int, terms: np.ndarray,
                 leader_ok: np.ndarray, rc: RangeCheck, release: float = 0.0):
        self.graph, self.leader, self.goal = graph, leader, goal
        self.terms_array = np.ascontiguousarray(terms, dtype=float)
        self.leader_ok = np.ascontiguousarray(leader_ok, dtype=np.uint8)
        self.rc, self.release = rc, release
        self._lists = None

    def _build_lists(self):
        g = self.graph
        ip, ix, wt = g.indptr.tolist(), g.indices.tolist(), g.weights.tolist()
        ok = self.leader_ok.tolist()
        adjacency = [list(zip(ix[ip[v]:ip[v + 1]], wt[ip[v]:ip[v + 1]]))
                     for v in range(g.n_vertices)]
        leader_moves = [[(ix[e], wt[e]) for e in range(ip[v], ip[v + 1]) if ok[e]]
                        for v in range(g.n_vertices)]
        self._lists = (adjacency, leader_moves, self.terms_array.tolist())

    @property
    def adjacency(self) -> list:
        if self._lists is None:
            self._build_lists()
        return self._lists[0]

    @property
    def leader_moves(self) -> list:
        if self._lists is None:
            self._build_lists()
        return self._lists[1]

    @property
    def terms(self) -> list:
        if self._lists is None:
            self._build_lists()
        return self._lists[2]


def make_context(graph, epoch, field: HeuristicField, rc: RangeCheck,
                 restrict_leader: bool = True) -> EpochContext:
    """With ``restrict_leader`` the leader may only take edges that lie on a
    shortest path to the goal (plus waits)."""
    terms = np.where(np.isfinite(field.inner), field.inner ** field.alpha,
                     field.sentinel + field.outer ** field.alpha)
    if not restrict_leader:
        ok = np.ones(len(graph.indices), dtype=np.uint8)
    else:
        dist = field.outer[epoch.leader]
        src = np.repeat(np.arange(graph.n_vertices), np.diff(graph.indptr))
        dv = dist[src]
        with np.errstate(invalid="ignore"):
            tight = np.abs(dv - graph.weights - dist[graph.indices]) <= TOL
        ok = (np.isfinite(dv) & tight).astype(np.uint8)
    return EpochContext(graph, epoch.leader, epoch.goal, terms, ok, rc)


def _h(ctx, positions):
    return sum(ctx.terms[a][v] for a, v in enumerate(positions))


def expand(state: CompositeState, ctx: EpochContext) -> list[CompositeState]:
    """Children of ``state``: every collision-free move of the acting agent
    plus one wait. Speculatively disconnected children past their stamp are
    dropped."""
    a = state.actor()
    if a is None:
        return []
    here = state.positions[a]
    t = state.times[a]
    taken = set(state.positions)
    row = ctx.terms[a]
    h0 = state.h - row[here]
    moves = ctx.leader_moves[here] if a == ctx.leader else ctx.adjacency[here]
    out = []
    for u, w in moves:
        if u in taken:
            continue
        pos = state.positions[:a] + (u,) + state.positions[a + 1:]
        arr = snap(t + w)
        times = state.times[:a] + (arr,) + state.times[a + 1:]
        arrivals = state.arrivals[:a] + (arr,) + state.arrivals[a + 1:]
        norm = normalize_waits(times, state.waiting)
        times, waiting = norm
        child = CompositeState(pos, times, waiting, arrivals, state.speculative_since,
                               state, (a, here, u, t, arr), h0 + row[u])
        if check_speculative(child, t, ctx.rc) is not None:
            out.append(child)
    waiting = state.waiting[:a] + (True,) + state.waiting[a + 1:]
    norm = normalize_waits(state.times, waiting, ctx.release)
    if norm is not None:
        times, waiting = norm
        child = CompositeState(state.positions, times, waiting, state.arrivals,
                               state.speculative_since, state, None, state.h)
        if check_speculative(child, t, ctx.rc) is not None:
            out.append(child)
    return out


# -- epoch search -----------------------------------------------------------

@dataclass
class PlanSegment:
    moves: list                # agent -> [TimedAction]
    end_positions: tuple
    end_times: tuple
    end_arrivals: tuple
    visit_time: float
    expansions: int = 0


def _is_terminal(state, ctx, prev_visit):
    a = ctx.leader
    return (state.positions[a] == ctx.goal and state.speculative_since is None
            and state.times[a] >= prev_visit - TOL)


def _segment(state, n, leader, prev_visit, expansions):
    moves = [[] for _ in range(n)]
    node = state
    while node is not None:
        if node.action is not None:
            a, u, v, dep, arr = node.action
            moves[a].append(TimedAction.move(u, v, dep, arr))
        node = node.parent
    for m in moves:
        m.reverse()
    visit = max(state.arrivals[leader], prev_visit)
    return PlanSegment(moves, state.positions, state.times, state.arrivals, visit, expansions)


def run_epoch_search(initial: CompositeState, ctx: EpochContext, prev_visit: float = 0.0,
                     node_budget: int = DEFAULT_NODE_BUDGET, deadline: float | None = None,
                     trace: Callable[[CompositeState], None] | None = None) -> PlanSegment:
    """Greedy best-first search until the leader stands on the goal in a
    connected configuration.

    Ties on the heuristic prefer a lower leader term, then less total
    elapsed time, then smaller positions.
    """
    kernel = _kernels.composite_search_kernel()
    if kernel is not None and ctx.rc.comm.euclidean:
        return _compiled_search(kernel, initial, ctx, prev_visit, node_budget, deadline, trace)
    n = len(initial.positions)
    ctx.release = prev_visit
    initial.h = _h(ctx, initial.positions)
    counter = itertools.count()
    leader = ctx.leader

    def prio(s):
        return (s.h, ctx.terms[leader][s.positions[leader]], sum(s.times), s.positions,
                next(counter))

    if trace is not None:
        trace(initial)
    heap = [(prio(initial), initial)]
    seen = {initial.key(prev_visit)}
    expansions = 0
    while heap:
        _, state = heapq.heappop(heap)
        if _is_terminal(state, ctx, prev_visit):
            return _segment(state, n, leader, prev_visit, expansions)
        expansions += 1
        if expansions > node_budget:
            raise PlanningError("epoch search timeout", f"node budget {node_budget} exhausted")
        if deadline is not None and expansions % 1024 == 0 and time.perf_counter() > deadline:
            raise PlanningError("timeout", "wall-clock limit reached")
        for child in expand(state, ctx):
            k = child.key(prev_visit)
            if k in seen:
                continue
            seen.add(k)
            if trace is not None:
                trace(child)
            heapq.heappush(heap, (prio(child), child))
    raise PlanningError("epoch search failed", "open list exhausted")


_STATUS = {1: ("epoch search timeout", "node budget {} exhausted"),
           2: ("timeout", "wall-clock limit reached"),
           3: ("epoch search failed", "open list exhausted")}


def _compiled_search(kernel, initial, ctx, prev_visit, node_budget, deadline, trace):
    g = ctx.graph
    n = len(initial.positions)
    ctx.release = prev_visit
    sq = (ctx.rc.comm.limit + RANGE_TOL) ** 2
    status, expansions, terminal, ar = kernel(
        g.indptr, g.indices, g.weights, ctx.leader_ok, ctx.terms_array,
        np.ascontiguousarray(g.coords, dtype=float), sq, ctx.leader, ctx.goal,
        list(initial.positions), list(initial.times), list(initial.arrivals),
        float(prev_visit), int(node_budget), deadline)
    if trace is not None:
        _replay(ar, trace)
    if status != 0:
        cat, msg = _STATUS[status]
        raise PlanningError(cat, msg.format(node_budget))
    parent, agent = ar["parent"], ar["agent"]
    moves = [[] for _ in range(n)]
    k = terminal
    while k >= 0:
        a = int(agent[k])
        if a >= 0:
            moves[a].append(TimedAction.move(int(ar["from"][k]), int(ar["to"][k]),
                                             float(ar["depart"][k]), float(ar["arrive"][k])))
        k = int(parent[k])
    for m in moves:
        m.reverse()
    pos = tuple(int(v) for v in ar["positions"][terminal])
    times = tuple(float(t) for t in ar["times"][terminal])
    arrivals = tuple(float(t) for t in ar["arrivals"][terminal])
    visit = max(arrivals[ctx.leader], prev_visit)
    return PlanSegment(moves, pos, times, arrivals, visit, int(expansions))


def _replay(ar, trace):
    """Feed the kernel's retained nodes to ``trace`` in generation order."""
    nodes = []
    for k in range(len(ar["parent"])):
        stamp = float(ar["speculative_since"][k])
        p = int(ar["parent"][k])
        a = int(ar["agent"][k])
        act = None if a < 0 else (a, int(ar["from"][k]), int(ar["to"][k]),
                                  float(ar["depart"][k]), float(ar["arrive"][k]))
        st = CompositeState(ar["positions"][k].tolist(), ar["times"][k].tolist(),
                            ar["waiting"][k].tolist(), ar["arrivals"][k].tolist(),
                            None if math.isnan(stamp) else stamp,
                            nodes[p] if p >= 0 else None, act)
        nodes.append(st)
        trace(st)


def segments_to_plan(starts, segments: list[PlanSegment], digest=None) -> Plan:
    """Concatenate epoch segments into one plan."""
    moves = [[mv for seg in segments for mv in seg.moves[a]] for a in range(len(starts))]
    end = segments[-1].end_times if segments else None
    return plan_from_moves(starts, moves, end, digest)


def run_stage2(stage1, scenario, node_budget: int = DEFAULT_NODE_BUDGET,
               deadline: float | None = None, trace=None, timings: dict | None = None) -> Plan:
    """Chain the epoch searches; each starts from the previous end state."""
    graph = scenario.graph
    n = scenario.n_agents
    rc = RangeCheck(graph, scenario.comm)
    state = CompositeState(scenario.starts, (0.0,) * n)
    prev_visit = 0.0
    segments = []
    for ep in stage1.epochs:
        try:
            t0 = time.perf_counter()
            field = build_heuristic(graph, ep, scenario.alpha, n)
            ctx = make_context(graph, ep, field, rc)
            t1 = time.perf_counter()
            hook = (lambda s, i=ep.index: trace(i, s)) if trace is not None else None
            try:
                seg = run_epoch_search(state, ctx, prev_visit, node_budget, deadline, hook)
            except PlanningError as exc:
                if exc.category != "epoch search failed":
                    raise
                # the leader may need to step aside; retry without the restriction
                ctx = make_context(graph, ep, field, rc, restrict_leader=False)
                seg = run_epoch_search(state, ctx, prev_visit, node_budget, deadline, hook)
            t2 = time.perf_counter()
        except PlanningError as exc:
            raise at_epoch(exc, ep.index) from None
        if timings is not None:
            timings["heuristic_build"] = timings.get("heuristic_build", 0.0) + (t1 - t0)
            timings["stage2_search"] = timings.get("stage2_search", 0.0) + (t2 - t1)
        segments.append(seg)
        prev_visit = seg.visit_time
        state = CompositeState(seg.end_positions, seg.end_times, None, seg.end_arrivals)
    return segments_to_plan(scenario.starts, segments, scenario.digest())
