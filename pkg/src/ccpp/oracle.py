"""Exhaustive minimal-makespan planner for tiny instances.

Uniform-cost search over joint states ordered by the fleet clock (the lowest
agent clock). Every agent holding the lowest clock may act: move along an
edge to a free vertex, or wait until the next event of another agent. The
communication and collision rules are the same event-based ones the solver
uses, and goals are credited on arrival in the prescribed order.

Optimality holds within this event-based action model: waits end at other
agents' events, never at arbitrary instants.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

from .errors import PlanningError
from .plan import Plan, TimedAction, plan_from_moves

TOL = 1e-9
DIGITS = 9


@dataclass(frozen=True)
class OracleLimits:
    max_vertices: int = 100
    max_agents: int = 3
    max_state_budget: int = 2_000_000

    def __post_init__(self):
        if min(self.max_vertices, self.max_agents, self.max_state_budget) <= 0:
            raise ValueError("oracle limits must be positive")


@dataclass
class OracleResult:
    plan: Plan
    makespan: float
    expanded: int


class _Node:
    __slots__ = ("pos", "times", "waiting", "arr", "goal_idx", "visit", "stamp",
                 "parent", "move")

    def __init__(self, pos, times, waiting, arr, goal_idx, visit, stamp, parent, move):
        self.pos, self.times, self.waiting, self.arr = pos, times, waiting, arr
        self.goal_idx, self.visit, self.stamp = goal_idx, visit, stamp
        self.parent, self.move = parent, move


def _connected(pos, coords, metric, limit):
    n = len(pos)
    seen = {0}
    stack = [0]
    while stack:
        i = stack.pop()
        for j in range(n):
            if j not in seen and metric(coords[pos[i]], coords[pos[j]]) <= limit + TOL:
                seen.add(j)
                stack.append(j)
    return len(seen) == n


def optimal_plan(scenario, limits: OracleLimits = OracleLimits(),
                 upper_bound: float | None = None) -> OracleResult:
    """Minimal-makespan plan, or PlanningError("oracle budget exceeded").

    ``upper_bound`` (a known feasible makespan) prunes states whose clock
    already exceeds it.
    """
    graph = scenario.graph
    n = scenario.n_agents
    if graph.n_vertices > limits.max_vertices or n > limits.max_agents:
        raise PlanningError("instance too large for the oracle",
                            f"{graph.n_vertices} vertices, {n} agents")
    goals = scenario.goals
    m = len(goals)
    coords = graph.coords.tolist()
    metric, limit = scenario.comm.metric, scenario.comm.limit
    adj = [graph.out_edges(v) for v in range(graph.n_vertices)]
    conn_cache = {}

    def connected(pos):
        c = conn_cache.get(pos)
        if c is None:
            c = conn_cache[pos] = _connected(pos, coords, metric, limit)
        return c

    def credit(node):
        # goals reached by agents whose arrival is not later than the clock
        clock = min(node.times)
        j, visit = node.goal_idx, node.visit
        while j < m:
            ts = [node.arr[a] for a in range(n) if node.pos[a] == goals[j] and node.arr[a] <= clock + TOL]
            if not ts:
                break
            visit = max(min(ts), visit)
            j += 1
        node.goal_idx, node.visit = j, visit

    def finish(node, depart):
        """Normalise waits, apply the speculation rule and credit goals."""
        times, waiting = node.times, node.waiting
        if True in waiting:
            free = [t for t, w in zip(times, waiting) if not w]
            if not free:
                return None
            lo = min(free)
            if lo > min(times) + TOL:
                times = tuple(max(t, lo) if w else t for t, w in zip(times, waiting))
                waiting = (False,) * n
        node.times, node.waiting = times, waiting
        if connected(node.pos):
            node.stamp = None
        else:
            if node.stamp is None:
                node.stamp = depart
            if min(times) > node.stamp + TOL:
                return None
        credit(node)
        return node

    pending_goals = [frozenset(goals[j:]) for j in range(m + 1)]

    def dominance_key(node):
        clock = min(node.times)
        rel = tuple(round(t - clock, DIGITS) for t in node.times)
        return (node.pos, node.waiting, rel, node.goal_idx)

    def dominance_val(node):
        pg = pending_goals[node.goal_idx]
        arr = tuple(node.arr[a] if node.pos[a] in pg else -1.0 for a in range(n))
        return (min(node.times), node.visit, arr)

    def dominated(val, seen):
        clock, visit, arr = val
        for c2, v2, a2 in seen:
            if c2 <= clock + TOL and v2 <= visit + TOL and all(x <= y + TOL for x, y in zip(a2, arr)):
                return True
        return False

    root = _Node(tuple(scenario.starts), (0.0,) * n, (False,) * n, (0.0,) * n, 0, 0.0,
                 None, None, None)
    credit(root)
    counter = itertools.count()

    def prio(node):
        return node.visit if node.goal_idx == m else min(node.times)

    heap = [(prio(root), next(counter), root)]
    table: dict = {}
    expanded = 0
    while heap:
        _, _, node = heapq.heappop(heap)
        if node.goal_idx == m:
            return OracleResult(_to_plan(scenario, node), node.visit, expanded)
        key, val = dominance_key(node), dominance_val(node)
        seen = table.setdefault(key, [])
        if dominated(val, seen):
            continue
        seen.append(val)
        expanded += 1
        if expanded > limits.max_state_budget:
            raise PlanningError("oracle budget exceeded",
                                f"{limits.max_state_budget} states expanded")
        clock = min(node.times)
        occupied = set(node.pos)
        for a in range(n):
            if node.waiting[a] or node.times[a] > clock + TOL:
                continue
            here = node.pos[a]
            for u, w in adj[here]:
                if u in occupied:
                    continue
                arr = round(clock + w, DIGITS)
                child = _Node(node.pos[:a] + (u,) + node.pos[a + 1:],
                              node.times[:a] + (arr,) + node.times[a + 1:],
                              node.waiting, node.arr[:a] + (arr,) + node.arr[a + 1:],
                              node.goal_idx, node.visit, node.stamp, node,
                              (a, TimedAction.move(here, u, clock, arr)))
                if finish(child, clock) is not None:
                    p = prio(child)
                    if upper_bound is None or p <= upper_bound + TOL:
                        heapq.heappush(heap, (p, next(counter), child))
            child = _Node(node.pos, node.times, node.waiting[:a] + (True,) + node.waiting[a + 1:],
                          node.arr, node.goal_idx, node.visit, node.stamp, node, None)
            if finish(child, clock) is not None:
                p = prio(child)
                if upper_bound is None or p <= upper_bound + TOL:
                    heapq.heappush(heap, (p, next(counter), child))
    raise PlanningError("no plan exists within budget", "search space exhausted")


def _to_plan(scenario, node) -> Plan:
    moves = [[] for _ in range(scenario.n_agents)]
    while node is not None:
        if node.move is not None:
            a, mv = node.move
            moves[a].append(mv)
        node = node.parent
    for mv in moves:
        mv.reverse()
    return plan_from_moves(scenario.starts, moves, None, scenario.digest())
