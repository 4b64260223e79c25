"""Timed action plans, goal-visit bookkeeping and an independent validator.

The validator only relies on the scenario (graph, starts, goals, comm
limit) and re-derives everything else. Positions follow instant-arrival
semantics: a moving agent occupies its target from the moment it departs,
so the fleet configuration only changes at departure times. An agent is
*present* at a vertex from its arrival until its next departure (closed
interval); a goal counts as visited at such a presence.
"""
from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import NamedTuple

TIME_TOL = 1e-9
RANGE_TOL = 1e-9
KINDS = ("collision", "communication", "goal-order", "continuity", "edge-existence")


class TimedAction(NamedTuple):
    kind: str      # "move" or "wait"
    frm: int
    to: int
    depart: float
    arrive: float

    @classmethod
    def move(cls, u, v, depart, arrive):
        return cls("move", int(u), int(v), float(depart), float(arrive))

    @classmethod
    def wait(cls, v, depart, arrive):
        return cls("wait", int(v), int(v), float(depart), float(arrive))


@dataclass
class Plan:
    actions: list[list[TimedAction]]
    scenario_digest: str | None = None

    @property
    def n_agents(self) -> int:
        return len(self.actions)

    def end_time(self) -> float:
        return max((acts[-1].arrive for acts in self.actions if acts), default=0.0)


def plan_from_moves(starts, moves, end_times=None, digest=None) -> Plan:
    """Per-agent move lists to a contiguous plan; idle gaps become waits."""
    actions = []
    for a, start in enumerate(starts):
        acts, here, clock = [], start, 0.0
        for mv in moves[a]:
            if mv.depart > clock + TIME_TOL:
                acts.append(TimedAction.wait(here, clock, mv.depart))
            acts.append(mv)
            here, clock = mv.to, mv.arrive
        end = end_times[a] if end_times is not None else clock
        if end > clock + TIME_TOL:
            acts.append(TimedAction.wait(here, clock, end))
        actions.append(acts)
    return Plan(actions, digest)


class Violation(NamedTuple):
    time: float
    kind: str
    agents: tuple[int, ...]
    detail: str = ""


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    makespan: float | None = None
    goal_visit_times: list[float] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


class GoalOrderError(ValueError):
    def __init__(self, goal_index):
        self.goal_index = goal_index
        super().__init__(f"goal {goal_index} is never visited in order")


# -- timelines --------------------------------------------------------------

def _moves(acts):
    return [a for a in acts if a.kind == "move"]


def _position_timeline(start, acts):
    """(change times, vertices): the agent sits at vertices[k] from times[k]."""
    times, verts = [0.0], [start]
    for a in _moves(acts):
        times.append(a.depart)
        verts.append(a.to)
    return times, verts


def _position_at(timeline, t):
    times, verts = timeline
    k = bisect_right(times, t + TIME_TOL) - 1
    return verts[max(k, 0)]


def presence_intervals(start, acts):
    """Closed intervals ``(vertex, first, last)`` during which the agent is present."""
    out = []
    here, since = start, 0.0
    for a in _moves(acts):
        out.append((here, since, a.depart))
        here, since = a.to, a.arrive
    out.append((here, since, math.inf))
    return out


def goal_visit_times(scenario, plan: Plan) -> list[float]:
    """Visit time of each goal, in order; raises :class:`GoalOrderError`."""
    intervals = [presence_intervals(s, acts)
                 for s, acts in zip(scenario.starts, plan.actions)]
    out = []
    prev = 0.0
    for j, g in enumerate(scenario.goals):
        best = math.inf
        for ivs in intervals:
            for v, lo, hi in ivs:
                if v == g and hi >= prev - TIME_TOL:
                    best = min(best, max(lo, prev))
        if best == math.inf:
            raise GoalOrderError(j)
        out.append(best)
        prev = best
    return out


def makespan(scenario, plan: Plan) -> float:
    """Time of the final goal visit (motion afterwards does not count)."""
    return goal_visit_times(scenario, plan)[-1]


# -- validator --------------------------------------------------------------

def _groups(positions, coords, metric, limit):
    """Connected groups of agents via breadth-first search over the range relation."""
    n = len(positions)
    seen = [False] * n
    groups = []
    for s in range(n):
        if seen[s]:
            continue
        seen[s] = True
        comp, queue = [s], [s]
        while queue:
            i = queue.pop()
            for j in range(n):
                if not seen[j] and metric(coords[positions[i]], coords[positions[j]]) <= limit + RANGE_TOL:
                    seen[j] = True
                    comp.append(j)
                    queue.append(j)
        groups.append(sorted(comp))
    return groups


def _edge_weight(graph, u, v):
    lo, hi = graph.indptr[u], graph.indptr[u + 1]
    for k in range(lo, hi):
        if graph.indices[k] == v:
            return float(graph.weights[k])
    return None


def validate_plan(scenario, plan: Plan) -> ValidationReport:
    """Re-check every constraint of the problem and report all violations."""
    rep = ValidationReport()
    graph = scenario.graph
    n = len(scenario.starts)
    bad = rep.violations.append
    if plan.n_agents != n:
        bad(Violation(0.0, "continuity", tuple(range(max(n, plan.n_agents))),
                      f"plan has {plan.n_agents} agents, scenario {n}"))
        return rep

    # per-agent structure
    for i, acts in enumerate(plan.actions):
        here, clock = scenario.starts[i], 0.0
        for a in acts:
            if a.frm != here:
                where = "its start" if here == scenario.starts[i] and clock == 0.0 else str(here)
                bad(Violation(a.depart, "continuity", (i,),
                              f"departs from {a.frm}, agent is at {where}"))
            if abs(a.depart - clock) > TIME_TOL:
                bad(Violation(a.depart, "continuity", (i,),
                              f"departs at {a.depart}, previous action ends at {clock}"))
            if a.arrive < a.depart - TIME_TOL:
                bad(Violation(a.depart, "continuity", (i,), "arrives before departing"))
            if a.kind == "wait":
                if a.to != a.frm:
                    bad(Violation(a.depart, "continuity", (i,), "wait changes vertex"))
            elif a.kind == "move":
                w = _edge_weight(graph, a.frm, a.to)
                if w is None:
                    bad(Violation(a.depart, "edge-existence", (i,),
                                  f"no edge {a.frm}->{a.to}"))
                elif abs((a.arrive - a.depart) - w) > TIME_TOL:
                    bad(Violation(a.depart, "continuity", (i,),
                                  f"move takes {a.arrive - a.depart}, edge weight {w}"))
            else:
                bad(Violation(a.depart, "continuity", (i,), f"unknown action {a.kind!r}"))
            here, clock = a.to, a.arrive

    # configurations at every event time
    timelines = [_position_timeline(s, acts) for s, acts in zip(scenario.starts, plan.actions)]
    events = sorted({0.0} | {t for acts in plan.actions for a in acts
                             for t in (a.depart, a.arrive)})
    coords = graph.coords.tolist()
    metric, limit = scenario.comm.metric, scenario.comm.limit
    active = set()
    for t in events:
        pos = [_position_at(tl, t) for tl in timelines]
        found = {}
        owner = {}
        for i, v in enumerate(pos):
            if v in owner:
                found[("collision", (owner[v], i))] = f"vertex {v}"
            else:
                owner[v] = i
        parts = _groups(pos, coords, metric, limit)
        if len(parts) > 1:
            main = max(parts, key=len)
            cut = tuple(sorted(a for p in parts if p is not main for a in p))
            found[("communication", cut)] = f"{len(parts)} groups"
        # one report per contiguous stretch of the same violation
        for (kind, agents), detail in found.items():
            if (kind, agents) not in active:
                bad(Violation(t, kind, agents, detail))
        active = set(found)

    try:
        rep.goal_visit_times = goal_visit_times(scenario, plan)
    except GoalOrderError as exc:
        bad(Violation(math.inf, "goal-order", (), str(exc)))
    if rep.ok:
        rep.makespan = rep.goal_visit_times[-1]
    return rep


# -- serialisation ----------------------------------------------------------

class PlanFormatError(ValueError):
    pass


def plan_to_dict(plan: Plan, scenario, makespan_value=None) -> dict:
    label = scenario.vertex_label
    agents = []
    for i, acts in enumerate(plan.actions):
        agents.append({"agent": i, "actions": [
            {"kind": a.kind, "from": label(a.frm), "to": label(a.to),
             "depart": round(a.depart, 9), "arrive": round(a.arrive, 9)} for a in acts]})
    return {"format": "ccpp-plan", "version": 1, "scenario": scenario.digest(),
            "makespan": None if makespan_value is None else round(makespan_value, 9),
            "agents": agents}


def dumps_plan(plan: Plan, scenario, makespan_value=None) -> str:
    return json.dumps(plan_to_dict(plan, scenario, makespan_value), indent=1) + "\n"


def plan_from_dict(data: dict, scenario) -> Plan:
    if data.get("format") != "ccpp-plan":
        raise PlanFormatError("not a plan document")
    lookup = scenario.vertex_by_label
    try:
        actions = []
        for entry in sorted(data["agents"], key=lambda e: e["agent"]):
            acts = []
            for a in entry["actions"]:
                try:
                    u = lookup[tuple(a["from"])]
                    v = lookup[tuple(a["to"])]
                except KeyError as exc:
                    raise PlanFormatError(f"cell {list(exc.args[0])} is not a vertex") from None
                acts.append(TimedAction(a["kind"], u, v, float(a["depart"]), float(a["arrive"])))
            actions.append(acts)
    except (KeyError, TypeError) as exc:
        raise PlanFormatError(f"malformed plan: {exc}") from None
    return Plan(actions, data.get("scenario"))


def load_plan(path, scenario) -> Plan:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PlanFormatError(f"bad JSON: {exc}") from None
    return plan_from_dict(data, scenario)
