import json
import math

import pytest

from ccpp.comms import CommConfig
from ccpp.maps import build_graph, grid_from_rows
from ccpp.plan import (GoalOrderError, Plan, PlanFormatError, TimedAction, dumps_plan,
                       goal_visit_times, load_plan, makespan, plan_from_dict, plan_from_moves,
                       plan_to_dict, validate_plan)
from ccpp.scenario import Scenario

M, W = TimedAction.move, TimedAction.wait


def row_scenario(n=6, starts=((0, 0), (1, 0)), goals=((4, 0),), lam=2.0, rows=None):
    rows = rows or ["." * n]
    grid = grid_from_rows(rows)
    g, cells = build_graph(grid)
    return Scenario(g, tuple(cells[s] for s in starts), tuple(cells[x] for x in goals),
                    CommConfig(lam), grid=grid, cells=cells), cells


def walk(cells, path, t0=0.0):
    out, t = [], t0
    for a, b in zip(path, path[1:]):
        out.append(M(cells[a], cells[b], t, t + 1.0))
        t += 1.0
    return out


def test_trailing_plan_is_valid():
    sc, c = row_scenario()
    plan = Plan([walk(c, [(0, 0), (1, 0), (2, 0), (3, 0)]),
                 walk(c, [(1, 0), (2, 0), (3, 0), (4, 0)])])
    # the leader moves first in each step so the follower never enters an occupied vertex
    plan.actions[0] = [M(a.frm, a.to, a.depart + 0.5, a.arrive + 0.5) for a in plan.actions[0]]
    plan.actions[0].insert(0, W(c[(0, 0)], 0.0, 0.5))
    rep = validate_plan(sc, plan)
    assert rep.ok, rep.violations
    assert rep.makespan == 3.0


def test_collision_reported_once_per_stretch():
    sc, c = row_scenario(starts=((0, 0), (2, 0)), goals=((1, 0),))
    plan = Plan([[M(c[(0, 0)], c[(1, 0)], 0.0, 1.0), W(c[(1, 0)], 1.0, 3.0)],
                 [M(c[(2, 0)], c[(1, 0)], 0.0, 1.0), W(c[(1, 0)], 1.0, 3.0)]])
    rep = validate_plan(sc, plan)
    col = [v for v in rep.violations if v.kind == "collision"]
    assert len(col) == 1 and col[0].time == 0.0 and col[0].agents == (0, 1)


def test_communication_violation_time_and_agents():
    sc, c = row_scenario(n=8, starts=((0, 0), (1, 0)), goals=((5, 0),), lam=2.0)
    plan = Plan([[W(c[(0, 0)], 0.0, 5.0)], walk(c, [(1, 0), (2, 0), (3, 0), (4, 0), (5, 0)])])
    rep = validate_plan(sc, plan)
    com = [v for v in rep.violations if v.kind == "communication"]
    # distance hits 3 when agent 1 departs toward (3, 0) at t=1
    assert len(com) == 1 and com[0].time == 1.0
    assert com[0].agents in ((0,), (1,))
    assert rep.makespan is None


def test_range_boundary_is_inclusive():
    sc, c = row_scenario(starts=((0, 0), (2, 0)), goals=((2, 0),), lam=2.0)
    assert validate_plan(sc, Plan([[], []])).ok


def test_continuity_errors():
    sc, c = row_scenario()
    jump = Plan([[M(c[(2, 0)], c[(3, 0)], 0.0, 1.0)], walk(c, [(1, 0), (2, 0)])])
    assert "continuity" in validate_plan(sc, jump).kinds()
    gap = Plan([[W(c[(0, 0)], 0.0, 1.0)], [M(c[(1, 0)], c[(2, 0)], 0.5, 1.5)]])
    assert "continuity" in validate_plan(sc, gap).kinds()
    slow = Plan([[], [M(c[(1, 0)], c[(2, 0)], 0.0, 2.0)]])
    assert "continuity" in validate_plan(sc, slow).kinds()
    short = Plan([[]])
    assert "continuity" in validate_plan(sc, short).kinds()


def test_edge_existence():
    sc, c = row_scenario(rows=["...", ".@.", "..."], starts=((0, 0), (1, 0)), goals=((2, 2),))
    # the corner cut past the obstacle is not an edge
    bad = Plan([[], [M(c[(1, 0)], c[(2, 2)], 0.0, math.sqrt(5))]])
    assert "edge-existence" in validate_plan(sc, bad).kinds()


def test_goal_order_and_repeats():
    sc, c = row_scenario(n=6, starts=((2, 0), (3, 0)), goals=((4, 0), (1, 0), (4, 0)), lam=5.0)
    # agent 1 is at (4,0) from t=1, agent 0 reaches (1,0) at t=1 and then (4,0) is still occupied
    plan = Plan([walk(c, [(2, 0), (1, 0)], 1.0), walk(c, [(3, 0), (4, 0)])])
    plan.actions[0].insert(0, W(c[(2, 0)], 0.0, 1.0))
    assert goal_visit_times(sc, plan) == [1.0, 2.0, 2.0]
    assert makespan(sc, plan) == 2.0
    # the last visit must not precede the second
    sc2, c2 = row_scenario(n=6, starts=((2, 0), (3, 0)), goals=((4, 0), (0, 0)), lam=5.0)
    with pytest.raises(GoalOrderError):
        goal_visit_times(sc2, plan)
    assert "goal-order" in validate_plan(sc2, plan).kinds()


def test_goal_at_start_visited_at_zero():
    sc, c = row_scenario(goals=((1, 0),))
    assert goal_visit_times(sc, Plan([[], []])) == [0.0]


def test_makespan_ignores_trailing_motion():
    sc, c = row_scenario(goals=((2, 0),))
    plan = Plan([walk(c, [(0, 0), (1, 0)], 1.0), walk(c, [(1, 0), (2, 0), (3, 0)])])
    plan.actions[0].insert(0, W(c[(0, 0)], 0.0, 1.0))
    rep = validate_plan(sc, plan)
    assert rep.ok and rep.makespan == 1.0 and plan.end_time() == 2.0


def test_plan_from_moves_fills_waits():
    sc, c = row_scenario()
    p = plan_from_moves(sc.starts, [[M(c[(0, 0)], c[(1, 0)], 2.0, 3.0)], []], end_times=[3.0, 3.0])
    assert [a.kind for a in p.actions[0]] == ["wait", "move"]
    assert p.actions[1] == [W(c[(1, 0)], 0.0, 3.0)]


def test_serialization_round_trip(tmp_path):
    sc, c = row_scenario(rows=["....", "....", "...."], starts=((0, 0), (1, 1)), goals=((3, 2),))
    plan = Plan([[M(c[(0, 0)], c[(1, 0)], 0.0, 1.0)],
                 [M(c[(1, 1)], c[(2, 2)], 0.0, 1.4)]])
    text = dumps_plan(plan, sc, 1.5)
    path = tmp_path / "p.json"
    path.write_text(text)
    back = load_plan(path, sc)
    assert [[a.kind, a.frm, a.to] for acts in back.actions for a in acts] == \
        [[a.kind, a.frm, a.to] for acts in plan.actions for a in acts]
    for x, y in zip(back.actions[1], plan.actions[1]):
        assert x.arrive == pytest.approx(y.arrive, abs=1e-9)
    assert dumps_plan(back, sc, 1.5) == text
    doc = json.loads(text)
    assert doc["scenario"] == sc.digest() and doc["agents"][0]["actions"][0]["from"] == [0, 0]


def test_format_errors():
    sc, c = row_scenario()
    with pytest.raises(PlanFormatError):
        plan_from_dict({"format": "other"}, sc)
    doc = plan_to_dict(Plan([[], [M(c[(1, 0)], c[(2, 0)], 0.0, 1.0)]]), sc)
    doc["agents"][1]["actions"][0]["to"] = [40, 40]
    with pytest.raises(PlanFormatError):
        plan_from_dict(doc, sc)
    del doc["agents"][1]["actions"][0]["depart"]
    with pytest.raises(PlanFormatError):
        plan_from_dict(doc, sc)
