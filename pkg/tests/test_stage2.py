from types import SimpleNamespace

import numpy as np
import pytest

from ccpp.comms import CommConfig
from ccpp.errors import PlanningError
from ccpp.graph import INF, multi_source_dijkstra, shortest_distance
from ccpp.maps import build_graph, grid_from_rows
from ccpp.plan import validate_plan
from ccpp.scenario import Scenario
from ccpp.solver import solve
from ccpp.stage1 import AgentSearch, run_stage1
from ccpp.stage2 import (CompositeState, HeuristicField, RangeCheck, build_heuristic,
                         check_speculative, expand, heuristic_value, make_context,
                         normalize_waits, run_epoch_search, run_stage2)


def open_grid(w, h):
    return build_graph(grid_from_rows(["." * w] * h))


def fake_epoch(g, leader, goal, results, opened=None):
    searches = {}
    for a, res in enumerate(results):
        cost = np.full(g.n_vertices, INF)
        ov = opened[a] if opened is not None else range(g.n_vertices)
        cost[list(ov)] = 0.0
        searches[a] = AgentSearch(a, cost, np.full(g.n_vertices, -1), {}, {v: 0.0 for v in res})
    return SimpleNamespace(leader=leader, goal=goal, searches=searches, index=0)


# -- heuristic ----------------------------------------------------------------

def test_field_single_result_is_reverse_distance():
    g, cells = open_grid(6, 6)
    goal = cells[(4, 4)]
    f = build_heuristic(g, fake_epoch(g, 0, goal, [[goal]]), 1.5)
    ref = multi_source_dijkstra(g.reversed, [(goal, 0.0)]).cost
    assert np.allclose(f.inner[0], ref)


def test_field_sentinel_outside_opened():
    g, cells = open_grid(6, 6)
    goal = cells[(0, 0)]
    opened = [[cells[(x, 0)] for x in range(6)]]
    f = build_heuristic(g, fake_epoch(g, 0, goal, [[goal]], opened), 1.5)
    far = cells[(5, 5)]
    assert np.isinf(f.inner[0, far])
    assert f.term(0, far) >= f.sentinel
    finite = [f.term(0, v) for v in opened[0]]
    assert max(finite) < f.sentinel


def test_field_multi_result_pointwise_min():
    g, cells = open_grid(7, 7)
    res = [cells[(0, 0)], cells[(6, 3)], cells[(2, 6)]]
    f = build_heuristic(g, fake_epoch(g, 0, res[0], [res]), 1.5)
    ref = np.min([multi_source_dijkstra(g.reversed, [(r, 0.0)]).cost for r in res], axis=0)
    assert np.allclose(f.inner[0], ref)


def test_heuristic_value_examples():
    g, cells = open_grid(8, 1)
    inner = np.array([[2.0] * 8, [3.0] * 8])
    f = HeuristicField(inner, inner.copy(), 1e6, 1.5)
    st = CompositeState((0, 1), (0.0, 0.0))
    assert heuristic_value(f, st) == pytest.approx(2 ** 1.5 + 3 ** 1.5)
    assert heuristic_value(f, st) == pytest.approx(8.0245, abs=1e-4)


def test_heuristic_zero_iff_on_results():
    g, cells = open_grid(6, 6)
    res = [[cells[(1, 1)]], [cells[(4, 4)], cells[(5, 5)]]]
    f = build_heuristic(g, fake_epoch(g, 0, res[0][0], res), 1.5)
    for p0 in range(g.n_vertices):
        for p1 in (cells[(4, 4)], cells[(0, 3)]):
            if p0 == p1:
                continue
            h = heuristic_value(f, CompositeState((p0, p1), (0.0, 0.0)))
            on = p0 in res[0] and p1 in res[1]
            assert (h == 0) == on


def test_sentinel_ranks_after_finite():
    g, cells = open_grid(5, 5)
    opened = [[cells[(x, 0)] for x in range(5)], list(range(g.n_vertices))]
    ep = fake_epoch(g, 0, cells[(0, 0)], [[cells[(0, 0)]], [cells[(4, 4)]]], opened)
    f = build_heuristic(g, ep, 1.5)
    worst_finite = max(heuristic_value(f, CompositeState((a, b), (0, 0)))
                       for a in opened[0] for b in range(g.n_vertices) if a != b)
    sentinel_state = heuristic_value(f, CompositeState((cells[(2, 2)], cells[(4, 4)]), (0, 0)))
    assert sentinel_state > worst_finite


# -- expansion ------------------------------------------------------------------

def ctx_for(g, leader, goal, comm, results=None, release=0.0):
    n = len(results)
    ep = fake_epoch(g, leader, goal, results)
    f = build_heuristic(g, ep, 1.5, n)
    ctx = make_context(g, ep, f, RangeCheck(g, comm), restrict_leader=False)
    ctx.release = release
    return ctx


def test_expand_corner_agent_counts():
    g, cells = open_grid(6, 6)
    ctx = ctx_for(g, 1, cells[(5, 5)], CommConfig(20.0), [[cells[(0, 0)]], [cells[(5, 5)]]])
    st = CompositeState((cells[(0, 0)], cells[(4, 4)]), (0.0, 1.0))
    kids = expand(st, ctx)
    assert len(kids) == 4
    assert sum(k.action is None for k in kids) == 1


def test_expand_skips_occupied():
    g, cells = open_grid(6, 6)
    ctx = ctx_for(g, 1, cells[(5, 5)], CommConfig(20.0), [[cells[(0, 0)]], [cells[(5, 5)]]])
    st = CompositeState((cells[(0, 0)], cells[(1, 0)]), (0.0, 1.0))
    kids = expand(st, ctx)
    targets = {k.positions[0] for k in kids if k.action is not None}
    assert cells[(1, 0)] not in targets and len(targets) == 2
    for k in kids:
        assert len(set(k.positions)) == 2


def test_wait_at_equal_times():
    # first agent waiting hands the move to the other agent at the same clock
    assert normalize_waits((0.0, 0.0), (True, False)) == ((0.0, 0.0), (True, False))
    # once everyone waits there is no later event unless a release time exists
    assert normalize_waits((0.0, 0.0), (True, True)) is None
    assert normalize_waits((0.0, 0.0), (True, True), release=5.0) == ((5.0, 5.0), (False, False))
    # waiting agent catches up with the next event of a free agent
    assert normalize_waits((0.0, 2.4), (True, False)) == ((2.4, 2.4), (False, False))


def test_speculation_rules():
    g, cells = open_grid(10, 1)
    rc = RangeCheck(g, CommConfig(2.0))
    linked = CompositeState((cells[(0, 0)], cells[(2, 0)]), (1.0, 1.0), speculative_since=0.5)
    assert check_speculative(linked, 1.0, rc).speculative_since is None
    # agent 0 steps away at t=1 while its partner's clock is still at 1
    broken = CompositeState((cells[(0, 0)], cells[(3, 0)]), (2.0, 1.0))
    kept = check_speculative(broken, 1.0, rc)
    assert kept is not None and kept.speculative_since == 1.0
    # both clocks past the stamp and still apart
    late = CompositeState((cells[(0, 0)], cells[(3, 0)]), (2.0, 2.0), speculative_since=1.0)
    assert check_speculative(late, 2.0, rc) is None


# -- epoch search ----------------------------------------------------------------

def scenario(rows, starts, goals, lam):
    g, cells = build_graph(grid_from_rows(rows))
    return Scenario(g, tuple(cells[s] for s in starts), tuple(cells[x] for x in goals),
                    CommConfig(lam), grid=grid_from_rows(rows), cells=cells)


def test_single_agent_shortest_path():
    rows = ["........", "..@@@@..", "........", "........"]
    sc = scenario(rows, [(0, 0)], [(7, 3)], 1.0)
    s1 = run_stage1(sc)
    ep = s1.epochs[0]
    from ccpp.stage2 import make_context as mk
    f = build_heuristic(sc.graph, ep, sc.alpha, 1)
    seg = run_epoch_search(CompositeState(sc.starts, (0.0,)), mk(sc.graph, ep, f, RangeCheck(sc.graph, sc.comm)))
    assert seg.visit_time == pytest.approx(shortest_distance(sc.graph, sc.starts[0], sc.goals[0]), abs=1e-9)


def test_leader_already_at_goal_gives_empty_segment():
    sc = scenario(["....."], [(2, 0), (3, 0)], [(2, 0)], 2.0)
    s1 = run_stage1(sc)
    ep = s1.epochs[0]
    f = build_heuristic(sc.graph, ep, sc.alpha, 2)
    seg = run_epoch_search(CompositeState(sc.starts, (0.0, 0.0)),
                           make_context(sc.graph, ep, f, RangeCheck(sc.graph, sc.comm)))
    assert seg.moves == [[], []] and seg.visit_time == 0.0


def test_corridor_trailing_is_valid():
    rows = ["@@@@@@@@@@", "..........", "@@@@@@@@@@"]
    rows = ["..........", "@@@@@.@@@@", "..........", ".........."]
    sc = scenario(rows, [(4, 0), (3, 0)], [(5, 3)], 1.5)
    res = solve(sc)
    assert validate_plan(sc, res.plan).ok


def test_single_segment_and_tour_exactness():
    g, cells = open_grid(12, 12)
    goals = (cells[(10, 1)], cells[(3, 9)], cells[(11, 11)])
    sc = Scenario(g, (cells[(0, 0)],), goals, CommConfig(1.0))
    res = solve(sc)
    tour = sum(shortest_distance(g, a, b) for a, b in zip((sc.starts[0],) + goals, goals))
    assert res.makespan == pytest.approx(tour, abs=1e-9)
    one = Scenario(g, sc.starts, goals[:1], CommConfig(1.0))
    assert solve(one).makespan == pytest.approx(shortest_distance(g, sc.starts[0], goals[0]), abs=1e-9)


def test_three_agents_generous_range_beats_single_tour():
    g, cells = open_grid(14, 14)
    starts = (cells[(6, 6)], cells[(7, 6)], cells[(6, 7)])
    goals = (cells[(1, 1)], cells[(12, 12)])
    sc = Scenario(g, starts, goals, CommConfig(30.0))
    res = solve(sc)
    assert validate_plan(sc, res.plan).ok
    single = min(sum(shortest_distance(g, a, b) for a, b in zip((s,) + goals, goals)) for s in starts)
    assert res.makespan <= single + 1e-9
    # the second goal is reached by a different agent than the first
    assert res.stage1.epochs[0].leader != res.stage1.epochs[1].leader


@pytest.mark.parametrize("seed", range(12))
def test_retained_nodes_respect_speculation_and_collisions(seed):
    import instances
    sc = instances.random_scenario(seed, 12, 12, 3, 2.0, 2, density=0.15)
    seen = []
    try:
        solve(sc, node_budget=50_000, trace=lambda e, s: seen.append(s))
    except PlanningError:
        pass
    rc = RangeCheck(sc.graph, sc.comm)
    for s in seen:
        assert len(set(s.positions)) == len(s.positions)
        if not rc.connected(s.positions):
            assert s.speculative_since is not None
            assert min(s.times) <= s.speculative_since + 1e-9


def test_node_budget_exhaustion():
    import instances
    sc = instances.random_scenario(3, 20, 20, 4, 2.0, 3)
    with pytest.raises(PlanningError) as info:
        solve(sc, node_budget=5)
    assert info.value.category in ("epoch search timeout", "follower search stalled")
