"""Randomised properties of the planner and the validator."""
import pytest
from hypothesis import assume, given, settings, strategies as st

import instances
from ccpp.errors import PlanningError
from ccpp.plan import Plan, TimedAction, validate_plan
from ccpp.solver import solve
from ccpp.stage2 import normalize_waits

small = st.fixed_dictionaries({
    "seed": st.integers(0, 100_000),
    "width": st.integers(5, 12),
    "height": st.integers(5, 12),
    "n_agents": st.integers(1, 4),
    "comm_limit": st.sampled_from([1.5, 2.0, 3.0, 6.0]),
    "n_goals": st.integers(1, 3),
})


def try_solve(params):
    sc = instances.random_scenario(**params, density=0.15)
    try:
        return sc, solve(sc, node_budget=20_000)
    except PlanningError:
        return sc, None


@settings(max_examples=25)
@given(small)
def test_successes_validate(params):
    sc, res = try_solve(params)
    assume(res is not None)
    rep = validate_plan(sc, res.plan)
    assert rep.ok, rep.violations
    assert rep.makespan == pytest.approx(res.makespan, abs=1e-9)
    # epochs visit the goals in order
    assert rep.goal_visit_times == sorted(rep.goal_visit_times)


@settings(max_examples=25)
@given(small, st.integers(0, 10_000), st.sampled_from([0.2, -0.2, 1.0]))
def test_shifted_arrival_is_caught(params, pick, delta):
    sc, res = try_solve(params)
    assume(res is not None)
    moves = [(a, k) for a, acts in enumerate(res.plan.actions)
             for k, x in enumerate(acts) if x.kind == "move"]
    assume(moves)
    a, k = moves[pick % len(moves)]
    acts = [list(x) for x in res.plan.actions]
    x = acts[a][k]
    acts[a][k] = TimedAction(x.kind, x.frm, x.to, x.depart, x.arrive + delta)
    assert "continuity" in validate_plan(sc, Plan(acts)).kinds()


@given(st.lists(st.tuples(st.floats(0, 50).map(lambda t: round(t, 1)), st.booleans()),
                min_size=1, max_size=6),
       st.floats(0, 60))
def test_normalize_waits(entries, release):
    times = tuple(t for t, _ in entries)
    waiting = tuple(w for _, w in entries)
    out = normalize_waits(times, waiting, release)
    if out is None:
        assert all(waiting) and min(times) >= release - 1e-9
        return
    t2, w2 = out
    assert all(b >= a for a, b in zip(times, t2))
    # someone who is free to act holds the lowest clock
    assert any(not w and t <= min(t2) + 1e-9 for t, w in zip(t2, w2))
