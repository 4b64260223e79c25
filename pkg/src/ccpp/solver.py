"""End-to-end pipeline: feasibility check, both planning stages, timing."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from .comms import CommIndex
from .errors import PlanningError
from .plan import Plan, makespan
from .scenario import Scenario, require_valid
from .stage1 import STEP_NAMES, Stage1Output, run_stage1
from .stage2 import DEFAULT_NODE_BUDGET, run_stage2

ALL_STEPS = STEP_NAMES + ("heuristic_build", "stage2_search")
STAGE1_STEPS = STEP_NAMES


@dataclass
class SolveResult:
    plan: Plan
    makespan: float
    stage1: Stage1Output
    timings: dict = field(default_factory=dict)

    @property
    def stage1_time(self) -> float:
        return sum(self.timings[k] for k in STAGE1_STEPS)

    @property
    def total_time(self) -> float:
        return sum(self.timings.values())


def solve(scenario: Scenario, node_budget: int = DEFAULT_NODE_BUDGET,
          timeout: float | None = None, trace=None) -> SolveResult:
    """Plan for ``scenario``. Raises ScenarioError or PlanningError on failure.

    ``timeout`` (seconds) bounds the second stage's wall time; the first stage
    is checked against it between the two stages.
    """
    require_valid(scenario)
    t_start = time.perf_counter()
    deadline = t_start + timeout if timeout is not None else None
    comm_index = CommIndex(scenario.graph, scenario.comm)
    s1 = run_stage1(scenario, comm_index)
    if deadline is not None and time.perf_counter() > deadline:
        raise PlanningError("timeout", "wall-clock limit reached in the first stage")
    timings = dict(s1.timings)
    plan = run_stage2(s1, scenario, node_budget, deadline, trace, timings)
    for k in ALL_STEPS:
        timings.setdefault(k, 0.0)
    return SolveResult(plan, makespan(scenario, plan), s1, timings)
