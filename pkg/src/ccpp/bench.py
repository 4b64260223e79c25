"""Benchmark suites: instance generation, timed solves, CSV records, aggregates."""
from __future__ import annotations

import csv
import io
import json
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import PlanningError
from .graph import multi_source_dijkstra
from .scenario import DEFAULT_ALPHA, ScenarioError, scenario_from_dict
from .solver import ALL_STEPS, STAGE1_STEPS, solve

STEP_COLUMNS = tuple(f"t_{s}" for s in ALL_STEPS)


@dataclass
class BenchRecord:
    instance: str
    kind: str                  # "solve" or "baseline"
    map: str
    scale: float
    agents: int
    comm_limit: float
    seed: int
    outcome: str               # success / failure / timeout
    category: str
    makespan: float | None
    t_leader_selection: float = 0.0
    t_ordering: float = 0.0
    t_leader_plan: float = 0.0
    t_follower_plan: float = 0.0
    t_backward_validation: float = 0.0
    t_heuristic_build: float = 0.0
    t_stage2_search: float = 0.0
    t_total: float = 0.0

    @property
    def stage1_time(self) -> float:
        return sum(getattr(self, f"t_{s}") for s in STAGE1_STEPS)

    @property
    def stage1_fraction(self) -> float | None:
        steps = sum(getattr(self, c) for c in STEP_COLUMNS)
        return self.stage1_time / steps if steps > 0 else None


def load_suite(path) -> dict:
    with open(path) as fh:
        suite = json.load(fh)
    suite["_base_dir"] = os.path.dirname(os.path.abspath(path))
    return suite


def _outcome(exc: PlanningError) -> str:
    return "timeout" if "timeout" in exc.category else "failure"


def instance_documents(suite: dict):
    """Scenario documents of the suite's cross product, in a fixed order.

    Seeds drive the random start placement around the fixed start centre.
    """
    maps = suite["maps"] if "maps" in suite else [suite["map"]]
    for mp in maps:
        for scale in suite.get("scales", [1.0]):
            for n in suite["agents"]:
                for lam in suite["comm_limits"]:
                    for seed in suite["seeds"]:
                        doc = {"map": mp, "scale": scale, "agents": n, "comm_limit": lam,
                               "seed": seed, "start_center": suite["start_center"],
                               "goals": suite["goals"],
                               "order_goals": suite.get("order_goals", True),
                               "alpha": suite.get("alpha", DEFAULT_ALPHA)}
                        iid = f"{os.path.basename(mp)}|s{scale}|n{n}|l{lam}|r{seed}"
                        yield iid, doc


def run_instance(iid, doc, base_dir, timeout=None, node_budget=None) -> BenchRecord:
    rec = BenchRecord(iid, "solve", os.path.basename(doc["map"]), float(doc["scale"]),
                      int(doc["agents"]), float(doc["comm_limit"]), int(doc["seed"]),
                      "failure", "", None)
    t0 = time.perf_counter()
    try:
        sc = scenario_from_dict(doc, base_dir)
        kwargs = {"timeout": timeout}
        if node_budget is not None:
            kwargs["node_budget"] = node_budget
        res = solve(sc, **kwargs)
    except (PlanningError, ScenarioError) as exc:
        rec.t_total = time.perf_counter() - t0
        rec.outcome = _outcome(exc) if isinstance(exc, PlanningError) else "failure"
        rec.category = exc.category
        return rec
    rec.t_total = time.perf_counter() - t0
    rec.outcome = "success"
    rec.makespan = round(res.makespan, 9)
    for s in ALL_STEPS:
        setattr(rec, f"t_{s}", res.timings[s])
    return rec


def baseline_record(doc, base_dir) -> BenchRecord:
    """Single agent from the start centre along the goal tour."""
    one = dict(doc, agents=1, seed=0)
    sc = scenario_from_dict(one, base_dir)
    tour = (sc.depot,) + sc.goals
    length = 0.0
    for a, b in zip(tour, tour[1:]):
        length += multi_source_dijkstra(sc.graph, [(a, 0.0)], targets=[b])[b]
    iid = f"{os.path.basename(doc['map'])}|s{doc['scale']}|baseline"
    return BenchRecord(iid, "baseline", os.path.basename(doc["map"]), float(doc["scale"]), 1,
                       float("inf"), 0, "success", "", round(length, 9))


def _run(args):
    return run_instance(*args)


def run_suite(suite: dict, jobs: int = 1) -> list[BenchRecord]:
    base = suite.get("_base_dir", ".")
    timeout = suite.get("timeout")
    budget = suite.get("node_budget")
    docs = list(instance_documents(suite))
    tasks = [(iid, doc, base, timeout, budget) for iid, doc in docs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run, tasks))
    else:
        records = [_run(t) for t in tasks]
    seen = set()
    for _, doc in docs:
        k = (doc["map"], doc["scale"])
        if k not in seen:
            seen.add(k)
            records.append(baseline_record(doc, base))
    return records


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 9)) if np.isfinite(v) else "inf"
    return str(v)


def records_to_csv(records, omit_timing: bool = False) -> str:
    cols = [f.name for f in fields(BenchRecord)]
    if omit_timing:
        cols = [c for c in cols if not c.startswith("t_")]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in records:
        d = asdict(r)
        w.writerow([_fmt(d[c]) for c in cols])
    return buf.getvalue()


def aggregate(records) -> list[dict]:
    """Per (agents, comm limit, scale) group: counts, failure %, medians."""
    groups: dict = {}
    for r in records:
        if r.kind != "solve":
            continue
        groups.setdefault((r.agents, r.comm_limit, r.scale), []).append(r)
    rows = []
    for (n, lam, scale), rs in sorted(groups.items()):
        ok = [r for r in rs if r.outcome == "success"]
        fr = [r.stage1_fraction for r in ok if r.stage1_fraction is not None]
        rows.append({
            "agents": n, "comm_limit": lam, "scale": scale, "runs": len(rs),
            "failures": len(rs) - len(ok),
            "failure_pct": round(100.0 * (len(rs) - len(ok)) / len(rs), 3),
            "median_makespan": round(statistics.median(r.makespan for r in ok), 9) if ok else None,
            "median_stage1_fraction": round(statistics.median(fr), 6) if fr else None,
        })
    return rows


def aggregate_to_csv(rows) -> str:
    buf = io.StringIO()
    cols = ["agents", "comm_limit", "scale", "runs", "failures", "failure_pct",
            "median_makespan", "median_stage1_fraction"]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in cols])
    return buf.getvalue()
