import csv
import io
import json
import os

import pytest

from ccpp.bench import (STEP_COLUMNS, BenchRecord, aggregate, aggregate_to_csv, load_suite,
                        records_to_csv, run_suite)
from ccpp.cli import main

MAP = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "scenarios", "room12.map")


def suite(**kw):
    s = {"maps": [os.path.abspath(MAP)], "agents": [1, 2], "comm_limits": [4], "seeds": [0, 1],
         "start_center": [2, 2], "goals": [[10, 2], [10, 10], [2, 10]], "timeout": 30}
    s.update(kw)
    return s


def test_record_count_and_baseline():
    recs = run_suite(suite())
    solves = [r for r in recs if r.kind == "solve"]
    base = [r for r in recs if r.kind == "baseline"]
    assert len(solves) == 4 and len(base) == 1
    # the single-agent runs start at random vertices, the baseline at the centre
    assert all(r.outcome == "success" for r in solves)
    assert base[0].makespan > 0 and base[0].agents == 1


def test_records_are_consistent():
    for r in run_suite(suite()):
        if r.kind != "solve":
            continue
        steps = [getattr(r, c) for c in STEP_COLUMNS]
        assert min(steps) >= 0.0
        assert sum(steps) <= r.t_total + 1e-6
        assert (r.makespan is not None) == (r.outcome == "success")


def test_tiny_timeout():
    recs = run_suite(suite(agents=[3], seeds=[0], timeout=0.001))
    assert recs[0].outcome == "timeout" and recs[0].makespan is None


def test_failures_recorded_not_raised():
    recs = run_suite(suite(agents=[2], comm_limits=[0.5], seeds=[0]))
    assert recs[0].outcome == "failure" and recs[0].category


def test_failure_percentage():
    mk = lambda out: BenchRecord("i", "solve", "m", 1.0, 2, 4.0, 0, out, "",
                                 1.0 if out == "success" else None)
    rows = aggregate([mk("success"), mk("failure"), mk("timeout"), mk("success")])
    assert rows[0]["runs"] == 4 and rows[0]["failures"] == 2 and rows[0]["failure_pct"] == 50.0
    table = list(csv.reader(io.StringIO(aggregate_to_csv(rows))))
    assert table[0][5] == "failure_pct" and table[1][5] == "50.0"


def test_omit_timing_csv():
    recs = run_suite(suite(agents=[2], seeds=[0]))
    full = list(csv.reader(io.StringIO(records_to_csv(recs))))
    bare = list(csv.reader(io.StringIO(records_to_csv(recs, omit_timing=True))))
    assert "t_total" in full[0] and not any(c.startswith("t_") for c in bare[0])
    assert records_to_csv(recs, omit_timing=True) == records_to_csv(run_suite(suite(agents=[2], seeds=[0])), omit_timing=True)


def test_cli_bench(tmp_path, capsys):
    path = tmp_path / "suite.json"
    path.write_text(json.dumps(suite()))
    code = main(["bench", str(path), "-o", str(tmp_path / "r.csv"), "--summary",
                 str(tmp_path / "a.csv"), "--omit-timing"])
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert len(rows) == 5 and rows[-1]["kind"] == "baseline"
    agg = list(csv.DictReader(open(tmp_path / "a.csv")))
    assert [r["agents"] for r in agg] == ["1", "2"]
    assert load_suite(path)["_base_dir"] == str(tmp_path)


def test_cli_bench_bad_suite(tmp_path, capsys):
    path = tmp_path / "suite.json"
    path.write_text(json.dumps({"maps": ["nowhere.map"]}))
    assert main(["bench", str(path)]) == 2
