"""Command-line front end: ``ccpp solve|validate|bench|render``.

Exit codes: 0 ok, 1 plan invalid, 2 unreadable or infeasible input,
3 planning failure, 4 timeout. Every flag can also be set through an
environment variable ``CCPP_<FLAG>`` (upper case, dashes as underscores);
an explicit flag wins.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .bench import aggregate, aggregate_to_csv, load_suite, records_to_csv, run_suite
from .errors import PlanningError
from .maps import MapParseError
from .plan import PlanFormatError, dumps_plan, load_plan, validate_plan
from .render import RenderError, render_plan, render_stage1
from .scenario import ScenarioError, scenario_from_dict
from .solver import solve
from .stage1 import stage1_to_dict
from .stage2 import DEFAULT_NODE_BUDGET

ENV_PREFIX = "CCPP_"
EXIT_OK, EXIT_INVALID, EXIT_INPUT, EXIT_PLANNING, EXIT_TIMEOUT = 0, 1, 2, 3, 4

INPUT_ERRORS = (ScenarioError, MapParseError, PlanFormatError, OSError, ValueError)


def _env(name, cast=str):
    raw = os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))
    if raw is None or raw == "":
        return None
    return cast(raw)


def _opt(parser, flag, cast=str, help=None, default=None):
    """Flag whose default comes from the environment."""
    name = flag.lstrip("-")
    env = _env(name, cast)
    parser.add_argument(flag, type=cast, default=env if env is not None else default, help=help)


def _fail(category, detail="", code=EXIT_INPUT, **extra):
    out = {"status": "error", "category": category, "detail": detail, **extra}
    print(json.dumps(out, sort_keys=True))
    return code


def _read_json(path):
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError("invalid input", f"{path}: bad JSON: {exc}") from None


def _scenario(path, overrides=None):
    doc = _read_json(path)
    base = os.path.dirname(os.path.abspath(path))
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k == "map":
            doc.pop("map_text", None)
            v = os.path.abspath(v)
        if k in ("agents", "seed") and "start_center" in doc:
            doc.pop("starts", None)
        doc[k] = v
    return scenario_from_dict(doc, base)


def cmd_solve(args) -> int:
    over = {"map": args.map, "scale": args.scale, "comm_limit": args.comm_limit,
            "alpha": args.alpha, "agents": args.agents, "seed": args.seed}
    try:
        sc = _scenario(args.scenario, over)
    except INPUT_ERRORS as exc:
        return _fail(getattr(exc, "category", "invalid input"), str(exc),
                     agents=list(getattr(exc, "agents", ())))
    try:
        res = solve(sc, node_budget=args.node_budget, timeout=args.timeout)
    except ScenarioError as exc:
        return _fail(exc.category, str(exc), agents=list(exc.agents))
    except PlanningError as exc:
        code = EXIT_TIMEOUT if "timeout" in exc.category else EXIT_PLANNING
        return _fail(exc.category, exc.detail, code, epoch=exc.epoch)
    text = dumps_plan(res.plan, sc, res.makespan)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    if args.stage1_dump:
        with open(args.stage1_dump, "w") as fh:
            json.dump(stage1_to_dict(res.stage1, sc), fh, indent=1)
            fh.write("\n")
    summary = {"status": "ok", "makespan": round(res.makespan, 9), "plan": args.output,
               "timings": {k: round(v, 6) for k, v in res.timings.items()}}
    print(json.dumps(summary, sort_keys=True))
    if not args.output:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        sc = _scenario(args.scenario)
        plan = load_plan(args.plan, sc)
    except INPUT_ERRORS as exc:
        return _fail(getattr(exc, "category", "parse error"), str(exc))
    rep = validate_plan(sc, plan)
    out = {"status": "ok" if rep.ok else "invalid",
           "scenario_match": plan.scenario_digest in (None, sc.digest()),
           "makespan": None if rep.makespan is None else round(rep.makespan, 9),
           "violations": [{"time": v.time, "kind": v.kind, "agents": list(v.agents),
                           "detail": v.detail} for v in rep.violations]}
    print(json.dumps(out, sort_keys=True, indent=1))
    return EXIT_OK if rep.ok else EXIT_INVALID


def cmd_bench(args) -> int:
    try:
        suite = load_suite(args.suite)
    except (OSError, ValueError) as exc:
        return _fail("invalid suite", str(exc))
    if args.timeout is not None:
        suite["timeout"] = args.timeout
    if args.node_budget is not None:
        suite["node_budget"] = args.node_budget
    try:
        records = run_suite(suite, jobs=args.jobs)
    except (KeyError, ScenarioError, MapParseError, OSError) as exc:
        return _fail("invalid suite", str(exc))
    table = records_to_csv(records, omit_timing=args.omit_timing)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(table)
    else:
        sys.stdout.write(table)
    if args.summary:
        with open(args.summary, "w") as fh:
            fh.write(aggregate_to_csv(aggregate(records)))
    return EXIT_OK


def cmd_render(args) -> int:
    if (args.plan is None) == (args.stage1 is None):
        return _fail("invalid input", "give exactly one of --plan or --stage1")
    try:
        sc = _scenario(args.scenario)
        if args.plan is not None:
            svg = render_plan(sc, load_plan(args.plan, sc), cell=args.cell,
                              snapshots=args.snapshots)
        else:
            svg = render_stage1(sc, _read_json(args.stage1), epoch=args.epoch, cell=args.cell)
    except RenderError as exc:
        return _fail("render rejected", str(exc))
    except INPUT_ERRORS as exc:
        return _fail(getattr(exc, "category", "parse error"), str(exc))
    with open(args.output, "w") as fh:
        fh.write(svg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ccpp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="plan a scenario")
    s.add_argument("scenario")
    s.add_argument("-o", "--output", help="plan file (stdout if omitted)")
    s.add_argument("--stage1-dump", help="write first-stage node sets here")
    _opt(s, "--map", help="override the scenario's map file")
    _opt(s, "--scale", float)
    _opt(s, "--comm-limit", float)
    _opt(s, "--alpha", float)
    _opt(s, "--agents", int)
    _opt(s, "--seed", int)
    _opt(s, "--timeout", float, help="seconds")
    _opt(s, "--node-budget", int, default=DEFAULT_NODE_BUDGET)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("validate", help="check a plan against a scenario")
    v.add_argument("scenario")
    v.add_argument("plan")
    v.set_defaults(func=cmd_validate)

    b = sub.add_parser("bench", help="run a benchmark suite")
    b.add_argument("suite")
    b.add_argument("-o", "--output", help="records CSV (stdout if omitted)")
    b.add_argument("--summary", help="aggregate CSV")
    b.add_argument("--omit-timing", action="store_true",
                   help="drop wall-time columns so tables are reproducible")
    _opt(b, "--jobs", int, default=1)
    _opt(b, "--timeout", float)
    _opt(b, "--node-budget", int)
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("render", help="draw a plan or first-stage dump as SVG")
    r.add_argument("scenario")
    r.add_argument("--plan")
    r.add_argument("--stage1")
    r.add_argument("--epoch", type=int, default=0)
    r.add_argument("-o", "--output", required=True)
    _opt(r, "--cell", int, default=16)
    _opt(r, "--snapshots", int, default=8)
    r.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
