"""Compiled vs pure-Python kernel timings.

    python benchmarks/bench_kernels.py [--repeat 3] [--quick]

Three workloads: single-source Dijkstra on an open grid, the first planning
stage (dominated by the witness-checked follower passes) and a full solve
(adds the joint-state search). Prints best-of-``repeat`` wall times.
"""
import argparse
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))

import instances  # noqa: E402
from ccpp import _kernels  # noqa: E402
from ccpp.graph import multi_source_dijkstra  # noqa: E402
from ccpp.maps import build_graph, grid_from_rows  # noqa: E402
from ccpp.solver import solve  # noqa: E402
from ccpp.stage1 import run_stage1  # noqa: E402


def best_of(fn, repeat):
    out = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t)
    return min(out)


def workloads(quick):
    side = 80 if quick else 200
    g, _ = build_graph(grid_from_rows(["." * side] * side))
    scen = [instances.random_scenario(s, 24, 24, 4, 4.0, 3) for s in range(3 if quick else 8)]

    def dijkstra():
        multi_source_dijkstra(g, [(0, 0.0)])

    def stage1():
        for sc in scen:
            run_stage1(sc)

    def full():
        for sc in scen:
            try:
                solve(sc, node_budget=100_000)
            except Exception:
                pass

    return [(f"dijkstra {side}x{side}", dijkstra), (f"stage1 x{len(scen)}", stage1),
            (f"solve x{len(scen)}", full)]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args(argv)
    names = _kernels.available_backends()
    if "compiled" not in names:
        print("compiled extension not built; only the Python backend is available")
    prev = _kernels.backend()
    rows = []
    for label, fn in workloads(args.quick):
        times = {}
        for b in names:
            _kernels.use_backend(b)
            fn()  # warm caches
            times[b] = best_of(fn, args.repeat)
        rows.append((label, times))
    _kernels.use_backend(prev)
    print(f"{'workload':<22}" + "".join(f"{b:>12}" for b in names) + f"{'speedup':>10}")
    for label, times in rows:
        sp = times["python"] / times["compiled"] if "compiled" in times else np.nan
        print(f"{label:<22}" + "".join(f"{times[b]:>11.3f}s" for b in names) + f"{sp:>9.1f}x")


if __name__ == "__main__":
    main()
