import numpy as np
import pytest
from hypothesis import given, strategies as st

import instances
from ccpp import _kernels
from ccpp.errors import PlanningError
from ccpp.maps import build_graph
from ccpp.plan import dumps_plan
from ccpp.solver import solve
from ccpp.stage1 import stage1_to_dict

needs_compiled = pytest.mark.skipif("compiled" not in _kernels.available_backends(),
                                    reason="compiled extension not built")


def test_unknown_backend():
    with pytest.raises(ValueError):
        _kernels.use_backend("fortran")


def test_python_backend_has_no_composite_kernel(backend):
    backend("python")
    assert _kernels.composite_search_kernel() is None


def _run(sc, name):
    _kernels.use_backend(name)
    try:
        res = solve(sc, node_budget=100_000)
    except PlanningError as exc:
        return ("error", exc.category, exc.epoch)
    return dumps_plan(res.plan, sc, res.makespan), stage1_to_dict(res.stage1, sc)


@needs_compiled
@given(seed=st.integers(0, 10_000), side=st.integers(4, 14), density=st.floats(0.0, 0.35))
def test_dijkstra_backends_agree(seed, side, density):
    rng = np.random.default_rng(seed)
    g, _ = build_graph(instances.random_grid(rng, side, side, density))
    src = rng.choice(g.n_vertices, size=min(3, g.n_vertices), replace=False).astype(np.intp)
    costs = rng.random(len(src)) * 2
    allowed = (rng.random(g.n_vertices) > 0.2).astype(np.uint8)
    out = {}
    for name in ("python", "compiled"):
        k = _kernels._BACKENDS[name]
        out[name] = k.dijkstra(g.indptr, g.indices, g.weights, src, costs, allowed)
    (cp, pp), (cc, pc) = out["python"][:2], out["compiled"][:2]
    assert np.array_equal(cp, cc)
    assert np.array_equal(pp, pc)


@needs_compiled
@pytest.mark.parametrize("seed", range(16))
def test_full_solve_backends_identical(seed, backend):
    n = 2 + seed % 4
    sc = instances.random_scenario(seed, 10 + seed % 9, 10 + seed % 7, n, (2, 4, 8)[seed % 3],
                                   2 + seed % 3)
    assert _run(sc, "python") == _run(sc, "compiled")


def test_env_selects_python_fallback():
    import os
    import subprocess
    import sys
    env = dict(os.environ, CCPP_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from ccpp import _kernels; print(_kernels.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
