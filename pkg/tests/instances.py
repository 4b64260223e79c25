"""Random instance generators shared by the test suites."""
from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from ccpp.comms import CommConfig
from ccpp.maps import GridMap, build_graph
from ccpp.scenario import Scenario, ScenarioError, random_starts


def random_grid(rng, width, height, density=0.2) -> GridMap:
    """Random obstacles; cells outside the largest 8-connected region are blocked."""
    while True:
        passable = rng.random((height, width)) >= density
        grid = GridMap(width, height, passable)
        g, cells = build_graph(grid)
        if g.n_vertices == 0:
            continue
        m = csr_matrix((g.weights, g.indices, g.indptr), shape=(g.n_vertices,) * 2)
        _, lab = connected_components(m, directed=False)
        big = np.bincount(lab).argmax()
        keep = np.zeros_like(passable)
        for (c, r), v in cells.items():
            keep[r, c] = lab[v] == big
        if keep.sum() >= width * height // 2:
            return GridMap(width, height, keep)


def random_scenario(seed, width, height, n_agents, comm_limit, n_goals,
                    density=0.2, alpha=1.5, tries=50) -> Scenario:
    rng = np.random.default_rng(seed)
    for _ in range(tries):
        grid = random_grid(rng, width, height, density)
        g, cells = build_graph(grid)
        comm = CommConfig(float(comm_limit))
        center = int(rng.integers(g.n_vertices))
        try:
            starts = random_starts(g, center, n_agents, int(rng.integers(1 << 30)), comm)
        except ScenarioError:
            continue
        pool = np.setdiff1d(np.arange(g.n_vertices), starts)
        goals = tuple(int(x) for x in rng.choice(pool, n_goals, replace=False))
        return Scenario(g, tuple(starts), goals, comm, alpha, grid=grid, cells=cells,
                        depot=center)
    raise RuntimeError("could not place starts")


def validity_suite(count=216):
    """Parameters of the randomized end-to-end suite, fixed by index."""
    out = []
    k = 0
    while len(out) < count:
        for n in (2, 3, 4, 5):
            for lam in (2, 4, 8):
                rng = np.random.default_rng(10_000 + k)
                side = int(rng.integers(12, 31))
                goals = int(rng.integers(2, 5))
                out.append(dict(seed=k, width=side, height=side, n_agents=n,
                                comm_limit=lam, n_goals=goals))
                k += 1
    return out[:count]
