import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ccpp.comms import CommConfig, CommIndex, components, fleet_connected, within_range
from ccpp.graph import euclidean_distance
from ccpp.maps import build_graph, grid_from_rows


def closure_classes(points, lam):
    n = len(points)
    reach = [[euclidean_distance(points[i], points[j]) <= lam + 1e-9 for j in range(n)]
             for i in range(n)]
    for k, i, j in itertools.product(range(n), repeat=3):
        reach[i][j] = reach[i][j] or (reach[i][k] and reach[k][j])
    classes = {frozenset(j for j in range(n) if reach[i][j]) for i in range(n)}
    return sorted(sorted(c) for c in classes)


def test_within_range_examples():
    cfg = CommConfig(5.0)
    assert within_range(cfg, (0, 0), (3, 4))
    assert not within_range(cfg, (0, 0), (3, 4.01))
    assert within_range(cfg, (7, 1), (7, 1))


def test_fleet_examples():
    assert fleet_connected(CommConfig(2.0), [(0, 0), (2, 0), (4, 0)])
    assert not fleet_connected(CommConfig(2.0), [(0, 0), (4, 0)])


def test_components_examples():
    assert components(CommConfig(1.0), [(0, 0), (0.5, 0), (10, 10)]) == [[0, 1], [2]]
    assert components(CommConfig(1.0), [(3, 3)] * 4) == [[0, 1, 2, 3]]


pts = st.lists(st.tuples(st.floats(0, 20), st.floats(0, 20)), min_size=1, max_size=7)


@given(pts, st.floats(0.5, 10))
def test_components_match_closure(points, lam):
    cfg = CommConfig(lam)
    assert components(cfg, points) == closure_classes(points, lam)
    assert fleet_connected(cfg, points) == (len(components(cfg, points)) == 1)


@given(pts, st.floats(0.5, 10), st.randoms())
def test_connected_permutation_invariant(points, lam, rnd):
    shuffled = list(points)
    rnd.shuffle(shuffled)
    cfg = CommConfig(lam)
    assert fleet_connected(cfg, points) == fleet_connected(cfg, shuffled)


@given(pts, st.floats(0.5, 10), st.integers(1, 8))
def test_joint_rescaling(points, lam, k):
    scaled = [(k * x, k * y) for x, y in points]
    assert components(CommConfig(lam), points) == components(CommConfig(k * lam), scaled)


@given(st.tuples(st.floats(0, 9), st.floats(0, 9)), st.tuples(st.floats(0, 9), st.floats(0, 9)))
def test_within_range_symmetric(a, b):
    cfg = CommConfig(3.0)
    assert within_range(cfg, a, b) == within_range(cfg, b, a)


def test_injected_metric():
    cheb = lambda a, b: max(abs(a[0] - b[0]), abs(a[1] - b[1]))
    cfg = CommConfig(1.0, cheb)
    assert not cfg.euclidean
    assert within_range(cfg, (0, 0), (1, 1))
    assert not within_range(CommConfig(1.0), (0, 0), (1, 1))


def test_rejects_nonpositive_limit():
    with pytest.raises(ValueError):
        CommConfig(0.0)


@pytest.mark.parametrize("lam", [1.0, 2.5, 100.0])
def test_comm_index_matches_pairs(lam):
    graph, _ = build_graph(grid_from_rows(["....@", ".@...", "....."]))
    idx = CommIndex(graph, CommConfig(lam))
    for v in range(graph.n_vertices):
        ref = [u for u in range(graph.n_vertices)
               if euclidean_distance(graph.coords[u], graph.coords[v]) <= lam + 1e-9]
        assert sorted(idx.neighbors(v).tolist()) == ref
    mask = idx.near_mask([0])
    assert mask.tolist() == [idx.in_range(0, u) for u in range(graph.n_vertices)]
