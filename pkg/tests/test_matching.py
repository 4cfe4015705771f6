import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from concatmwpm.matching import MatchGraph, Matcher, MatchingInfeasibleError, solve


def brute_force(graph: MatchGraph, defects):
    """Minimum total weight over all edge subsets with the right parity, or None."""
    target = np.zeros(graph.num_nodes, dtype=np.int64)
    target[list(defects)] = 1
    best = None
    m = graph.num_edges
    for mask in range(1 << m):
        deg = np.zeros(graph.num_nodes, dtype=np.int64)
        w = 0.0
        for j in range(m):
            if mask >> j & 1:
                u, v = graph.edges[j]
                deg[u] += 1
                deg[v] += 1
                w += graph.weights[j]
        par = deg % 2
        par[graph.boundary] = 0
        if np.array_equal(par, target) and (best is None or w < best - 1e-12):
            best = w
    return best


def random_graph(rng, n_max=7, m_max=10):
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    edges = []
    for _ in range(m):
        u, v = rng.choice(n, size=2, replace=False)
        edges.append((u, v))
    weights = rng.integers(1, 8, size=m) * rng.choice([1.0, 0.5, 0.25], size=m)
    graph = MatchGraph.from_edges(n, int(rng.integers(n)), edges, weights)
    k = int(rng.integers(0, n))
    cand = [v for v in range(n) if v != graph.boundary]
    defects = sorted(rng.choice(cand, size=min(k, len(cand)), replace=False).tolist())
    return graph, defects


def check_against_oracle(graph, defects, backend):
    expected = brute_force(graph, defects)
    if expected is None:
        with pytest.raises(MatchingInfeasibleError):
            solve(graph, defects, backend=backend)
        return
    got = solve(graph, defects, backend=backend)
    deg = np.zeros(graph.num_nodes, dtype=np.int64)
    for e in got.edges:
        deg[graph.edges[e]] += 1
    deg[graph.boundary] = 0
    assert set(np.flatnonzero(deg % 2)) == set(defects)
    assert got.total_weight == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("backend", ["pymatching", "networkx"])
def test_random_graphs_match_brute_force(backend):
    rng = np.random.default_rng(1234)
    for _ in range(200):
        graph, defects = random_graph(rng)
        check_against_oracle(graph, defects, backend)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_backends_agree(seed):
    rng = np.random.default_rng(seed)
    graph, defects = random_graph(rng, n_max=8, m_max=12)
    try:
        a = solve(graph, defects, backend="pymatching")
    except MatchingInfeasibleError:
        with pytest.raises(MatchingInfeasibleError):
            solve(graph, defects, backend="networkx")
        return
    b = solve(graph, defects, backend="networkx")
    assert a.total_weight == pytest.approx(b.total_weight, abs=1e-9)


def test_boundary_path():
    # 0 - 1 - 2(boundary); a single defect at 0 must route to the boundary
    g = MatchGraph.from_edges(3, 2, [(0, 1), (1, 2)], [1.0, 2.0])
    m = solve(g, [0])
    assert m.edges == (0, 1)
    assert m.total_weight == 3.0


def test_infeasible_isolated_component():
    g = MatchGraph.from_edges(4, 3, [(0, 1)], [1.0])
    with pytest.raises(MatchingInfeasibleError):
        solve(g, [0])
    with pytest.raises(MatchingInfeasibleError):
        solve(g, [2])


def test_parallel_edges_take_lightest():
    g = MatchGraph.from_edges(3, 2, [(0, 1), (0, 1), (1, 2)], [3.0, 1.0, 1.0])
    assert solve(g, [0, 1]).edges == (1,)


def test_batch_matches_single():
    rng = np.random.default_rng(7)
    graph, _ = random_graph(rng, n_max=8, m_max=14)
    matcher = Matcher(graph)
    rows = []
    for _ in range(20):
        rows.append(rng.integers(0, 2, size=graph.num_detectors))
    rows = np.array(rows, dtype=np.uint8)
    back = np.flatnonzero(graph.detector_index >= 0)
    try:
        batch = matcher.solve_batch(rows)
    except MatchingInfeasibleError:
        pytest.skip("random graph infeasible for some row")
    for row, sel in zip(rows, batch):
        single = matcher.solve(back[np.flatnonzero(row)])
        assert graph.weights[sel].sum() == pytest.approx(single.total_weight)


def test_validation():
    with pytest.raises(ValueError):
        MatchGraph.from_edges(2, 0, [(0, 0)])
    with pytest.raises(ValueError):
        MatchGraph.from_edges(2, 5, [(0, 1)])
    with pytest.raises(ValueError):
        MatchGraph.from_edges(2, 0, [(0, 1)], [-1.0])
    g = MatchGraph.from_edges(2, 0, [(0, 1)])
    with pytest.raises(ValueError):
        solve(g, [0])
