import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctladder.metric_graph import (ContractError, GraphInputError, MetricGraph, cycle_graph,
                                   edge_list_text, path_graph, read_edge_list)
from ctladder.models import build_tree
from oracles import floyd_warshall, four_point_brute, path_len, simple_paths


@st.composite
def connected_graphs(draw, max_n=9, weighted=False):
    n = draw(st.integers(2, max_n))
    # random spanning tree plus extra edges keeps the graph connected
    edges = {}
    for v in range(1, n):
        u = draw(st.integers(0, v - 1))
        edges[(u, v)] = None
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=2 * n))
    for u, v in extra:
        if u != v:
            edges[(min(u, v), max(u, v))] = None
    if weighted:
        lengths = draw(st.lists(st.sampled_from([0.5, 1.0, 1.5, 2.0, 3.0]),
                                min_size=len(edges), max_size=len(edges)))
        return n, [(u, v, w) for (u, v), w in zip(edges, lengths)]
    return n, list(edges)


@given(connected_graphs(weighted=True))
def test_distances_match_floyd_warshall(data):
    n, edges = data
    g = MetricGraph(n, edges)
    assert np.allclose(g.distance_matrix(), floyd_warshall(n, edges))


@given(connected_graphs(max_n=8, weighted=True))
def test_exhaustive_delta_matches_brute_force(data):
    n, edges = data
    g = MetricGraph(n, edges)
    est = g.estimate_delta()
    assert est.exhaustive
    assert est.value == pytest.approx(four_point_brute(g.distance_matrix()), abs=1e-9)


@given(connected_graphs(max_n=7))
def test_shortest_path_is_lexicographically_smallest_geodesic(data):
    n, edges = data
    g = MetricGraph(n, edges)
    adj = {v: [] for v in range(n)}
    lengths = {}
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
        lengths[frozenset((u, v))] = 1.0
    for u, v in itertools.combinations(range(n), 2):
        paths = simple_paths(adj, u, v)
        best = min(path_len(lengths, p) for p in paths)
        expect = min(p for p in paths if path_len(lengths, p) == best)
        got = g.shortest_path(u, v)
        assert got.vertex_seq == expect
        assert got.length == best and got.geodesic


def test_cycle_delta_frozen_from_brute_force():
    # four-point oracle on the 12-cycle gives 3
    assert cycle_graph(12).estimate_delta().value == 3.0
    assert cycle_graph(6).estimate_delta().value == 1.0


def test_tree_delta_zero_and_sampled_is_lower_bound():
    t = build_tree(3, 4)
    assert t.estimate_delta().value == 0.0
    g = cycle_graph(12)
    s = g.estimate_delta(budget=2000, rng=np.random.default_rng(0))
    assert not s.exhaustive and s.value <= 3.0


def test_thin_triangles_on_cycle():
    est = cycle_graph(6).estimate_delta(method="thin_triangles")
    assert est.exhaustive and est.value > 0


@given(st.integers(0, 45), st.integers(0, 45), st.integers(0, 45))
def test_tree_gromov_product_is_distance_to_geodesic(a, b, c):
    t = build_tree(3, 4)
    seg = t.shortest_path(a, b).vertex_seq
    d = min(t.distance(c, x) for x in seg)
    assert t.gromov_product(a, b, c) == pytest.approx(d)


def test_projection_tie_goes_to_smallest_position():
    g = cycle_graph(6)
    mu = g.shortest_path(1, 5)  # 1 - 0 - 5
    assert mu.vertex_seq == (1, 0, 5)
    # vertex 3 is at distance 2 from both ends of mu
    assert g.nearest_point_projection(3, mu) == 1
    assert g.project_all(mu)[3] == 0


def test_projection_needs_geodesic():
    g = cycle_graph(6)
    p = g.make_path([0, 1, 2, 3, 4])
    assert not p.geodesic
    with pytest.raises(ContractError):
        g.nearest_point_projection(0, p)


def test_input_errors():
    with pytest.raises(GraphInputError):
        MetricGraph(3, [(0, 1)])
    with pytest.raises(GraphInputError):
        MetricGraph(2, [(0, 2)])
    with pytest.raises(GraphInputError):
        MetricGraph(2, [(0, 1, -1.0)])
    with pytest.raises(GraphInputError):
        path_graph(3).distance(0, 7)
    with pytest.raises(GraphInputError):
        path_graph(3).make_path([0, 2])
    with pytest.raises(GraphInputError):
        path_graph(3).estimate_delta(budget=0)


def test_edge_list_round_trip():
    g = MetricGraph(4, [(0, 1, 0.5), (1, 2, 2.0), (2, 3, 1.0)], coords=np.arange(8.0).reshape(4, 2))
    h = read_edge_list(edge_list_text(g, "header line"))
    assert h.n == 4
    assert np.array_equal(h.distance_matrix(), g.distance_matrix())
    assert np.array_equal(h.coords, g.coords)


def test_row_cache_respects_budget():
    g = MetricGraph(50, [(i, i + 1) for i in range(49)], cache_budget=120)
    for u in range(10):
        assert g.row(u)[49] == 49 - u
    assert len(g._rows) * g.n <= 120
    assert np.allclose(g.rows([3, 7])[:, 0], [3, 7])


def test_distance_to_set_nearest_smallest_id():
    g = path_graph(5)
    d, nearest = g.distance_to_set([0, 4], return_nearest=True)
    assert list(d) == [0, 1, 2, 1, 0]
    assert nearest[2] == 0


def test_induced_subgraph_and_ball():
    g = cycle_graph(8)
    sub, old = g.induced_subgraph([0, 1, 2, 3])
    assert sub.n == 4 and sub.distance(0, 3) == 3
    assert g.ball(0, 2) == {0, 1, 2, 6, 7}
    assert g.diameter() == 4
