import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spreadsim.errors import (
    DuplicateEdgeError,
    EmptyGraphError,
    GraphFileError,
    IndexOutOfRangeError,
    InfeasibleDegreeSequenceError,
    NegativeWeightError,
    SelfLoopError,
)
from spreadsim.graph import (
    Strategy,
    build_csr,
    build_outgoing,
    decompose,
    degree_stats,
    gen_barabasi_albert,
    gen_erdos_renyi,
    gen_fixed_degree,
    load_graph,
    read_edge_list,
    save_graph,
    select_strategy,
    transpose,
)


def graphs_equal(a, b) -> bool:
    return (
        a.num_nodes == b.num_nodes
        and a.num_edges == b.num_edges
        and np.array_equal(a.row_offsets, b.row_offsets)
        and np.array_equal(a.col_indices, b.col_indices)
        and np.array_equal(a.weights, b.weights)
    )


def test_empty_graph():
    g = build_csr([], 3)
    assert np.array_equal(g.row_offsets, [0, 0, 0, 0])
    assert g.num_edges == 0


def test_two_edge_fan_in():
    g = build_csr([(0, 1, 1.0), (2, 1, 0.5)], 3)
    srcs, ws = g.neighbor_slice(1)
    assert list(srcs) == [0, 2]
    assert list(ws) == [1.0, 0.5]
    assert g.neighbor_slice(0)[0].size == 0


def test_eight_node_fan_in_slice():
    # node 2 has in-degree 3: its row_offsets slice must delimit 3 entries
    edges = [(0, 2, 1.0), (5, 2, 1.0), (7, 2, 1.0), (1, 4, 1.0), (3, 6, 1.0)]
    g = build_csr(edges, 8)
    assert g.row_offsets[3] - g.row_offsets[2] == 3
    assert list(g.neighbor_slice(2)[0]) == [0, 5, 7]


def test_build_errors():
    with pytest.raises(IndexOutOfRangeError):
        build_csr([(0, 5, 1.0)], 3)
    with pytest.raises(IndexOutOfRangeError):
        build_csr([(-1, 0, 1.0)], 3)
    with pytest.raises(DuplicateEdgeError):
        build_csr([(0, 1, 1.0), (0, 1, 2.0)], 3)
    with pytest.raises(NegativeWeightError):
        build_csr([(0, 1, -1.0)], 3)
    with pytest.raises(SelfLoopError):
        build_csr([(1, 1, 1.0)], 3)
    with pytest.raises(IndexOutOfRangeError):
        build_csr([], 0)


def test_slices_sorted_by_source():
    g = build_csr([(9, 0, 1.0), (3, 0, 1.0), (7, 0, 1.0)], 10)
    assert list(g.neighbor_slice(0)[0]) == [3, 7, 9]


def test_csr_round_trip():
    g = gen_erdos_renyi(200, 6.0, seed=3)
    g2 = build_csr(decompose(g), g.num_nodes)
    assert graphs_equal(g, g2)


def test_transpose_involution():
    g = gen_erdos_renyi(100, 8.0, seed=11)
    assert graphs_equal(transpose(transpose(g)), g)


def test_transpose_single_edge():
    g = build_csr([(0, 1, 2.5)], 2)
    t = transpose(g)
    dsts, ws = t.neighbor_slice(0)
    assert list(dsts) == [1] and list(ws) == [2.5]


def test_symmetric_graph_transpose_equal():
    g = gen_fixed_degree(100, 4, seed=5)
    t = transpose(g)
    assert graphs_equal(g, t)


def test_build_outgoing_populates_and_round_trips():
    g = gen_erdos_renyi(80, 5.0, seed=2)
    assert g.outgoing is None
    g = build_outgoing(g)
    assert g.outgoing is not None
    assert graphs_equal(transpose(g.outgoing), g)


def test_generators_deterministic():
    for gen, args in [
        (gen_erdos_renyi, (300, 8.0)),
        (gen_barabasi_albert, (300, 4)),
        (gen_fixed_degree, (300, 8)),
    ]:
        a, b = gen(*args, seed=17), gen(*args, seed=17)
        c = gen(*args, seed=18)
        assert graphs_equal(a, b)
        assert not graphs_equal(a, c)


def test_fixed_degree_regular():
    g = gen_fixed_degree(1000, 8, seed=1)
    stats = degree_stats(g)
    assert stats.rho == 1.0
    assert np.all(g.in_degrees() == 8)


def test_fixed_degree_infeasible():
    with pytest.raises(InfeasibleDegreeSequenceError):
        gen_fixed_degree(999, 7, seed=1)  # N*d odd
    with pytest.raises(InfeasibleDegreeSequenceError):
        gen_fixed_degree(5, 5, seed=1)


def test_er_edge_count_within_3_sigma():
    g = gen_erdos_renyi(1000, 8.0, seed=23)
    n_pairs = 1000 * 999 / 2
    p = 8.0 / 999
    sigma = np.sqrt(n_pairs * p * (1 - p))
    assert abs(g.num_edges - 8000) <= 3 * 2 * sigma  # directed = 2 * undirected


def test_er_is_simple_graph():
    g = gen_erdos_renyi(500, 6.0, seed=9)
    g.validate()
    tr = transpose(g)
    assert graphs_equal(transpose(tr), g)
    # symmetric: every directed edge has its mirror
    assert graphs_equal(g, tr)


def test_ba_average_degree_and_skew():
    g = gen_barabasi_albert(10_000, 4, seed=7)
    stats = degree_stats(g)
    assert stats.d_avg == pytest.approx(8.0, rel=0.05)
    assert stats.rho > 50.0


def test_degree_stats_star():
    # 8 spokes pointing at a hub: hub in-degree 8, d_avg = 8/9, rho = 9
    g = build_csr([(i, 8, 1.0) for i in range(8)], 9)
    stats = degree_stats(g)
    assert stats.d_max == 8
    assert stats.d_avg == pytest.approx(8.0 / 9.0)
    assert stats.rho == pytest.approx(9.0)


def test_degree_stats_empty_graph_errors():
    g = build_csr([], 4)
    with pytest.raises(EmptyGraphError):
        degree_stats(g)


def test_select_strategy_thresholds():
    from spreadsim.graph import DegreeStats

    assert select_strategy(DegreeStats(8.0, 16, 2.0)) == Strategy.PER_NODE
    assert select_strategy(DegreeStats(8.0, 80, 10.0)) == Strategy.LANE_CHUNKED
    assert select_strategy(DegreeStats(8.0, 3872, 484.0)) == Strategy.EDGE_MERGE
    assert select_strategy(DegreeStats(8.0, 32, 4.0)) == Strategy.LANE_CHUNKED
    assert select_strategy(DegreeStats(8.0, 400, 50.0)) == Strategy.EDGE_MERGE
    assert (
        select_strategy(DegreeStats(8.0, 3872, 484.0), Strategy.PER_NODE)
        == Strategy.PER_NODE
    )


def test_save_load_round_trip(tmp_path):
    g = gen_barabasi_albert(200, 3, seed=4)
    path = tmp_path / "g.fspg"
    save_graph(g, path)
    g2 = load_graph(path)
    assert graphs_equal(g, g2)
    assert path.read_bytes()[:4] == b"FSPG"


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.fspg"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(GraphFileError):
        load_graph(path)


def test_read_edge_list(tmp_path):
    path = tmp_path / "edges.txt"
    path.write_text("# comment\n0 1\n2 1 0.5\n")
    g = read_edge_list(path)
    assert g.num_nodes == 3
    srcs, ws = g.neighbor_slice(1)
    assert list(srcs) == [0, 2]
    assert list(ws) == [1.0, 0.5]
    g4 = read_edge_list(path, num_nodes=10)
    assert g4.num_nodes == 10


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.tuples(st.integers(0, 14), st.integers(0, 14), st.floats(0.0, 10.0)),
        max_size=60,
    )
)
def test_round_trip_property(edges):
    clean = {}
    for s, d, w in edges:
        if s != d:
            clean[(s, d)] = w
    triples = [(s, d, w) for (s, d), w in clean.items()]
    g = build_csr(triples, 15)
    assert graphs_equal(build_csr(decompose(g), 15), g)
    if g.num_edges:
        assert graphs_equal(transpose(transpose(g)), g)
