from __future__ import annotations

import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gip.errors import DataError, ShapeError
from gip.graphs import AttributedGraph, GraphDataset, degree_one_hot, normalize_adjacency, split_dataset
from gip.synthetic import generate_graphcycle, generate_graphfive, supergraph_adjacency
from gip.tu import parse_tu_dataset, write_tu_dataset

from conftest import MUTAG_DIR

DESK = dict(n_communities=(3, 5), community_size=(10, 30))


# --- adjacency normalization ------------------------------------------------


def test_isolated_node_normalizes_to_one():
    np.testing.assert_array_equal(normalize_adjacency(np.zeros((1, 1))), [[1.0]])


def test_k2_normalization():
    # A + I = all ones, degrees 2, so every entry is 1/2
    np.testing.assert_allclose(normalize_adjacency(np.array([[0.0, 1.0], [1.0, 0.0]])), np.full((2, 2), 0.5))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_normalized_adjacency_symmetric(n, seed):
    r = np.random.default_rng(seed)
    u = np.triu(r.random((n, n)), 1) * (r.random((n, n)) < 0.5)
    a = normalize_adjacency(u + u.T)
    assert np.max(np.abs(a - a.T)) <= 1e-12


def test_asymmetric_adjacency_rejected():
    with pytest.raises(ShapeError):
        normalize_adjacency(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_degree_one_hot_caps_at_max_degree():
    star = nx.to_numpy_array(nx.star_graph(4))
    out = degree_one_hot(star, 2)
    assert out.shape == (5, 3)
    assert out[0, 2] == 1.0 and out[1:, 1].sum() == 4


# --- splits -----------------------------------------------------------------


def test_split_sizes_ten_graphs():
    s = split_dataset([0, 1] * 5, (0.8, 0.1, 0.1), seed=3)
    assert (len(s.train), len(s.val), len(s.test)) == (8, 1, 1)


def test_split_is_seeded():
    labels = [0, 1, 2] * 20
    assert split_dataset(labels, seed=5) == split_dataset(labels, seed=5)
    assert split_dataset(labels, seed=5) != split_dataset(labels, seed=6)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=30, max_size=80), st.integers(0, 1000))
def test_split_partitions_and_stratifies(labels, seed):
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    if counts.min() < 3:
        with pytest.raises(DataError):
            split_dataset(labels, seed=seed)
        return
    s = split_dataset(labels, seed=seed)
    all_idx = sorted(s.train + s.val + s.test)
    assert all_idx == list(range(len(labels)))
    for c, n in zip(classes, counts):
        share = np.sum(labels[s.train] == c)
        assert share >= 1 and abs(share - 0.8 * n) <= 1.0 + 1e-9


# --- TU parser --------------------------------------------------------------


def _write_fixture(directory):
    # triangle (graph 1, label 5) then one edge (graph 2, label 7)
    (directory / "FIX_A.txt").write_text("1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n4, 5\n5, 4\n")
    (directory / "FIX_graph_indicator.txt").write_text("1\n1\n1\n2\n2\n")
    (directory / "FIX_graph_labels.txt").write_text("5\n7\n")
    (directory / "FIX_node_labels.txt").write_text("0\n2\n0\n2\n2\n")


def test_handwritten_fixture_parses_exactly(tmp_path):
    _write_fixture(tmp_path)
    ds = parse_tu_dataset(tmp_path)
    assert ds.name == "FIX" and ds.num_classes == 2 and len(ds) == 2
    assert [g.num_nodes for g in ds] == [3, 2]
    assert [g.label for g in ds] == [0, 1]
    np.testing.assert_array_equal(ds[0].adj, np.ones((3, 3)) - np.eye(3))
    np.testing.assert_array_equal(ds[1].adj, [[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(ds[0].x, [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(ds[1].x, [[0.0, 1.0], [0.0, 1.0]])


def test_fixture_without_node_labels_uses_degree_one_hot(tmp_path):
    _write_fixture(tmp_path)
    (tmp_path / "FIX_node_labels.txt").unlink()
    ds = parse_tu_dataset(tmp_path)
    # max degree seen is 2 -> three bins
    np.testing.assert_array_equal(ds[0].x, np.tile([0.0, 0.0, 1.0], (3, 1)))
    np.testing.assert_array_equal(ds[1].x, np.tile([0.0, 1.0, 0.0], (2, 1)))


def test_cross_graph_edge_rejected(tmp_path):
    _write_fixture(tmp_path)
    (tmp_path / "FIX_A.txt").write_text("3, 4\n4, 3\n")
    with pytest.raises(DataError, match="joins graphs"):
        parse_tu_dataset(tmp_path)


def test_out_of_range_node_rejected(tmp_path):
    _write_fixture(tmp_path)
    (tmp_path / "FIX_A.txt").write_text("1, 9\n")
    with pytest.raises(DataError):
        parse_tu_dataset(tmp_path)


def test_missing_file_rejected(tmp_path):
    _write_fixture(tmp_path)
    (tmp_path / "FIX_graph_labels.txt").unlink()
    with pytest.raises(DataError, match="missing"):
        parse_tu_dataset(tmp_path)


@pytest.mark.skipif(not MUTAG_DIR.is_dir(), reason="MUTAG files not available")
def test_mutag_statistics():
    ds = parse_tu_dataset(MUTAG_DIR)
    assert len(ds) == 188 and ds.num_classes == 2
    assert abs(np.mean([g.num_nodes for g in ds]) - 17.93) < 0.01


def _assert_same(a: GraphDataset, b: GraphDataset):
    assert len(a) == len(b) and a.num_classes == b.num_classes
    for g, h in zip(a, b):
        assert g.label == h.label
        np.testing.assert_array_equal(g.adj, h.adj)
        np.testing.assert_array_equal(g.x, h.x)
        assert g.meta.get("supergraph") == h.meta.get("supergraph")


@pytest.mark.parametrize("gen", [generate_graphcycle, generate_graphfive])
def test_generated_dataset_round_trips(tmp_path, gen):
    ds = gen(12, 4, **DESK)
    write_tu_dataset(ds, tmp_path)
    _assert_same(ds, parse_tu_dataset(tmp_path))


def test_real_valued_features_round_trip(tmp_path, rng):
    graphs = [AttributedGraph(rng.normal(size=(n, 3)), np.eye(n)[::-1] * (1 - np.eye(n)), n % 2) for n in (3, 4, 5, 6)]
    ds = GraphDataset(graphs, 2, "RV")
    write_tu_dataset(ds, tmp_path)
    _assert_same(ds, parse_tu_dataset(tmp_path))


# --- generators -------------------------------------------------------------


def test_graphcycle_full_scale_shape():
    ds = generate_graphcycle(40, 0, community_size=(10, 20))
    assert ds.num_classes == 2
    assert np.bincount(ds.labels).tolist() == [20, 20]


def test_graphfive_has_five_classes():
    ds = generate_graphfive(10, 0, **DESK)
    assert ds.num_classes == 5 and np.bincount(ds.labels).tolist() == [2] * 5


@pytest.mark.parametrize("gen", [generate_graphcycle, generate_graphfive])
def test_generators_are_deterministic(gen):
    a, b = gen(20, 9, **DESK), gen(20, 9, **DESK)
    _assert_same(a, b)


def _quotient(g: AttributedGraph) -> nx.Graph:
    """Community quotient graph recomputed from the node-level adjacency."""
    comm = g.meta["supergraph"]["communities"]
    owner = {v: c for c, members in enumerate(comm) for v in members}
    q = nx.Graph()
    q.add_nodes_from(range(len(comm)))
    for u, v in zip(*np.nonzero(np.triu(g.adj, 1))):
        if owner[u] != owner[v]:
            q.add_edge(owner[u], owner[v])
    return q


def _has_hamiltonian_cycle(q: nx.Graph) -> bool:
    nodes = list(q.nodes)
    first = nodes[0]
    for rest in itertools.permutations(nodes[1:]):
        order = (first, *rest)
        if all(q.has_edge(order[i], order[(i + 1) % len(order)]) for i in range(len(order))):
            return True
    return False


def test_desk_graphcycle_ground_truth():
    ds = generate_graphcycle(300, 0, **DESK)
    assert np.bincount(ds.labels).tolist() == [150, 150]
    for g in ds:
        meta = g.meta["supergraph"]
        k = len(meta["communities"])
        sizes = [len(c) for c in meta["communities"]]
        assert 3 <= k <= 5 and all(10 <= s <= 30 for s in sizes)
        q = _quotient(g)
        assert nx.utils.edges_equal(sorted(map(sorted, q.edges)), sorted(map(sorted, meta["super_edges"])))
        if g.label == 1:
            assert _has_hamiltonian_cycle(q)
        else:
            assert nx.is_tree(q)


def test_graphfive_star_has_one_hub():
    ds = generate_graphfive(25, 2, **DESK)
    stars = [g for g in ds if g.meta["supergraph"]["layout"] == "star"]
    assert stars
    for g in stars:
        sg = supergraph_adjacency(g.meta["supergraph"])
        deg = sg.sum(axis=1)
        k = len(deg)
        assert np.sum(deg == k - 1) == 1 and np.all(np.sort(deg)[:-1] == 1)


def test_communities_are_connected_blocks():
    g = generate_graphcycle(4, 1, **DESK)[0]
    for members in g.meta["supergraph"]["communities"]:
        sub = g.adj[np.ix_(members, members)]
        assert nx.is_connected(nx.from_numpy_array(sub))
