import json

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forestgraph.clustering import ClusterAssignment
from forestgraph.dataset import synthetic_suite
from forestgraph.feature_graph import (
    CRITERIA,
    DirectedFeatureGraph,
    average_graphs,
    build_graph,
    cluster_specific_graphs,
    edge_quantity,
    export_graph,
    import_graph,
    to_undirected,
)
from forestgraph.forest import Forest, ForestParams, Node, Tree, train_supervised_forest, train_unsupervised_forest

# Ten samples on two features.  s0-s2 sit at (0, 0), s3-s5 at (0, 1), s6-s9 at (1, 0).
X_HAND = np.array([[0, 0]] * 3 + [[0, 1]] * 3 + [[1, 0]] * 4, dtype=float)
LABELS_HAND = np.array([0] * 5 + [1] * 5)


def _hand_forest():
    # root splits V1 (10 in bag) -> left splits V2 (6) -> leaves (3, 3); right leaf (4)
    t1 = Tree(
        nodes=[
            Node(0, 0, 10, 0, 0.5, 1, 2, 0.9),
            Node(1, 1, 6, 1, 0.5, 3, 4, 0.8),
            Node(2, 1, 4),
            Node(3, 2, 3),
            Node(4, 2, 3),
        ],
        inbag_counts=np.ones(10, dtype=int),
    )
    # a stump on V2 with a negative score
    t2 = Tree(
        nodes=[Node(0, 0, 10, 1, 0.5, 1, 2, -0.2), Node(1, 1, 7), Node(2, 1, 3)],
        inbag_counts=np.ones(10, dtype=int),
    )
    return Forest([t1, t2], ForestParams(n_trees=2), "unsupervised_fixation", ("V1", "V2"))


class TestHandTraced:
    def test_present(self):
        A = build_graph(_hand_forest(), "present").adjacency
        np.testing.assert_array_equal(A, [[0, 1, 1], [0, 0, 4], [0, 0, 0]])

    def test_level(self):
        A = build_graph(_hand_forest(), "level").adjacency
        np.testing.assert_allclose(A, [[0, 1, 1], [0, 0, 0.5 + 0.5 + 1 + 1], [0, 0, 0]])

    def test_sample(self):
        A = build_graph(_hand_forest(), "sample").adjacency
        np.testing.assert_allclose(A, [[0, 0.6, 0.4], [0, 0, 0.6 + 1.0], [0, 0, 0]], rtol=1e-12)

    def test_fixation(self):
        A = build_graph(_hand_forest(), "fixation").adjacency
        # the negative score of the stump is clamped to zero
        np.testing.assert_allclose(A, [[0, 0.9, 0.9], [0, 0, 1.6], [0, 0, 0]], rtol=1e-12)
        raw = build_graph(_hand_forest(), "fixation", fixation="raw").adjacency
        np.testing.assert_allclose(raw[1, 2], 2 * 0.2 + 2 * 1.2, rtol=1e-12)

    def test_cluster_specific_sample(self):
        g = cluster_specific_graphs(_hand_forest(), "sample", ClusterAssignment(LABELS_HAND, 2), X_HAND)
        # routed: node1 holds s0-s5 (5 of cluster 0), node4 holds s3-s5 (2 of cluster 0)
        np.testing.assert_allclose(g[0].adjacency[0], [0, 0.6 * 5 / 6, 0], atol=1e-12)
        np.testing.assert_allclose(g[1].adjacency[0], [0, 0.6 / 6, 0.4], atol=1e-12)
        # tree 2 stump on V2: left leaf gets s0-s2 and s6-s9, right leaf s3-s5
        c0 = 0.3 + 0.3 * 2 / 3 + 0.7 * 3 / 7 + 0.3 * 2 / 3
        np.testing.assert_allclose(g[0].adjacency[1, 2], c0, rtol=1e-12)
        total = g[0].adjacency + g[1].adjacency
        np.testing.assert_allclose(total, build_graph(_hand_forest(), "sample").adjacency, atol=1e-12)
        assert g[1].cluster == 1

    def test_unreached_node_contributes_nothing(self):
        X = np.array([[0.0, 0.0], [0.0, 1.0]])
        g = cluster_specific_graphs(_hand_forest(), "present", ClusterAssignment(np.array([0, 1]), 2), X)
        # nobody routes to the right child of tree 1 (V1 > 0.5)
        assert g[0].adjacency[0, 2] == 0 and g[1].adjacency[0, 2] == 0

    def test_build_graph_cluster_context(self):
        ctx = (ClusterAssignment(LABELS_HAND, 2), 1, X_HAND)
        g = build_graph(_hand_forest(), "sample", cluster_context=ctx)
        assert g.cluster == 1
        with pytest.raises(ValueError):
            build_graph(_hand_forest(), "sample", cluster_context=(ctx[0], 5, X_HAND))


def test_edge_quantity_rules():
    parent = Node(0, 0, 10, 0, 0.5, 1, 2, 0.4)
    child = Node(1, 3, 4)
    assert edge_quantity(parent, child, "present") == 1.0
    assert edge_quantity(parent, child, "level") == pytest.approx(1 / 3)
    assert edge_quantity(parent, child, "sample", n_root=20) == 0.2
    assert edge_quantity(parent, child, "fixation") == 0.4
    with pytest.raises(ValueError):
        edge_quantity(parent, child, "sample")
    with pytest.raises(ValueError):
        edge_quantity(parent, child, "bogus")
    with pytest.raises(ValueError):
        edge_quantity(child, child, "present")


@pytest.fixture(scope="module")
def trained():
    ds = synthetic_suite("ev2_cluster", 0)
    forest = train_unsupervised_forest(ds, ForestParams(n_trees=20, seed=3))
    return ds, forest


class TestInvariants:
    @pytest.mark.parametrize("criterion", CRITERIA)
    def test_shape_leaf_row_and_sign(self, trained, criterion):
        ds, forest = trained
        A = build_graph(forest, criterion).adjacency
        assert A.shape == (14, 14)
        assert np.all(A[-1] == 0)
        assert np.all(A >= 0)

    def test_present_counts_child_edges(self, trained):
        _, forest = trained
        A = build_graph(forest, "present").adjacency
        internal = sum(not nd.is_leaf for t in forest.trees for nd in t.nodes)
        assert A.sum() == 2 * internal

    def test_sample_mass_leaving_roots(self, trained):
        _, forest = trained
        A = build_graph(forest, "sample").adjacency
        # each internal node passes its in-bag fraction to its children
        mass = sum(nd.n_inbag / t.nodes[0].n_inbag for t in forest.trees for nd in t.nodes if not nd.is_leaf)
        assert A.sum() == pytest.approx(mass, rel=1e-12)
        root_rows = sum(A[t.nodes[0].split_feature].sum() >= 1 - 1e-12 for t in forest.trees)
        assert root_rows >= 1

    @pytest.mark.parametrize("criterion", CRITERIA)
    def test_additivity(self, trained, criterion):
        ds, forest = trained
        assign = ClusterAssignment(ds.labels, 4)
        graphs = cluster_specific_graphs(forest, criterion, assign, ds)
        total = sum(g.adjacency for g in graphs.values())
        np.testing.assert_allclose(total, build_graph(forest, criterion).adjacency, rtol=0, atol=1e-9)

    def test_single_cluster_equals_overall(self, trained):
        ds, forest = trained
        g = cluster_specific_graphs(forest, "level", ClusterAssignment(np.zeros(ds.n_samples, int), 1), ds)[0]
        np.testing.assert_allclose(g.adjacency, build_graph(forest, "level").adjacency, atol=1e-12)

    def test_feature_permutation(self):
        ds = synthetic_suite("ev1_centrality", 0)
        perm = np.array([3, 0, 12, 1, 2, 4, 5, 6, 7, 8, 9, 10, 11])
        params = ForestParams(n_trees=5, mtry=13, bootstrap=False)
        a = build_graph(train_unsupervised_forest(ds, params), "present").adjacency
        b = build_graph(train_unsupervised_forest(ds.select_features(perm), params), "present").adjacency
        idx = np.r_[perm, 13]
        np.testing.assert_allclose(b, a[np.ix_(idx, idx)])

    def test_fixation_rejected_for_supervised(self, trained):
        ds, _ = trained
        sup = train_supervised_forest(ds, ds.labels, ForestParams(n_trees=2))
        with pytest.raises(ValueError):
            build_graph(sup, "fixation")
        assert build_graph(sup, "level").adjacency.sum() > 0

    def test_bad_assignment(self, trained):
        ds, forest = trained
        with pytest.raises(ValueError):
            cluster_specific_graphs(forest, "present", np.zeros(3, int), ds)


class TestProjection:
    def test_hand_values(self):
        A = np.array([[0, 0.6, 0.2, 1], [0.2, 0.5, 0.4, 1], [0, 0.2, 0, 0], [0, 0, 0, 0]])
        U = to_undirected(DirectedFeatureGraph(("a", "b", "c"), A, "sample")).weights
        np.testing.assert_allclose(U, [[0, 0.4, 0.1], [0.4, 0, 0.3], [0.1, 0.3, 0]])

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 1000), st.integers(1, 8))
    def test_symmetric_zero_diagonal(self, seed, d):
        A = np.random.default_rng(seed).random((d + 1, d + 1))
        U = to_undirected(DirectedFeatureGraph([f"V{i}" for i in range(d)], A, "present")).weights
        np.testing.assert_array_equal(U, U.T)
        assert np.all(np.diag(U) == 0)

    def test_average(self):
        g1 = DirectedFeatureGraph(("a",), np.array([[0, 2.0], [0, 0]]), "present")
        g2 = DirectedFeatureGraph(("a",), np.array([[0, 4.0], [0, 0]]), "present")
        avg = average_graphs([g1, g2])
        assert avg.adjacency[0, 1] == 3.0 and avg.metadata["n_averaged"] == 2
        with pytest.raises(ValueError):
            average_graphs([g1, DirectedFeatureGraph(("a",), np.zeros((2, 2)), "level")])


class TestExport:
    def test_json_and_csv_round_trip(self, trained):
        _, forest = trained
        g = build_graph(forest, "sample")
        for fmt in ("json", "adjacency_csv"):
            back = import_graph(export_graph(g, fmt), fmt, criterion="sample")
            assert back.feature_names == g.feature_names
            np.testing.assert_array_equal(back.adjacency, g.adjacency)
        doc = json.loads(export_graph(g, "json"))
        assert doc["vertices"][-1] == "l" and doc["criterion"] == "sample"
        U = to_undirected(g)
        back = import_graph(export_graph(U, "adjacency_csv"), "adjacency_csv")
        np.testing.assert_array_equal(back.weights, U.weights)

    def test_graphml_and_dot(self):
        g = build_graph(_hand_forest(), "sample")
        G = nx.parse_graphml(export_graph(g, "graphml"))
        assert G.is_directed()
        assert G["V1"]["V2"]["weight"] == pytest.approx(0.6)
        assert G.number_of_edges() == 3
        dot = export_graph(g, "dot")
        assert dot.startswith("digraph")
        assert '"V2" -> "l" [weight=' in dot
        assert export_graph(to_undirected(g), "dot").startswith("graph")

    def test_export_deterministic(self, trained):
        _, forest = trained
        g = build_graph(forest, "level")
        assert export_graph(g, "json") == export_graph(g, "json")

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            export_graph(build_graph(_hand_forest(), "present"), "xlsx")
