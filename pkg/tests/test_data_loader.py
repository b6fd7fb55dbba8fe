import numpy as np
import pytest

from core.exceptions import GraphDataError
from data.data_loader import (
    build_features,
    decompose,
    load_graph,
    make_splits,
    resolve_feature_mode,
    split_sizes,
    to_graph_tensors,
    write_graph,
)


@pytest.fixture
def bibliographic(write_lines):
    nodes = write_lines("nodes.tsv", ["0\tauthor", "1\tpaper", "2\tpaper", "3\tvenue"])
    edges = write_lines("edges.tsv", ["0\t1\twrites", "0\t2\twrites", "1\t3\tpublished_in", "2\t3\tpublished_in"])
    labels = write_lines("labels.tsv", ["1\tdb", "2\tml", "0\tml"])
    return nodes, edges, labels


class TestLoadGraph:
    def test_types_in_first_appearance_order(self, bibliographic):
        nodes, edges, labels = bibliographic
        g = load_graph(nodes, edges, labels_path=labels)
        assert g.num_nodes == 4
        assert g.num_edges == 4
        assert g.node_type_names == ("author", "paper", "venue")
        assert g.edge_type_names == ("writes", "published_in")
        np.testing.assert_array_equal(g.node_type_of, [0, 1, 1, 2])
        assert g.class_names == ("db", "ml")
        assert g.labels == {1: 0, 2: 1, 0: 1}
        np.testing.assert_array_equal(g.label_array(), [1, 0, 1, -1])
        np.testing.assert_array_equal(g.labeled_ids(), [0, 1, 2])

    def test_edgeless_graph_loads_but_is_not_heterogeneous(self, write_lines):
        g = load_graph(write_lines("nodes.tsv", ["0\ta", "1\tb"]), write_lines("edges.tsv", []))
        assert g.num_edges == 0
        assert g.edge_list.shape == (0, 3)
        assert not g.is_heterogeneous
        with pytest.raises(GraphDataError):
            g.check_heterogeneous()

    def test_unknown_node_reports_file_and_line(self, write_lines):
        nodes = write_lines("nodes.tsv", ["0\ta", "1\tb"])
        edges = write_lines("edges.tsv", ["0\t1\tx", "0\t7\tx"])
        with pytest.raises(GraphDataError, match=r"edges\.tsv:2"):
            load_graph(nodes, edges)

    @pytest.mark.parametrize(
        "lines",
        [
            ["0\ta", "0\tb"],  # duplicate id
            ["0\ta", "2\tb"],  # gap in ids
            ["x\ta"],  # not an integer
            ["0"],  # missing type
        ],
    )
    def test_malformed_nodes(self, write_lines, lines):
        with pytest.raises(GraphDataError):
            load_graph(write_lines("nodes.tsv", lines), write_lines("edges.tsv", []))

    def test_invalid_utf8_reports_line(self, write_lines):
        nodes = write_lines("nodes.tsv", ["0\ta", "1\tb"])
        with nodes.open("ab") as handle:
            handle.write(b"2\t\xff\xfe\n")
        with pytest.raises(GraphDataError, match=r"nodes\.tsv:3: invalid UTF-8"):
            load_graph(nodes, write_lines("edges.tsv", ["0\t1\tx"]))

    def test_missing_file_is_named(self, write_lines, tmp_path):
        nodes = write_lines("nodes.tsv", ["0\ta"])
        with pytest.raises(GraphDataError, match="missing_edges.tsv"):
            load_graph(nodes, tmp_path / "missing_edges.tsv")

    def test_features(self, bibliographic, write_lines):
        nodes, edges, _ = bibliographic
        features = write_lines("features.tsv", ["0\t1 0", "1\t0 1", "2\t0.5 0.5", "3\t1e-3 2"])
        g = load_graph(nodes, edges, features_path=features)
        assert g.features.shape == (4, 2)
        assert g.features[3, 0] == 1e-3

    def test_feature_dimension_mismatch(self, bibliographic, write_lines):
        nodes, edges, _ = bibliographic
        features = write_lines("features.tsv", ["0\t1 0", "1\t0 1 2", "2\t0 0", "3\t1 1"])
        with pytest.raises(GraphDataError, match=r"features\.tsv:2"):
            load_graph(nodes, edges, features_path=features)

    def test_features_must_cover_every_node(self, bibliographic, write_lines):
        nodes, edges, _ = bibliographic
        with pytest.raises(GraphDataError):
            load_graph(nodes, edges, features_path=write_lines("features.tsv", ["0\t1"]))

    def test_label_for_unknown_node(self, bibliographic, write_lines):
        nodes, edges, _ = bibliographic
        with pytest.raises(GraphDataError):
            load_graph(nodes, edges, labels_path=write_lines("labels.tsv", ["9\tdb"]))


class TestDecompose:
    def test_one_symmetric_subnetwork_per_relation(self, tiny_graph):
        subs = decompose(tiny_graph)
        assert [s.edge_type_id for s in subs] == [0, 1]
        for sub in subs:
            dense = sub.adjacency.to_dense()
            np.testing.assert_array_equal(dense, dense.T)
        # relation 0 links the targets to nodes 4 and 5 only
        np.testing.assert_array_equal(subs[0].participating, [True] * 6 + [False] * 2)
        np.testing.assert_array_equal(subs[1].participating, [True] * 4 + [False] * 2 + [True] * 2)

    def test_edges_are_partitioned(self, synth_graph):
        subs = decompose(synth_graph)
        assert sum(s.adjacency.nnz for s in subs) == 2 * synth_graph.num_edges


class TestFeatures:
    def test_onehot_modes(self, tiny_graph):
        np.testing.assert_array_equal(build_features(tiny_graph, "onehot-id"), np.eye(8))
        by_type = build_features(tiny_graph, "onehot-type")
        assert by_type.shape == (8, 3)
        np.testing.assert_array_equal(by_type.argmax(axis=1), tiny_graph.node_type_of)

    def test_provided_needs_features(self, tiny_graph):
        with pytest.raises(GraphDataError):
            build_features(tiny_graph, "provided")

    def test_auto_mode(self, tiny_graph):
        assert resolve_feature_mode(tiny_graph, "auto", onehot_id_max_nodes=100) == "onehot-id"
        assert resolve_feature_mode(tiny_graph, "auto", onehot_id_max_nodes=4) == "onehot-type"
        assert resolve_feature_mode(tiny_graph, "onehot-type", onehot_id_max_nodes=100) == "onehot-type"


class TestSplits:
    def test_partition_of_labeled_nodes(self, synth_graph):
        split = make_splits(synth_graph, 9, 6, seed=4)
        assert len(split.train_ids) == 9
        assert len(split.val_ids) == 6
        union = np.concatenate([split.train_ids, split.val_ids, split.test_ids])
        assert len(set(union)) == len(union)
        np.testing.assert_array_equal(np.sort(union), synth_graph.labeled_ids())
        for ids in (split.train_ids, split.val_ids, split.test_ids):
            np.testing.assert_array_equal(ids, np.sort(ids))

    def test_deterministic_per_seed(self, synth_graph):
        a = make_splits(synth_graph, 10, 5, seed=1)
        b = make_splits(synth_graph, 10, 5, seed=1)
        c = make_splits(synth_graph, 10, 5, seed=2)
        np.testing.assert_array_equal(a.train_ids, b.train_ids)
        assert not np.array_equal(a.train_ids, c.train_ids)

    def test_too_many_requested(self, tiny_graph):
        with pytest.raises(GraphDataError):
            make_splits(tiny_graph, 3, 2, seed=0)

    def test_split_sizes(self):
        assert split_sizes(100, None, None, 0.1, 0.05) == (10, 5)
        assert split_sizes(100, 20, None, 0.1, 0.05) == (20, 5)
        assert split_sizes(100, 0, 0, 0.1, 0.05) == (0, 0)


class TestGraphTensors:
    def test_operators(self, tiny_graph):
        tensors = to_graph_tensors(tiny_graph, np.eye(8))
        assert tensors.num_channels == 2
        assert tensors.input_dim == 8
        for op, participating in zip(tensors.channel_operators, tensors.participating):
            sums = op.row_sums()
            np.testing.assert_allclose(sums[participating], 1.0)
            np.testing.assert_array_equal(sums[~participating], 0.0)
        np.testing.assert_allclose(tensors.global_operator.row_sums(), 1.0)


def test_write_then_load_preserves_graph(synth_graph, tmp_path):
    paths = write_graph(synth_graph, tmp_path / "data")
    loaded = load_graph(paths["nodes_path"], paths["edges_path"], labels_path=paths["labels_path"])
    assert loaded.num_nodes == synth_graph.num_nodes
    np.testing.assert_array_equal(loaded.node_type_of, synth_graph.node_type_of)
    np.testing.assert_array_equal(loaded.edge_list, synth_graph.edge_list)
    assert loaded.labels == synth_graph.labels
    assert loaded.edge_type_names == synth_graph.edge_type_names
