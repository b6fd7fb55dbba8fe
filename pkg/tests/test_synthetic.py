import json

import numpy as np
import pytest

from core.config import SynthConfig
from data.synthetic import synth_from_config, synth_hin, tiny_hin, write_synthetic


class TestSynthHin:
    def test_sizes_and_types(self, synth_graph):
        # 90 targets plus 2 auxiliary types x 3 classes x 15 nodes
        assert synth_graph.num_nodes == 180
        assert synth_graph.node_type_names == ("target", "aux0", "aux1")
        assert synth_graph.edge_type_names == ("target-aux0", "target-aux1")
        assert synth_graph.num_classes == 3
        assert len(synth_graph.labels) == 90
        synth_graph.check_heterogeneous()

    def test_edges_join_targets_to_their_relation_type(self, synth_graph):
        src, dst, edge_type = synth_graph.edge_list.T
        assert (synth_graph.node_type_of[src] == 0).all()
        np.testing.assert_array_equal(synth_graph.node_type_of[dst], edge_type + 1)

    def test_same_seed_same_graph(self):
        a = synth_hin(2, 20, 3, 0.2, 0.02, seed=9)
        b = synth_hin(2, 20, 3, 0.2, 0.02, seed=9)
        np.testing.assert_array_equal(a.edge_list, b.edge_list)

    def test_planted_classes_dominate(self, synth_graph):
        aux_class = np.repeat(np.arange(3), 15)
        src, dst, edge_type = synth_graph.edge_list.T
        offset = 90 + edge_type * 45
        same = np.array([synth_graph.labels[s] for s in src]) == aux_class[dst - offset]
        assert same.mean() > 0.8

    @pytest.mark.parametrize("kwargs", [{"num_aux_types": 0}, {"num_classes": 0}, {"intra_edge_prob": 1.5}])
    def test_invalid_arguments(self, kwargs):
        args = {"num_classes": 2, "nodes_per_class": 5, "num_aux_types": 1, "intra_edge_prob": 0.5, "inter_edge_prob": 0.1, "seed": 0}
        args.update(kwargs)
        with pytest.raises(ValueError):
            synth_hin(**args)

    def test_tiny_graph_is_fixed(self):
        g = tiny_hin()
        assert g.num_nodes == 8
        assert g.num_edge_types == 2
        expected = [[0, 4, 0], [1, 4, 0], [2, 5, 0], [3, 5, 0], [0, 6, 1], [1, 6, 1], [2, 7, 1], [3, 7, 1]]
        np.testing.assert_array_equal(g.edge_list, expected)
        assert g.labels == {0: 0, 1: 0, 2: 1, 3: 1}


def test_write_synthetic_is_reproducible(tmp_path):
    config = SynthConfig(num_classes=2, nodes_per_class=15, num_aux_types=2, intra_edge_prob=0.3, inter_edge_prob=0.02, seed=5)
    first = write_synthetic(synth_from_config(config), config, tmp_path / "a")
    second = write_synthetic(synth_from_config(config), config, tmp_path / "b")
    assert set(first) == {"nodes_path", "edges_path", "labels_path", "manifest_path"}
    for key in first:
        assert first[key].read_bytes() == second[key].read_bytes()
    manifest = json.loads(first["manifest_path"].read_text())
    assert manifest["generator"]["seed"] == 5
    assert manifest["edge_types"] == ["target-aux0", "target-aux1"]
