from data.data_loader import make_splits
from eda import describe_graph, graph_statistics


def _counts(stats, category):
    rows = stats[stats["category"] == category]
    return dict(zip(rows["name"], rows["count"]))


def test_counts_per_type_and_class(tiny_graph):
    stats = graph_statistics(tiny_graph)
    assert _counts(stats, "total") == {"nodes": 8, "edges": 8, "labeled": 4}
    assert _counts(stats, "node_type") == {"target": 4, "aux0": 2, "aux1": 2}
    assert _counts(stats, "edge_type") == {"target-aux0": 4, "target-aux1": 4}
    assert _counts(stats, "class") == {"class0": 2, "class1": 2}
    assert _counts(stats, "split") == {}


def test_split_sizes_are_listed(synth_graph, capsys):
    split = make_splits(synth_graph, 9, 4, seed=0)
    stats = describe_graph(synth_graph, split)
    assert _counts(stats, "split") == {"train": 9, "val": 4, "test": 77}
    assert "Dataset Statistics" in capsys.readouterr().out
