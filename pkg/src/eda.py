#!/usr/bin/env python
"""
eda.py
------

Dataset statistics for a heterogeneous graph: nodes per node type, edges per
edge type, labeled nodes per class and the sizes of a train/val/test split,
in the layout of a dataset summary table.

Usage
-----
python src/main.py stats --data-dir data/synth
"""

import numpy as np
import pandas as pd

from data.data_loader import HeteroGraph, Split


def graph_statistics(g: HeteroGraph, split: Split | None = None) -> pd.DataFrame:
    """One row per counted quantity: (category, name, count)."""
    rows = [{"category": "total", "name": "nodes", "count": g.num_nodes}, {"category": "total", "name": "edges", "count": g.num_edges}]

    node_counts = np.bincount(g.node_type_of, minlength=g.num_node_types)
    rows += [{"category": "node_type", "name": name, "count": int(n)} for name, n in zip(g.node_type_names, node_counts)]

    edge_counts = np.bincount(g.edge_list[:, 2], minlength=g.num_edge_types) if g.num_edges else np.zeros(g.num_edge_types, dtype=int)
    rows += [{"category": "edge_type", "name": name, "count": int(n)} for name, n in zip(g.edge_type_names, edge_counts)]

    if g.labels:
        class_counts = np.bincount(list(g.labels.values()), minlength=g.num_classes)
        rows += [{"category": "class", "name": name, "count": int(n)} for name, n in zip(g.class_names, class_counts)]
        rows.append({"category": "total", "name": "labeled", "count": len(g.labels)})

    if split is not None:
        for name, ids in (("train", split.train_ids), ("val", split.val_ids), ("test", split.test_ids)):
            rows.append({"category": "split", "name": name, "count": len(ids)})

    return pd.DataFrame(rows, columns=["category", "name", "count"])


def describe_graph(g: HeteroGraph, split: Split | None = None) -> pd.DataFrame:
    """Prints the statistics table and returns it."""
    stats = graph_statistics(g, split)
    print("\n--- Dataset Statistics ---")
    print(stats.to_string(index=False))
    if split is not None and g.labels:
        labeled = len(g.labels)
        print(f"\nTrain {len(split.train_ids)} ({len(split.train_ids) / labeled:.1%}), "
              f"val {len(split.val_ids)} ({len(split.val_ids) / labeled:.1%}), test {len(split.test_ids)}")
    print("--------------------------")
    return stats
