#!/usr/bin/env python
"""
synthetic.py
------------

Planted-partition generator for heterogeneous graphs, used as a desk-scale
stand-in for real academic/business/movie networks.

The generated graph has one labeled "target" node type and `num_aux_types`
auxiliary node types. Every auxiliary node is affiliated with a class, and
each auxiliary type contributes one edge type (target-auxN). A target-auxiliary
pair is connected with probability `intra_edge_prob` when their classes match
and `inter_edge_prob` otherwise.

Usage (as a module):
--------------------
from data.synthetic import synth_hin

graph = synth_hin(3, 200, 2, 0.05, 0.005, seed=1)
"""

import json
from pathlib import Path

import numpy as np

from core.config import SynthConfig
from core.logging_config import logger
from data.data_loader import HeteroGraph, write_graph


def synth_hin(
    num_classes: int,
    nodes_per_class: int,
    num_aux_types: int,
    intra_edge_prob: float,
    inter_edge_prob: float,
    seed: int,
    aux_per_class: int | None = None,
) -> HeteroGraph:
    """
    Generates a labeled heterogeneous graph. `aux_per_class` defaults to half of
    `nodes_per_class` so that most targets keep same-class neighbours in every
    relation at the default edge probabilities.
    """
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    if num_aux_types < 1:
        raise ValueError("num_aux_types must be >= 1")
    for name, prob in (("intra_edge_prob", intra_edge_prob), ("inter_edge_prob", inter_edge_prob)):
        if not 0.0 <= prob <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {prob}")
    if intra_edge_prob <= inter_edge_prob:
        logger.warning("intra_edge_prob <= inter_edge_prob: the generated graph carries no class signal")
    aux_per_class = aux_per_class or max(1, nodes_per_class // 2)

    rng = np.random.default_rng(seed)
    num_targets = num_classes * nodes_per_class
    target_class = np.repeat(np.arange(num_classes), nodes_per_class)
    aux_class = np.repeat(np.arange(num_classes), aux_per_class)
    num_aux = len(aux_class)

    node_types = [np.zeros(num_targets, dtype=np.int64)]
    edge_blocks = []
    offset = num_targets
    for aux_type in range(num_aux_types):
        same_class = target_class[:, None] == aux_class[None, :]
        prob = np.where(same_class, intra_edge_prob, inter_edge_prob)
        src, dst = np.nonzero(rng.random((num_targets, num_aux)) < prob)
        edge_blocks.append(np.column_stack([src, dst + offset, np.full(len(src), aux_type)]))
        node_types.append(np.full(num_aux, aux_type + 1, dtype=np.int64))
        offset += num_aux

    graph = HeteroGraph(
        num_nodes=offset,
        node_type_of=np.concatenate(node_types),
        edge_list=np.concatenate(edge_blocks).astype(np.int64),
        node_type_names=("target",) + tuple(f"aux{a}" for a in range(num_aux_types)),
        edge_type_names=tuple(f"target-aux{a}" for a in range(num_aux_types)),
        labels={int(i): int(c) for i, c in enumerate(target_class)},
        class_names=tuple(f"class{c}" for c in range(num_classes)),
    )
    logger.debug(f"Generated synthetic graph with {graph.num_nodes} nodes and {graph.num_edges} edges.")
    return graph


def synth_from_config(config: SynthConfig) -> HeteroGraph:
    return synth_hin(
        config.num_classes,
        config.nodes_per_class,
        config.num_aux_types,
        config.intra_edge_prob,
        config.inter_edge_prob,
        config.seed,
        aux_per_class=config.aux_per_class,
    )


def tiny_hin() -> HeteroGraph:
    """
    Fixed 8-node graph with two relations: 4 labeled targets in 2 classes and
    2 auxiliary nodes per relation, each linked to the targets of its class.
    """
    return synth_hin(2, 2, 2, intra_edge_prob=1.0, inter_edge_prob=0.0, seed=0, aux_per_class=1)


def write_synthetic(graph: HeteroGraph, config: SynthConfig, out_dir: Path) -> dict[str, Path]:
    """Writes the graph files plus `manifest.json` recording the generation parameters."""
    paths = write_graph(graph, out_dir)
    manifest = {
        "generator": config.model_dump(),
        "num_nodes": graph.num_nodes,
        "num_edges": graph.num_edges,
        "node_types": list(graph.node_type_names),
        "edge_types": list(graph.edge_type_names),
        "classes": list(graph.class_names),
    }
    paths["manifest_path"] = out_dir / "manifest.json"
    paths["manifest_path"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"Wrote synthetic graph to {out_dir}.")
    return paths
