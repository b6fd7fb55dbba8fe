#!/usr/bin/env python
"""
data_loader.py
----------------

Heterogeneous graph data model and file ingestion.

A heterogeneous information network is stored as typed nodes, typed edges and
optional features/labels. This module parses the tab-separated dataset files,
decomposes the graph into one single-relation sub-network per edge type,
builds input features, draws train/validation/test splits and bundles the
propagation operators consumed by the model.

File formats (UTF-8, one record per line):
    nodes     <node_id>\t<node_type_name>
    edges     <src_id>\t<dst_id>\t<edge_type_name>
    features  <node_id>\t<f_1> ... <f_D>
    labels    <node_id>\t<class_name>

Usage (as a module):
--------------------
from data.data_loader import load_graph, decompose, make_splits

graph = load_graph("nodes.tsv", "edges.tsv", labels_path="labels.tsv")
sub_networks = decompose(graph)
split = make_splits(graph, n_train=400, n_val=200, seed=0)
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Literal

import numpy as np
import numpy.typing as npt

from core.exceptions import GraphDataError
from core.helper import format_row
from core.logging_config import logger
from linalg.sparse import DenseMatrix, SparseMatrix, csr_from_edges, row_normalize

FeatureSource = Literal["provided", "onehot-id", "onehot-type"]


@dataclass(frozen=True)
class HeteroGraph:
    """
    Typed nodes and typed edges. `edge_list` rows are (src, dst, edge_type_id);
    `labels` maps labeled node ids to contiguous class ids in [0, C).
    """

    num_nodes: int
    node_type_of: npt.NDArray[np.int64]
    edge_list: npt.NDArray[np.int64]
    node_type_names: tuple[str, ...]
    edge_type_names: tuple[str, ...]
    features: DenseMatrix | None = None
    labels: dict[int, int] | None = None
    class_names: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.node_type_of.shape != (self.num_nodes,):
            raise GraphDataError(f"node_type_of has shape {self.node_type_of.shape}, expected ({self.num_nodes},)")
        if self.edge_list.ndim != 2 or self.edge_list.shape[1] != 3:
            raise GraphDataError("edge_list must have rows (src, dst, edge_type_id)")
        if len(self.edge_list) and self.edge_list[:, :2].max() >= self.num_nodes:
            raise GraphDataError("an edge references a node id outside [0, num_nodes)")
        if self.features is not None and self.features.shape[0] != self.num_nodes:
            raise GraphDataError(f"features have {self.features.shape[0]} rows for {self.num_nodes} nodes")
        if self.labels:
            classes = set(self.labels.values())
            if classes != set(range(len(classes))):
                raise GraphDataError("class ids must cover a contiguous range [0, C)")

    @property
    def num_edges(self) -> int:
        return int(len(self.edge_list))

    @property
    def num_edge_types(self) -> int:
        return len(self.edge_type_names)

    @property
    def num_node_types(self) -> int:
        return len(self.node_type_names)

    @property
    def num_classes(self) -> int:
        return len(set(self.labels.values())) if self.labels else 0

    @property
    def is_heterogeneous(self) -> bool:
        return self.num_node_types + self.num_edge_types > 2

    def check_heterogeneous(self) -> None:
        if not self.is_heterogeneous:
            raise GraphDataError(
                f"graph has {self.num_node_types} node types and {self.num_edge_types} edge types; "
                "a heterogeneous network needs more than two types in total"
            )

    def labeled_ids(self) -> npt.NDArray[np.int64]:
        return np.array(sorted(self.labels), dtype=np.int64) if self.labels else np.empty(0, dtype=np.int64)

    def label_array(self) -> npt.NDArray[np.int64]:
        """Class id per node, -1 for unlabeled nodes."""
        out = np.full(self.num_nodes, -1, dtype=np.int64)
        for node_id, class_id in (self.labels or {}).items():
            out[node_id] = class_id
        return out


@dataclass(frozen=True)
class SubNetwork:
    """Edges of one relation type, symmetrized and indexed over all N nodes."""

    edge_type_id: int
    adjacency: SparseMatrix
    participating: npt.NDArray[np.bool_]


@dataclass(frozen=True)
class Split:
    train_ids: npt.NDArray[np.int64]
    val_ids: npt.NDArray[np.int64]
    test_ids: npt.NDArray[np.int64]
    seed: int


@dataclass(frozen=True)
class GraphTensors:
    """Everything the forward pass reads: X, one P_t per channel, whole-graph P."""

    features: DenseMatrix
    channel_operators: tuple[SparseMatrix, ...]
    global_operator: SparseMatrix
    participating: tuple[npt.NDArray[np.bool_], ...]

    @property
    def num_nodes(self) -> int:
        return int(self.features.shape[0])

    @property
    def num_channels(self) -> int:
        return len(self.channel_operators)

    @property
    def input_dim(self) -> int:
        return int(self.features.shape[1])


def read_records(path: Path, min_fields: int) -> Iterator[tuple[int, list[str]]]:
    """Yields (line number, tab-separated fields) for every non-blank line."""
    if not path.exists():
        raise GraphDataError("file not found", path)
    with path.open("rb") as handle:
        for line_number, raw in enumerate(handle, start=1):
            try:
                line = raw.decode("utf-8").rstrip("\n").rstrip("\r")
            except UnicodeDecodeError as e:
                raise GraphDataError(f"invalid UTF-8 ({e.reason})", path, line_number) from None
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) < min_fields:
                raise GraphDataError(f"expected {min_fields} tab-separated fields, got {len(fields)}", path, line_number)
            yield line_number, fields


def parse_node_id(text: str, path: Path, line_number: int) -> int:
    try:
        value = int(text)
    except ValueError:
        raise GraphDataError(f"'{text}' is not an integer node id", path, line_number) from None
    if value < 0:
        raise GraphDataError(f"negative node id {value}", path, line_number)
    return value


def _intern(name: str, table: dict[str, int]) -> int:
    """Assigns ids in first-appearance order."""
    if name not in table:
        table[name] = len(table)
    return table[name]


def load_graph(
    nodes_path: Path | str,
    edges_path: Path | str,
    features_path: Path | str | None = None,
    labels_path: Path | str | None = None,
) -> HeteroGraph:
    """Parses the dataset files into a validated HeteroGraph."""
    nodes_path, edges_path = Path(nodes_path), Path(edges_path)

    node_types: dict[str, int] = {}
    type_by_id: dict[int, int] = {}
    for line_number, fields in read_records(nodes_path, 2):
        node_id = parse_node_id(fields[0], nodes_path, line_number)
        if node_id in type_by_id:
            raise GraphDataError(f"duplicate node id {node_id}", nodes_path, line_number)
        type_by_id[node_id] = _intern(fields[1].strip(), node_types)
    num_nodes = len(type_by_id)
    if set(type_by_id) != set(range(num_nodes)):
        raise GraphDataError(f"node ids must be the consecutive integers 0..{num_nodes - 1}", nodes_path)
    node_type_of = np.array([type_by_id[i] for i in range(num_nodes)], dtype=np.int64)

    edge_types: dict[str, int] = {}
    edges: list[tuple[int, int, int]] = []
    for line_number, fields in read_records(edges_path, 3):
        src = parse_node_id(fields[0], edges_path, line_number)
        dst = parse_node_id(fields[1], edges_path, line_number)
        for node_id in (src, dst):
            if node_id >= num_nodes:
                raise GraphDataError(f"edge references unknown node id {node_id}", edges_path, line_number)
        edges.append((src, dst, _intern(fields[2].strip(), edge_types)))
    edge_list = np.array(edges, dtype=np.int64).reshape(-1, 3)

    features = _load_features(Path(features_path), num_nodes) if features_path is not None else None
    labels, class_names = _load_labels(Path(labels_path), num_nodes) if labels_path is not None else (None, ())

    graph = HeteroGraph(
        num_nodes=num_nodes,
        node_type_of=node_type_of,
        edge_list=edge_list,
        node_type_names=tuple(node_types),
        edge_type_names=tuple(edge_types),
        features=features,
        labels=labels,
        class_names=class_names,
    )
    logger.info(
        f"Loaded graph: {graph.num_nodes} nodes, {graph.num_edges} edges, "
        f"{graph.num_node_types} node types, {graph.num_edge_types} edge types, "
        f"{len(labels or {})} labeled nodes"
    )
    return graph


def _load_features(path: Path, num_nodes: int) -> DenseMatrix:
    rows: dict[int, list[float]] = {}
    dim: int | None = None
    for line_number, fields in read_records(path, 2):
        node_id = parse_node_id(fields[0], path, line_number)
        if node_id >= num_nodes:
            raise GraphDataError(f"features for unknown node id {node_id}", path, line_number)
        if node_id in rows:
            raise GraphDataError(f"duplicate feature row for node {node_id}", path, line_number)
        try:
            values = [float(token) for token in fields[1].split()]
        except ValueError:
            raise GraphDataError("feature values must be decimal floats", path, line_number) from None
        if dim is None:
            dim = len(values)
        if len(values) != dim or dim == 0:
            raise GraphDataError(f"feature row has {len(values)} values, expected {dim}", path, line_number)
        rows[node_id] = values
    if len(rows) != num_nodes:
        raise GraphDataError(f"features cover {len(rows)} of {num_nodes} nodes", path)
    return np.array([rows[i] for i in range(num_nodes)], dtype=np.float64)


def _load_labels(path: Path, num_nodes: int) -> tuple[dict[int, int], tuple[str, ...]]:
    classes: dict[str, int] = {}
    labels: dict[int, int] = {}
    for line_number, fields in read_records(path, 2):
        node_id = parse_node_id(fields[0], path, line_number)
        if node_id >= num_nodes:
            raise GraphDataError(f"label for unknown node id {node_id}", path, line_number)
        if node_id in labels:
            raise GraphDataError(f"duplicate label for node {node_id}", path, line_number)
        labels[node_id] = _intern(fields[1].strip(), classes)
    return labels, tuple(classes)


def write_graph(graph: HeteroGraph, out_dir: Path) -> dict[str, Path]:
    """Writes the graph in the dataset file format; returns the written paths."""
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"nodes_path": out_dir / "nodes.tsv", "edges_path": out_dir / "edges.tsv"}
    with paths["nodes_path"].open("w", encoding="utf-8", newline="\n") as handle:
        for node_id, type_id in enumerate(graph.node_type_of):
            handle.write(f"{node_id}\t{graph.node_type_names[type_id]}\n")
    with paths["edges_path"].open("w", encoding="utf-8", newline="\n") as handle:
        for src, dst, type_id in graph.edge_list:
            handle.write(f"{src}\t{dst}\t{graph.edge_type_names[type_id]}\n")
    if graph.features is not None:
        paths["features_path"] = out_dir / "features.tsv"
        with paths["features_path"].open("w", encoding="utf-8", newline="\n") as handle:
            for node_id, row in enumerate(graph.features):
                handle.write(f"{node_id}\t{format_row(row)}\n")
    if graph.labels is not None:
        paths["labels_path"] = out_dir / "labels.tsv"
        with paths["labels_path"].open("w", encoding="utf-8", newline="\n") as handle:
            for node_id in sorted(graph.labels):
                handle.write(f"{node_id}\t{graph.class_names[graph.labels[node_id]]}\n")
    return paths


def decompose(g: HeteroGraph) -> list[SubNetwork]:
    """One symmetrized sub-network per edge type, in edge-type-id order."""
    sub_networks = []
    for edge_type_id in range(g.num_edge_types):
        pairs = g.edge_list[g.edge_list[:, 2] == edge_type_id][:, :2]
        adjacency = csr_from_edges(pairs, g.num_nodes, g.num_nodes, symmetrize=True)
        sub_networks.append(SubNetwork(edge_type_id, adjacency, adjacency.nonzero_rows()))
    return sub_networks


def build_features(g: HeteroGraph, mode: FeatureSource) -> DenseMatrix:
    if mode == "provided":
        if g.features is None:
            raise GraphDataError("feature mode 'provided' requires a features file")
        return g.features
    if mode == "onehot-id":
        return np.eye(g.num_nodes, dtype=np.float64)
    if mode == "onehot-type":
        features = np.zeros((g.num_nodes, g.num_node_types), dtype=np.float64)
        features[np.arange(g.num_nodes), g.node_type_of] = 1.0
        return features
    raise ValueError(f"unknown feature mode '{mode}'")


def resolve_feature_mode(g: HeteroGraph, mode: str, onehot_id_max_nodes: int) -> FeatureSource:
    """
    `auto` picks provided features when present. Otherwise identity features
    are used for graphs up to `onehot_id_max_nodes` nodes: type indicators are
    constant over each node type, so propagating them carries no class signal.
    """
    if mode != "auto":
        return mode  # type: ignore[return-value]
    if g.features is not None:
        return "provided"
    return "onehot-id" if g.num_nodes <= onehot_id_max_nodes else "onehot-type"


def make_splits(g: HeteroGraph, n_train: int, n_val: int, seed: int) -> Split:
    """Uniform random partition of the labeled nodes; the remainder is the test set."""
    labeled = g.labeled_ids()
    if n_train < 0 or n_val < 0 or n_train + n_val > len(labeled):
        raise GraphDataError(
            f"cannot draw {n_train} training and {n_val} validation nodes from {len(labeled)} labeled nodes"
        )
    order = np.random.default_rng(seed).permutation(labeled)
    return Split(
        train_ids=np.sort(order[:n_train]),
        val_ids=np.sort(order[n_train : n_train + n_val]),
        test_ids=np.sort(order[n_train + n_val :]),
        seed=seed,
    )


def split_sizes(num_labeled: int, n_train: int | None, n_val: int | None, train_ratio: float, val_ratio: float) -> tuple[int, int]:
    """Explicit counts win over ratios."""
    train = n_train if n_train is not None else int(round(train_ratio * num_labeled))
    val = n_val if n_val is not None else int(round(val_ratio * num_labeled))
    return train, val


def whole_graph_adjacency(g: HeteroGraph) -> SparseMatrix:
    return csr_from_edges(g.edge_list[:, :2], g.num_nodes, g.num_nodes, symmetrize=True)


def to_graph_tensors(g: HeteroGraph, features: DenseMatrix) -> GraphTensors:
    """Row-normalized operators for every relation plus the whole graph."""
    sub_networks = decompose(g)
    return GraphTensors(
        features=np.ascontiguousarray(features, dtype=np.float64),
        channel_operators=tuple(row_normalize(sub.adjacency) for sub in sub_networks),
        global_operator=row_normalize(whole_graph_adjacency(g)),
        participating=tuple(sub.participating for sub in sub_networks),
    )
