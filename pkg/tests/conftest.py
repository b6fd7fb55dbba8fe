from pathlib import Path

import numpy as np
import pytest

from core.config import ModelConfig
from data.data_loader import to_graph_tensors
from data.synthetic import synth_hin, tiny_hin


@pytest.fixture
def tiny_graph():
    return tiny_hin()


@pytest.fixture
def tiny_tensors(tiny_graph):
    features = np.random.default_rng(0).normal(size=(tiny_graph.num_nodes, 4))
    return to_graph_tensors(tiny_graph, features)


@pytest.fixture
def small_config():
    return ModelConfig(hidden_dims=[4, 4], attention_dim=3, dropout_rate=0.0)


@pytest.fixture
def synth_graph():
    return synth_hin(3, 30, 2, intra_edge_prob=0.3, inter_edge_prob=0.01, seed=3)


@pytest.fixture
def write_lines(tmp_path):
    """Writes `lines` to tmp_path/name and returns the path."""

    def write(name: str, lines: list[str]) -> Path:
        path = tmp_path / name
        path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        return path

    return write
