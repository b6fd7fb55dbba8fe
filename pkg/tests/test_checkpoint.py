import json

import numpy as np
import pytest

from core.exceptions import GraphDataError
from model.checkpoint import load_checkpoint, save_checkpoint
from model.gahne import forward, init_params


@pytest.fixture
def saved(tmp_path, small_config):
    params = init_params(small_config, 2, 4, 2, seed=12)
    params.tensors["fusion.b"] += np.random.default_rng(0).normal(size=(1, 4)) * 1e-7
    path = tmp_path / "checkpoint.json"
    save_checkpoint(path, params, small_config)
    return path, params


def test_round_trip_is_bit_exact(saved, small_config, tiny_tensors):
    path, params = saved
    loaded, config = load_checkpoint(path)
    assert config == small_config
    assert loaded.names() == params.names()
    for name in params.names():
        np.testing.assert_array_equal(loaded[name], params[name])
    np.testing.assert_array_equal(
        forward(tiny_tensors, loaded, config).probabilities,
        forward(tiny_tensors, params, small_config).probabilities,
    )


def test_missing_file(tmp_path):
    with pytest.raises(GraphDataError):
        load_checkpoint(tmp_path / "nope.json")


def test_unknown_format(saved):
    path, _ = saved
    document = json.loads(path.read_text())
    document["format"] = "something-else"
    path.write_text(json.dumps(document))
    with pytest.raises(GraphDataError, match="unsupported"):
        load_checkpoint(path)


def test_parameters_must_match_config(saved):
    path, _ = saved
    document = json.loads(path.read_text())
    document["config"]["hidden_dims"] = [4, 5]
    path.write_text(json.dumps(document))
    with pytest.raises(GraphDataError):
        load_checkpoint(path)
