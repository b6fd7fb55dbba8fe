"""
checkpoint.py
-------------

Text checkpoints: one JSON document holding the model configuration, the
channel count T, input dimension D, class count C and every parameter matrix
as name -> {shape, row-major values with 17 significant digits}. Seventeen
digits identify a double uniquely, so loading is bit-exact.
"""

import json
from pathlib import Path

import numpy as np

from core.config import ModelConfig
from core.exceptions import GraphDataError
from core.helper import format_row
from model.gahne import ModelParams, param_shapes

CHECKPOINT_FORMAT = "gahne-checkpoint/1"


def dumps_checkpoint(params: ModelParams, config: ModelConfig) -> str:
    document = {
        "format": CHECKPOINT_FORMAT,
        "config": config.model_dump(),
        "num_channels": params.num_channels,
        "input_dim": params.input_dim,
        "num_classes": params.num_classes,
        "params": {
            name: {"shape": list(value.shape), "values": format_row(value.ravel())}
            for name, value in params.tensors.items()
        },
    }
    return json.dumps(document, indent=1) + "\n"


def save_checkpoint(path: Path, params: ModelParams, config: ModelConfig) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_checkpoint(params, config), encoding="utf-8")


def load_checkpoint(path: Path) -> tuple[ModelParams, ModelConfig]:
    if not path.exists():
        raise GraphDataError("checkpoint not found", path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
        if document.get("format") != CHECKPOINT_FORMAT:
            raise GraphDataError(f"unsupported checkpoint format {document.get('format')!r}", path)
        config = ModelConfig(**document["config"])
        tensors = {}
        for name, entry in document["params"].items():
            values = np.array([float(token) for token in entry["values"].split()], dtype=np.float64)
            tensors[name] = values.reshape(entry["shape"])
        params = ModelParams(tensors, int(document["num_channels"]), int(document["input_dim"]), int(document["num_classes"]))
    except (KeyError, ValueError, TypeError) as e:
        raise GraphDataError(f"malformed checkpoint: {e}", path) from e
    expected = param_shapes(config, params.num_channels, params.input_dim, params.num_classes)
    if {k: v.shape for k, v in tensors.items()} != expected:
        raise GraphDataError("checkpoint parameters do not match its configuration", path)
    return params, config
