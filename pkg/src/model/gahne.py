"""
gahne.py
--------

Graph-aggregated heterogeneous network embedding, expressed as tape
constructions over a named parameter set.

Pipeline for layers l = 1..m:
    H_t = ReLU(sum_{k=1..K} P_t^k Z^{(l-1)} Theta_t^{(l)})   one channel per relation
    Z^{(l)} = aggregate(H_1..H_T)                            shared input of layer l+1
with Z^{(0)} = X. A whole-graph branch applies the same convolution with the
whole-graph operator; its output is concatenated with Z^{(m)} and fused by
E = ReLU(E_f W_fc^T + b_fc). Class probabilities are F = softmax(E Theta').

Ablation switches on ModelConfig:
    aggregator=mean       channel mean instead of a learned aggregator
    aggregator=single     keep one channel (single_channel)
    fusion_enabled=False  E = Z^{(m)}
    channels_enabled=False  Z^{(m)} comes from a second whole-graph branch

Parameter names follow `layer<l>.<part>.<leaf>` (`fusion.W`, `classifier.theta`
for the head); leaf `b` and `q` are exempt from weight decay.
"""

from dataclasses import dataclass, field

import numpy as np

from autodiff.tape import Tape
from core.config import ModelConfig
from core.exceptions import ConfigError, GraphDataError
from core.helper import make_rng
from data.data_loader import GraphTensors
from linalg.sparse import DenseMatrix, SparseMatrix

NO_DECAY_LEAVES = ("b", "q")


@dataclass
class ModelParams:
    tensors: dict[str, DenseMatrix]
    num_channels: int
    input_dim: int
    num_classes: int

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.tensors.items()}, self.num_channels, self.input_dim, self.num_classes)

    def __getitem__(self, name: str) -> DenseMatrix:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)


@dataclass
class ForwardOutput:
    probabilities: DenseMatrix  # F, N x C
    embeddings: DenseMatrix  # E, N x d^(m)
    channel_weights: list[DenseMatrix] = field(default_factory=list)  # mu per layer, attention only
    tape: Tape | None = None
    prob_node: int = -1
    param_ids: dict[str, int] = field(default_factory=dict)
    channel_nodes: list[dict[int, int]] = field(default_factory=list)  # per layer: channel -> H_t node


def is_decayed(name: str) -> bool:
    return name.rsplit(".", 1)[-1] not in NO_DECAY_LEAVES


def parameter_group(name: str) -> str:
    """Reporting group of a parameter, independent of layer and channel index."""
    parts = name.split(".")
    if parts[0] == "fusion":
        return "W_fc" if parts[1] == "W" else "b_fc"
    if parts[0] == "classifier":
        return "theta_out"
    part, leaf = parts[-2], parts[-1]
    if part.startswith("channel"):
        return "theta_t"
    if part == "attention":
        return leaf
    if part.startswith("gate"):
        return "W_gate"
    if part == "pool":
        return "W_pool" if leaf == "W" else "b_pool"
    if part == "global":
        return "theta_w"
    if part == "global2":
        return "theta_w2"
    raise KeyError(f"unknown parameter name '{name}'")


def active_channels(config: ModelConfig, num_channels: int) -> list[int]:
    if config.aggregator == "single":
        if config.single_channel >= num_channels:
            raise ConfigError(f"single_channel={config.single_channel} but the graph has {num_channels} channels")
        return [config.single_channel]
    return list(range(num_channels))


def attention_prefix(config: ModelConfig, layer: int) -> str:
    return "attention" if config.share_attention else f"layer{layer}.attention"


def param_shapes(config: ModelConfig, num_channels: int, input_dim: int, num_classes: int) -> dict[str, tuple[int, int]]:
    """Shapes of exactly the parameters the configured variant uses, in allocation order."""
    if num_channels < 1 and config.channels_enabled:
        raise ConfigError("the graph has no edge types to build channels from")
    dims = [input_dim] + list(config.hidden_dims)
    shapes: dict[str, tuple[int, int]] = {}
    for layer in range(1, config.num_layers + 1):
        d_in, d = dims[layer - 1], dims[layer]
        if config.channels_enabled:
            channels = active_channels(config, num_channels)
            for t in channels:
                shapes[f"layer{layer}.channel{t}.theta"] = (d_in, d)
            if config.aggregator == "attention":
                prefix = attention_prefix(config, layer)
                if f"{prefix}.q" not in shapes:
                    shapes[f"{prefix}.q"] = (config.attention_dim, 1)
                    shapes[f"{prefix}.W"] = (config.attention_dim, d)
                    shapes[f"{prefix}.b"] = (1, config.attention_dim)
            elif config.aggregator == "gated":
                for t in channels:
                    shapes[f"layer{layer}.gate{t}.W"] = (d, d)
            elif config.aggregator == "pooling":
                shapes[f"layer{layer}.pool.W"] = (d, d)
                shapes[f"layer{layer}.pool.b"] = (1, d)
        else:
            shapes[f"layer{layer}.global2.theta"] = (d_in, d)
        if config.fusion_enabled:
            shapes[f"layer{layer}.global.theta"] = (d_in, d)
    d_m = config.output_dim
    if config.fusion_enabled:
        shapes["fusion.W"] = (d_m, 2 * d_m)
        shapes["fusion.b"] = (1, d_m)
    shapes["classifier.theta"] = (d_m, num_classes)
    return shapes


def is_attention(name: str) -> bool:
    parts = name.split(".")
    return len(parts) >= 2 and parts[-2] == "attention"


def init_params(
    config: ModelConfig,
    num_channels: int,
    input_dim: int,
    num_classes: int,
    seed: int,
    score_nodes: int = 1,
) -> ModelParams:
    """
    Glorot-uniform weights, limit sqrt(6 / (fan_in + fan_out)). Biases start at
    zero; the attention vector q is sampled like a weight because q = 0 makes
    every channel score zero, then divided by `score_nodes` (the number of
    nodes a channel score sums over).

    Each parameter draws from its own stream keyed by its name, so two variants
    built with the same seed agree on every parameter they share.
    """
    if score_nodes < 1:
        raise ValueError("score_nodes must be >= 1")
    tensors = {}
    for name, shape in param_shapes(config, num_channels, input_dim, num_classes).items():
        if name.endswith(".b"):
            tensors[name] = np.zeros(shape)
            continue
        limit = np.sqrt(6.0 / (shape[0] + shape[1]))
        tensors[name] = make_rng(seed, "init", name).uniform(-limit, limit, size=shape)
        if is_attention(name) and name.endswith(".q"):
            tensors[name] /= score_nodes
    return ModelParams(tensors, num_channels, input_dim, num_classes)


def check_compatible(params: ModelParams, graph_tensors: GraphTensors, num_classes: int | None = None) -> None:
    if params.input_dim != graph_tensors.input_dim:
        raise GraphDataError(f"model expects {params.input_dim} input features, data has {graph_tensors.input_dim}")
    if params.num_channels != graph_tensors.num_channels:
        raise GraphDataError(f"model expects {params.num_channels} relations, data has {graph_tensors.num_channels}")
    if num_classes is not None and params.num_classes != num_classes:
        raise GraphDataError(f"model predicts {params.num_classes} classes, data has {num_classes}")


# --- building blocks ---


def channel_forward(tape: Tape, p: SparseMatrix, z_in: int, theta: int, conv_order: int) -> int:
    """ReLU(sum_{k=1..K} P^k Z Theta); the projection is applied before propagation."""
    if conv_order < 1:
        raise ValueError("conv_order must be >= 1")
    projected = tape.matmul(z_in, theta)
    powers = [tape.spmm_const(p, projected)]
    for _ in range(conv_order - 1):
        powers.append(tape.spmm_const(p, powers[-1]))
    return tape.relu(tape.add(powers))


def aggregate_attention(tape: Tape, channels: list[int], q: int, w: int, b: int) -> tuple[int, int]:
    """
    w_t = sum over all nodes of q^T tanh(W h_t + b); mu = softmax(w);
    Z = sum_t mu_t H_t. Returns (Z node, mu node of shape 1 x T).
    """
    scores = []
    for h in channels:
        hidden = tape.tanh(tape.add_bias_row(tape.matmul(h, w, transpose_b=True), b))
        scores.append(tape.sum_all(tape.matmul(hidden, q)))
    mu = tape.softmax_rows(tape.concat_cols(scores))

    num_nodes, dim = tape.value(channels[0]).shape
    num_channels = len(channels)
    # broadcast mu_t over an N x d block with constant selector matrices
    per_node = tape.matmul(tape.input(np.ones((num_nodes, 1)), name="ones"), mu)
    weighted = []
    for t, h in enumerate(channels):
        selector = np.zeros((num_channels, dim))
        selector[t] = 1.0
        mu_block = tape.matmul(per_node, tape.input(selector, name=f"select{t}"))
        weighted.append(tape.elemwise_mul(mu_block, h))
    return tape.add(weighted), mu


def aggregate_gated(tape: Tape, channels: list[int], gates: list[int]) -> int:
    """Z = sum_t sigmoid(H_t W'_t^T) * H_t, gates per node and dimension."""
    gated = []
    for h, w in zip(channels, gates):
        gate = tape.sigmoid(tape.matmul(h, w, transpose_b=True))
        gated.append(tape.elemwise_mul(gate, h))
    return tape.add(gated)


def aggregate_pooling(tape: Tape, channels: list[int], w: int, b: int) -> int:
    """Z = mean_t ReLU(H_t W_pool^T + b_pool), one affine map shared by all channels."""
    pooled = [tape.relu(tape.add_bias_row(tape.matmul(h, w, transpose_b=True), b)) for h in channels]
    return tape.mean_of_set(pooled)


def aggregate_mean(tape: Tape, channels: list[int]) -> int:
    return tape.mean_of_set(channels)


def _whole_graph_branch(
    tape: Tape,
    graph_tensors: GraphTensors,
    x: int,
    param_ids: dict[str, int],
    config: ModelConfig,
    key: str,
    rng: np.random.Generator | None,
) -> int:
    z = x
    for layer in range(1, config.num_layers + 1):
        z_in = tape.dropout(z, config.dropout_rate, rng)
        z = channel_forward(tape, graph_tensors.global_operator, z_in, param_ids[f"layer{layer}.{key}.theta"], config.conv_order)
    return z


def forward(
    graph_tensors: GraphTensors,
    params: ModelParams,
    config: ModelConfig,
    training: bool = False,
    dropout_seed: int = 0,
    tape: Tape | None = None,
    param_ids: dict[str, int] | None = None,
) -> ForwardOutput:
    """
    Records the whole model on a tape; dropout is active only when `training`.
    Callers that already placed the parameters on `tape` pass their node ids.
    """
    check_compatible(params, graph_tensors)
    expected = param_shapes(config, params.num_channels, params.input_dim, params.num_classes)
    if {k: v.shape for k, v in params.tensors.items()} != expected:
        raise ConfigError("parameters do not match the model configuration")

    tape = tape if tape is not None else Tape()
    if param_ids is None:
        param_ids = {name: tape.input(value, name=name) for name, value in params.tensors.items()}
    rng = np.random.default_rng(dropout_seed) if training and config.dropout_rate > 0 else None
    x = tape.input(graph_tensors.features, name="features")

    channel_weights: list[int] = []
    channel_nodes: list[dict[int, int]] = []
    if config.channels_enabled:
        channels = active_channels(config, params.num_channels)
        z = x
        for layer in range(1, config.num_layers + 1):
            z_in = tape.dropout(z, config.dropout_rate, rng)
            outputs = {
                t: channel_forward(
                    tape,
                    graph_tensors.channel_operators[t],
                    z_in,
                    param_ids[f"layer{layer}.channel{t}.theta"],
                    config.conv_order,
                )
                for t in channels
            }
            channel_nodes.append(outputs)
            h = [outputs[t] for t in channels]
            if config.aggregator == "attention":
                prefix = attention_prefix(config, layer)
                z, mu = aggregate_attention(tape, h, param_ids[f"{prefix}.q"], param_ids[f"{prefix}.W"], param_ids[f"{prefix}.b"])
                channel_weights.append(mu)
            elif config.aggregator == "gated":
                z = aggregate_gated(tape, h, [param_ids[f"layer{layer}.gate{t}.W"] for t in channels])
            elif config.aggregator == "pooling":
                z = aggregate_pooling(tape, h, param_ids[f"layer{layer}.pool.W"], param_ids[f"layer{layer}.pool.b"])
            elif config.aggregator == "mean":
                z = aggregate_mean(tape, h)
            else:
                z = h[0]
        z_channels = z
    else:
        z_channels = _whole_graph_branch(tape, graph_tensors, x, param_ids, config, "global2", rng)

    if config.fusion_enabled:
        z_global = _whole_graph_branch(tape, graph_tensors, x, param_ids, config, "global", rng)
        fused = tape.dropout(tape.concat_cols([z_channels, z_global]), config.dropout_rate, rng)
        fused = tape.matmul(fused, param_ids["fusion.W"], transpose_b=True)
        embeddings = tape.relu(tape.add_bias_row(fused, param_ids["fusion.b"]))
    else:
        embeddings = z_channels

    prob_node = tape.softmax_rows(tape.matmul(embeddings, param_ids["classifier.theta"]))
    return ForwardOutput(
        probabilities=tape.value(prob_node),
        embeddings=tape.value(embeddings),
        channel_weights=[tape.value(mu) for mu in channel_weights],
        tape=tape,
        prob_node=prob_node,
        param_ids=param_ids,
        channel_nodes=channel_nodes,
    )


def embed(graph_tensors: GraphTensors, params: ModelParams, config: ModelConfig) -> DenseMatrix:
    """Final embeddings E with dropout off."""
    return forward(graph_tensors, params, config, training=False).embeddings


def predict_labels(probabilities: DenseMatrix) -> np.ndarray:
    """Row-wise argmax; ties resolve to the lowest class id."""
    return np.argmax(probabilities, axis=1)
