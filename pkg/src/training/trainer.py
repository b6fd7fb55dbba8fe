"""
trainer.py
----------

Semi-supervised training of the GAHNE model.

Each epoch runs the forward pass with dropout on, takes the cross-entropy over
the training nodes (whole set, or shuffled labeled minibatches with the full
graph recomputed per batch), back-propagates through the tape and applies one
Adam step per batch. The model is then re-evaluated with dropout off on the
validation nodes. Training stops after `patience` consecutive epochs without
a lower validation loss and returns the parameters of the best epoch.

Usage (as a module):
--------------------
from training.trainer import train

params, history = train(graph_tensors, labels, split, model_config, train_config)
history.to_frame().to_csv("history.csv", index=False)
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from autodiff.tape import Tape, backward
from core.config import ModelConfig, TrainConfig
from core.exceptions import GraphDataError, NumericalError
from core.helper import derive_seed, make_rng
from core.logging_config import epoch_logger, logger
from data.data_loader import GraphTensors, Split
from linalg.sparse import DenseMatrix
from model.gahne import ModelParams, forward, init_params, is_attention, is_decayed, predict_labels

HISTORY_COLUMNS = ["epoch", "train_loss", "val_loss", "val_acc"]


@dataclass
class AdamState:
    m: dict[str, DenseMatrix]
    v: dict[str, DenseMatrix]
    step: int = 0

    @classmethod
    def fresh(cls, params: ModelParams) -> "AdamState":
        return cls(
            m={name: np.zeros_like(value) for name, value in params.tensors.items()},
            v={name: np.zeros_like(value) for name, value in params.tensors.items()},
        )


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float

    def log_line(self) -> str:
        return f"epoch {self.epoch} train_loss {self.train_loss:.10g} val_loss {self.val_loss:.10g} val_acc {self.val_acc:.10g}"


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = "max_epochs"

    def __len__(self) -> int:
        return len(self.records)

    def best_record(self) -> EpochRecord:
        return self.records[self.best_epoch - 1]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(r) for r in self.records], columns=HISTORY_COLUMNS)

    def to_csv(self, path: Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


class TrainingDiverged(NumericalError):
    """Non-finite loss or gradients; `history` holds every completed epoch."""

    def __init__(self, message: str, history: TrainHistory):
        super().__init__(message)
        self.history = history


def masked_cross_entropy(tape: Tape, prob_node: int, labels: np.ndarray, mask_ids: np.ndarray, reduction: str = "sum") -> int:
    """-sum over mask_ids of ln F[v, y_v] (probabilities clamped at 1e-12)."""
    mask_ids = np.asarray(mask_ids, dtype=np.int64)
    if len(mask_ids) == 0:
        raise ValueError("masked_cross_entropy needs at least one labeled node")
    targets = labels[mask_ids]
    if (targets < 0).any():
        raise GraphDataError("loss mask contains unlabeled nodes")
    return tape.masked_cross_entropy(prob_node, mask_ids, targets, reduction)


def adam_step(
    params: ModelParams,
    grads: dict[str, DenseMatrix],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
    step_scales: dict[str, float] | None = None,
) -> tuple[ModelParams, AdamState]:
    """
    One Adam update in place. L2 is folded into the gradient (g + lambda * theta)
    for weight matrices only; biases and the attention vector are not decayed.
    `step_scales` multiplies the step of the named parameters (default 1).
    """
    for name, grad in grads.items():
        if not np.isfinite(grad).all():
            raise NumericalError(f"non-finite gradient for parameter '{name}'")
    state.step += 1
    for name, theta in params.tensors.items():
        g = grads[name]
        if weight_decay and is_decayed(name):
            g = g + weight_decay * theta
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = state.m[name] / (1.0 - beta1**state.step)
        v_hat = state.v[name] / (1.0 - beta2**state.step)
        scale = step_scales.get(name, 1.0) if step_scales else 1.0
        theta -= scale * lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


def evaluate_loss(
    graph_tensors: GraphTensors,
    params: ModelParams,
    model_config: ModelConfig,
    labels: np.ndarray,
    ids: np.ndarray,
    reduction: str = "sum",
) -> tuple[float, float]:
    """(loss, accuracy) over `ids` with dropout off."""
    output = forward(graph_tensors, params, model_config, training=False)
    loss_node = masked_cross_entropy(output.tape, output.prob_node, labels, ids, reduction)
    predictions = predict_labels(output.probabilities[ids])
    return float(output.tape.value(loss_node)[0, 0]), float(np.mean(predictions == labels[ids]))


def _batches(train_ids: np.ndarray, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    if batch_size == 0 or batch_size >= len(train_ids):
        return [train_ids]
    order = make_rng(seed, "train", "batches", epoch).permutation(train_ids)
    return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]


def train(
    graph_tensors: GraphTensors,
    labels: np.ndarray,
    split: Split,
    model_config: ModelConfig,
    train_config: TrainConfig,
    params: ModelParams | None = None,
) -> tuple[ModelParams, TrainHistory]:
    """Trains from `params` (fresh seeded initialization when omitted)."""
    if len(split.train_ids) == 0:
        raise GraphDataError("the training split is empty")
    num_classes = int(labels.max()) + 1
    if params is None:
        params = init_params(
            model_config,
            graph_tensors.num_channels,
            graph_tensors.input_dim,
            num_classes,
            seed=derive_seed(train_config.seed, "model", "init"),
            score_nodes=graph_tensors.num_nodes,
        )
    # channel scores sum over every node; attention parameters step on the scale of one node
    step_scales = {name: 1.0 / graph_tensors.num_nodes for name in params.names() if is_attention(name)}
    monitor_ids = split.val_ids
    if len(monitor_ids) == 0:
        logger.warning("No validation nodes: early stopping monitors the training loss.")
        monitor_ids = split.train_ids

    state = AdamState.fresh(params)
    history = TrainHistory()
    best_loss, best_params, waited = np.inf, params.copy(), 0
    reduction = train_config.loss_reduction

    for epoch in range(1, train_config.max_epochs + 1):
        batch_losses = []
        for batch_index, batch_ids in enumerate(_batches(split.train_ids, train_config.batch_size, train_config.seed, epoch)):
            output = forward(
                graph_tensors,
                params,
                model_config,
                training=True,
                dropout_seed=derive_seed(train_config.seed, "dropout", f"epoch{epoch}", batch_index),
            )
            loss_node = masked_cross_entropy(output.tape, output.prob_node, labels, batch_ids, reduction)
            loss = float(output.tape.value(loss_node)[0, 0])
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite training loss at epoch {epoch}", history)
            grads = backward(output.tape, loss_node)
            named_grads = {name: grads[node_id] for name, node_id in output.param_ids.items()}
            try:
                adam_step(
                    params,
                    named_grads,
                    state,
                    train_config.learning_rate,
                    weight_decay=train_config.weight_decay,
                    step_scales=step_scales,
                )
            except NumericalError as e:
                raise TrainingDiverged(f"epoch {epoch}: {e}", history) from e
            batch_losses.append(loss)

        train_loss = float(np.sum(batch_losses)) if reduction == "sum" else float(np.mean(batch_losses))
        val_loss, val_acc = evaluate_loss(graph_tensors, params, model_config, labels, monitor_ids, reduction)
        if not np.isfinite(val_loss):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}", history)
        record = EpochRecord(epoch, train_loss, val_loss, val_acc)
        history.records.append(record)
        epoch_logger.info(record.log_line())

        if val_loss < best_loss:
            best_loss, best_params, waited = val_loss, params.copy(), 0
            history.best_epoch = epoch
        else:
            waited += 1
            if waited >= train_config.patience:
                history.stop_reason = "early_stop"
                logger.info(f"Early stopping at epoch {epoch}; best epoch {history.best_epoch}.")
                break

    return best_params, history
