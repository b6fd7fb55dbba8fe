"""
tape.py
-------

Minimal reverse-mode differentiation over dense float64 matrices.

Every operation is appended to a `Tape` together with its forward value, so
the tape is topologically ordered by construction. `backward` walks the tape
in reverse and applies each operation's vector-Jacobian product, summing the
contributions of nodes that feed several consumers.

Each op kind is registered once with `defop`, pairing its forward rule with
its VJP rule:

    forward(values, payload) -> value
    vjp(grad, values, value, payload) -> one gradient (or None) per parent

Usage
-----
tape = Tape()
x = tape.input(np.array([[-5.0, 3.0]]), name="x")
loss = tape.sum_all(tape.relu(x))
grads = backward(tape, loss)        # grads[x] == [[0., 1.]]
"""

from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from core.exceptions import ShapeError
from linalg.sparse import DenseMatrix, SparseMatrix, spmm

PROB_FLOOR = 1e-12

ForwardRule = Callable[[list[DenseMatrix], Any], DenseMatrix]
VjpRule = Callable[[DenseMatrix, list[DenseMatrix], DenseMatrix, Any], list[DenseMatrix | None]]
GradientMap = dict[int, DenseMatrix]


@dataclass(frozen=True)
class OpRule:
    arity: int | None  # None: any number of parents (at least one)
    forward: ForwardRule
    vjp: VjpRule


OPS: dict[str, OpRule] = {}


def defop(op_kind: str, arity: int | None, vjp: VjpRule) -> Callable[[ForwardRule], ForwardRule]:
    def register(forward: ForwardRule) -> ForwardRule:
        OPS[op_kind] = OpRule(arity, forward, vjp)
        return forward

    return register


@dataclass
class TapeNode:
    op_kind: str
    parents: tuple[int, ...]
    value: DenseMatrix
    payload: Any = None


def _require_same_shape(op_kind: str, values: Sequence[DenseMatrix]) -> None:
    shapes = {v.shape for v in values}
    if len(shapes) != 1:
        raise ShapeError(f"{op_kind}: operands must share one shape, got {sorted(shapes)}")


# --- forward and VJP rules ---


def _matmul_vjp(g, values, out, transpose_b):
    a, b = values
    if transpose_b:
        return [g @ b, g.T @ a]
    return [g @ b.T, a.T @ g]


@defop("matmul", 2, _matmul_vjp)
def _matmul(values, transpose_b):
    a, b = values
    inner = b.shape[1] if transpose_b else b.shape[0]
    if a.shape[1] != inner:
        raise ShapeError(f"matmul: {a.shape} x {b.shape}{'^T' if transpose_b else ''}")
    return a @ (b.T if transpose_b else b)


@defop("spmm_const", 1, lambda g, values, out, p: [spmm(p.transpose(), g)])
def _spmm_const(values, p: SparseMatrix):
    # the operator is data: no gradient flows into it
    return spmm(p, values[0])


@defop("add_bias_row", 2, lambda g, values, out, _: [g, g.sum(axis=0, keepdims=True)])
def _add_bias_row(values, _):
    x, b = values
    if b.shape != (1, x.shape[1]):
        raise ShapeError(f"add_bias_row: bias {b.shape} does not match {x.shape}")
    return x + b


@defop("relu", 1, lambda g, values, out, _: [g * (values[0] > 0)])
def _relu(values, _):
    return np.maximum(values[0], 0.0)


@defop("tanh", 1, lambda g, values, out, _: [g * (1.0 - out**2)])
def _tanh(values, _):
    return np.tanh(values[0])


@defop("sigmoid", 1, lambda g, values, out, _: [g * out * (1.0 - out)])
def _sigmoid(values, _):
    x = values[0]
    # split by sign so exp never overflows
    positive = x >= 0
    z = np.exp(np.where(positive, -x, x))
    return np.where(positive, 1.0 / (1.0 + z), z / (1.0 + z))


@defop("softmax_rows", 1, lambda g, values, out, _: [out * (g - (g * out).sum(axis=1, keepdims=True))])
def _softmax_rows(values, _):
    x = values[0]
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


@defop("elemwise_mul", 2, lambda g, values, out, _: [g * values[1], g * values[0]])
def _elemwise_mul(values, _):
    _require_same_shape("elemwise_mul", values)
    return values[0] * values[1]


def _concat_vjp(g, values, out, _):
    bounds = np.cumsum([v.shape[1] for v in values])[:-1]
    return list(np.split(g, bounds, axis=1))


@defop("concat_cols", None, _concat_vjp)
def _concat_cols(values, _):
    if len({v.shape[0] for v in values}) != 1:
        raise ShapeError(f"concat_cols: row counts differ {[v.shape for v in values]}")
    return np.concatenate(values, axis=1)


@defop("mean_of_set", None, lambda g, values, out, _: [g / len(values)] * len(values))
def _mean_of_set(values, _):
    _require_same_shape("mean_of_set", values)
    return np.mean(np.stack(values), axis=0)


@defop("scale", 1, lambda g, values, out, c: [g * c])
def _scale(values, c):
    return values[0] * c


@defop("add", None, lambda g, values, out, _: [g] * len(values))
def _add(values, _):
    _require_same_shape("add", values)
    total = values[0].copy()
    for v in values[1:]:
        total += v
    return total


def _cross_entropy_vjp(g, values, out, payload):
    probs = values[0]
    ids, targets, reduction = payload
    picked = probs[ids, targets]
    coeff = np.divide(-1.0, picked, out=np.zeros_like(picked), where=picked > PROB_FLOOR)
    if reduction == "mean":
        coeff = coeff / len(ids)
    grad = np.zeros_like(probs)
    np.add.at(grad, (ids, targets), coeff * g[0, 0])
    return [grad]


@defop("masked_cross_entropy", 1, _cross_entropy_vjp)
def _masked_cross_entropy(values, payload):
    probs = values[0]
    ids, targets, reduction = payload
    if len(ids) == 0:
        raise ValueError("masked_cross_entropy: empty mask")
    loss = -np.log(np.maximum(probs[ids, targets], PROB_FLOOR)).sum()
    if reduction == "mean":
        loss /= len(ids)
    return np.array([[loss]])


@defop("sum_all", 1, lambda g, values, out, _: [np.full_like(values[0], g[0, 0])])
def _sum_all(values, _):
    return np.array([[values[0].sum()]])


class Tape:
    """One recorded computation; confined to a single thread."""

    def __init__(self) -> None:
        self.nodes: list[TapeNode] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, op_kind: str, parents: Sequence[int] = (), payload: Any = None) -> int:
        """Computes the forward value of `op_kind` and appends it; returns the node id."""
        if op_kind == "input":
            raise ValueError("use Tape.input to record input nodes")
        rule = OPS[op_kind]
        parents = tuple(parents)
        if (rule.arity is not None and len(parents) != rule.arity) or not parents:
            raise ShapeError(f"{op_kind}: expected {rule.arity or 'one or more'} parents, got {len(parents)}")
        if any(not 0 <= p < len(self.nodes) for p in parents):
            raise ValueError(f"{op_kind}: parent ids must refer to earlier tape nodes")
        value = rule.forward([self.nodes[p].value for p in parents], payload)
        self.nodes.append(TapeNode(op_kind, parents, value, payload))
        return len(self.nodes) - 1

    def input(self, value: DenseMatrix, name: str | None = None) -> int:
        value = np.asarray(value, dtype=np.float64)
        if value.ndim != 2:
            raise ShapeError(f"tape values are matrices, got shape {value.shape}")
        self.nodes.append(TapeNode("input", (), value, name))
        return len(self.nodes) - 1

    def value(self, node_id: int) -> DenseMatrix:
        return self.nodes[node_id].value

    # --- convenience wrappers, one per op kind ---

    def matmul(self, a: int, b: int, transpose_b: bool = False) -> int:
        return self.record("matmul", (a, b), transpose_b)

    def spmm_const(self, p: SparseMatrix, x: int) -> int:
        return self.record("spmm_const", (x,), p)

    def add_bias_row(self, x: int, b: int) -> int:
        return self.record("add_bias_row", (x, b))

    def relu(self, x: int) -> int:
        return self.record("relu", (x,))

    def tanh(self, x: int) -> int:
        return self.record("tanh", (x,))

    def sigmoid(self, x: int) -> int:
        return self.record("sigmoid", (x,))

    def softmax_rows(self, x: int) -> int:
        return self.record("softmax_rows", (x,))

    def elemwise_mul(self, a: int, b: int) -> int:
        return self.record("elemwise_mul", (a, b))

    def concat_cols(self, parts: Sequence[int]) -> int:
        return self.record("concat_cols", parts)

    def mean_of_set(self, parts: Sequence[int]) -> int:
        return self.record("mean_of_set", parts)

    def scale(self, x: int, c: float) -> int:
        return self.record("scale", (x,), float(c))

    def add(self, parts: Sequence[int]) -> int:
        return parts[0] if len(parts) == 1 else self.record("add", parts)

    def masked_cross_entropy(self, probs: int, ids: Sequence[int], targets: Sequence[int], reduction: str = "sum") -> int:
        payload = (np.asarray(ids, dtype=np.int64), np.asarray(targets, dtype=np.int64), reduction)
        return self.record("masked_cross_entropy", (probs,), payload)

    def sum_all(self, x: int) -> int:
        return self.record("sum_all", (x,))

    def dropout(self, x: int, rate: float, rng: np.random.Generator | None) -> int:
        """Inverted dropout as a constant mask input; identity when rng is None or rate is 0."""
        if rng is None or rate <= 0.0:
            return x
        keep = rng.random(self.value(x).shape) >= rate
        mask = self.input(keep / (1.0 - rate), name="dropout_mask")
        return self.elemwise_mul(x, mask)


def backward(tape: Tape, node_id: int) -> GradientMap:
    """Gradients of the scalar `node_id` with respect to every input node."""
    seed = tape.value(node_id)
    if seed.shape != (1, 1):
        raise ShapeError(f"backward needs a 1x1 seed node, got {seed.shape}")
    grads: dict[int, DenseMatrix] = {node_id: np.ones((1, 1))}
    for current in range(node_id, -1, -1):
        node = tape.nodes[current]
        if node.op_kind == "input" or current not in grads:
            continue
        g = grads.pop(current)
        parent_values = [tape.nodes[p].value for p in node.parents]
        for parent, parent_grad in zip(node.parents, OPS[node.op_kind].vjp(g, parent_values, node.value, node.payload)):
            if parent_grad is None:
                continue
            if parent in grads:
                grads[parent] = grads[parent] + parent_grad
            else:
                grads[parent] = parent_grad
    return {
        i: grads.get(i, np.zeros_like(node.value))
        for i, node in enumerate(tape.nodes)
        if node.op_kind == "input"
    }
