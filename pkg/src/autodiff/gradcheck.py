"""
gradcheck.py
------------

Central finite-difference verification of the tape's gradients.

`build_fn(tape, param_ids)` must record a deterministic scalar loss on `tape`,
reading every parameter through the node ids in `param_ids`, and return the
loss node id. Each parameter entry is perturbed by +/- eps and the numeric
derivative (L+ - L-) / (2 eps) is compared with the analytic one using

    |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
"""

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from autodiff.tape import Tape, backward
from core.exceptions import NumericalError
from linalg.sparse import DenseMatrix

BuildFn = Callable[[Tape, dict[str, int]], int]


@dataclass
class GradCheckResult:
    max_error: float
    errors: dict[str, float] = field(default_factory=dict)  # worst relative error per parameter


def _evaluate(build_fn: BuildFn, params: Mapping[str, DenseMatrix]) -> tuple[Tape, dict[str, int], int]:
    tape = Tape()
    param_ids = {name: tape.input(value, name=name) for name, value in params.items()}
    loss_id = build_fn(tape, param_ids)
    loss = float(tape.value(loss_id)[0, 0])
    if not np.isfinite(loss):
        raise NumericalError(f"gradient check encountered a non-finite loss ({loss})")
    return tape, param_ids, loss_id


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))


def finite_diff_check(build_fn: BuildFn, params: Mapping[str, DenseMatrix], eps: float = 1e-5) -> GradCheckResult:
    if eps <= 0:
        raise ValueError("eps must be positive")
    tape, param_ids, loss_id = _evaluate(build_fn, params)
    grads = backward(tape, loss_id)

    result = GradCheckResult(max_error=0.0)
    for name, value in params.items():
        analytic = grads[param_ids[name]]
        worst = 0.0
        for index in np.ndindex(value.shape):
            losses = []
            for step in (eps, -eps):
                perturbed = dict(params)
                shifted = value.copy()
                shifted[index] += step
                perturbed[name] = shifted
                trial_tape, _, shifted_loss = _evaluate(build_fn, perturbed)
                losses.append(float(trial_tape.value(shifted_loss)[0, 0]))
            numeric = (losses[0] - losses[1]) / (2.0 * eps)
            worst = max(worst, relative_error(float(analytic[index]), numeric))
        result.errors[name] = worst
        result.max_error = max(result.max_error, worst)
    return result
