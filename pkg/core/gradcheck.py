"""Finite-difference gradient checks at 64-bit precision.

Two flavors:

* ``check_op`` perturbs every coordinate of every input (small ops and blocks);
* ``check_directional`` compares one directional derivative per parameter
  tensor along a random direction supported on a coordinate subsample, which
  keeps whole-subnetwork checks affordable.

Both differentiate ``sum(f(inputs) * R)`` (or a scalar loss directly) and
report the worst relative error ``|a - n| / max(|a|, |n|, floor)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from core.errors import PreconditionError
from core.tensor import Tape, Tensor, backward, mul, sum_reduce

DEFAULT_EPS = 1e-4
DEFAULT_TOLERANCE = 1e-3
ERROR_FLOOR = 1e-7


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: str
    checked: int

    def passed(self, tolerance: float = DEFAULT_TOLERANCE) -> bool:
        return self.max_rel_error < tolerance

    def __str__(self) -> str:
        return f"max rel err {self.max_rel_error:.3e} at {self.worst} ({self.checked} checks)"


def relative_error(analytic: float, numeric: float, floor: float = ERROR_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _require_float64(tensors: Mapping[str, Tensor]) -> None:
    for name, tensor in tensors.items():
        if tensor.dtype != np.float64:
            raise PreconditionError(f"gradient check needs float64 tensors, {name} is {tensor.dtype}")
        # Perturbations go through a flat view
        tensor.data = np.ascontiguousarray(tensor.data)


def analytic_gradients(loss_fn: Callable[[], Tensor],
                       tensors: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    for tensor in tensors.values():
        tensor.requires_grad = True
        tensor.grad = None
    with Tape() as tape:
        loss = loss_fn()
    backward(tape, loss, leaves=tensors.values())
    return {name: tensor.grad.copy() for name, tensor in tensors.items()}


def _loss_value(loss_fn: Callable[[], Tensor]) -> float:
    # No active tape: pure inference evaluation
    return loss_fn().item()


def projected_loss(fn: Callable[..., Tensor], inputs: Sequence[Tensor],
                   seed: int = 0) -> Callable[[], Tensor]:
    """Scalar loss sum(fn(*inputs) * R) with a fixed random R."""
    sample = fn(*inputs)
    weights = Tensor(np.random.default_rng(seed).standard_normal(sample.shape))

    def loss_fn() -> Tensor:
        return sum_reduce(mul(fn(*inputs), weights))

    return loss_fn


def check_op(fn: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = DEFAULT_EPS,
             seed: int = 0, floor: float = ERROR_FLOOR) -> GradCheckReport:
    """Per-coordinate central differences over every element of every input."""
    named = {f"input{i}": t for i, t in enumerate(inputs)}
    _require_float64(named)
    loss_fn = projected_loss(fn, inputs, seed)
    grads = analytic_gradients(loss_fn, named)

    worst, worst_at, checked = 0.0, "-", 0
    for name, tensor in named.items():
        flat = tensor.data.reshape(-1)
        for index in range(flat.size):
            numeric = _central_difference(loss_fn, flat, index, eps)
            error = relative_error(grads[name].reshape(-1)[index], numeric, floor)
            checked += 1
            if error > worst:
                worst, worst_at = error, f"{name}[{index}]"
    return GradCheckReport(worst, worst_at, checked)


def check_directional(loss_fn: Callable[[], Tensor], tensors: Mapping[str, Tensor],
                      samples: int = 20, directions: int = 1, eps: float = DEFAULT_EPS,
                      seed: int = 0, floor: float = ERROR_FLOOR) -> GradCheckReport:
    """Directional-derivative check per tensor on a random coordinate subsample."""
    _require_float64(tensors)
    grads = analytic_gradients(loss_fn, tensors)
    rng = np.random.default_rng(seed)

    worst, worst_at, checked = 0.0, "-", 0
    for name, tensor in tensors.items():
        flat = tensor.data.reshape(-1)
        for k in range(directions):
            count = min(samples, flat.size)
            coords = rng.choice(flat.size, size=count, replace=False)
            direction = rng.standard_normal(count)
            analytic = float(grads[name].reshape(-1)[coords] @ direction)

            original = flat[coords].copy()
            flat[coords] = original + eps * direction
            plus = _loss_value(loss_fn)
            flat[coords] = original - eps * direction
            minus = _loss_value(loss_fn)
            flat[coords] = original

            error = relative_error(analytic, (plus - minus) / (2 * eps), floor)
            checked += 1
            if error > worst:
                worst, worst_at = error, f"{name} (direction {k})"
    return GradCheckReport(worst, worst_at, checked)


def _central_difference(loss_fn: Callable[[], Tensor], flat: np.ndarray, index: int,
                        eps: float) -> float:
    original = flat[index]
    flat[index] = original + eps
    plus = _loss_value(loss_fn)
    flat[index] = original - eps
    minus = _loss_value(loss_fn)
    flat[index] = original
    return (plus - minus) / (2 * eps)
