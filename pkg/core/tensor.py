"""Rank-4 tensors with tape-based reverse-mode automatic differentiation.

Every differentiable op checks its preconditions, computes its result with
numpy, and, when a Tape is active and some input requires a gradient, records
a backward rule on that tape. Ops run outside any Tape record nothing, which
is the inference mode used by the CLI.

Example:
    >>> x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = sum_reduce(mul(x, x))
    >>> backward(tape, loss)
    >>> x.grad  # 2x
"""
from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit

from config import settings
from core import kernels
from core.errors import GradientError, PreconditionError, ShapeError

_node_ids = itertools.count()
_local = threading.local()

BackwardRule = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tensor:
    """Dense (n, c, h, w) float array taking part in the autodiff graph."""

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        array = np.asarray(data)
        if array.dtype not in (np.float32, np.float64):
            array = array.astype(np.float32)
        if array.ndim != 4:
            raise ShapeError(f"tensor must be rank 4 (n, c, h, w), got shape {array.shape}")
        if min(array.shape) < 1:
            raise ShapeError(f"tensor dims must all be >= 1, got shape {array.shape}")
        self.data = array
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node_id = next(_node_ids)
        self.name = name

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return mul(self, other)
        return affine(self, scale=float(other))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"


@dataclass
class TapeRecord:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardRule


class Tape:
    """Ordered record of differentiable ops executed while the tape is active."""

    def __init__(self):
        self.records: list[TapeRecord] = []
        self._outputs: set[int] = set()

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, tensor: Tensor) -> bool:
        return tensor.node_id in self._outputs

    def record(self, op: str, inputs: tuple[Tensor, ...], output: Tensor,
               rule: BackwardRule) -> None:
        self.records.append(TapeRecord(op, inputs, output, rule))
        self._outputs.add(output.node_id)


def _tape_stack() -> list[Tape]:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def active_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


def _result(op: str, data: np.ndarray, inputs: tuple[Tensor, ...], rule: BackwardRule) -> Tensor:
    tape = active_tape()
    tracked = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=tracked)
    if tracked:
        tape.record(op, inputs, out, rule)
    return out


def backward(tape: Tape, root: Tensor, leaves: Iterable[Tensor] | None = None) -> None:
    """Accumulate d(root)/d(leaf) into ``leaf.grad`` for every reachable leaf.

    Gradients from several consumers of one tensor are summed. Tensors listed
    in ``leaves`` that the root does not depend on end with an all-zero grad.
    """
    if root.size != 1:
        raise GradientError(f"backward root must be a scalar, got shape {root.shape}")
    if root not in tape:
        raise GradientError("backward root was not produced on this tape")

    pending: dict[int, np.ndarray] = {root.node_id: np.ones_like(root.data)}
    for record in reversed(tape.records):
        grad = pending.pop(record.output.node_id, None)
        if grad is None:
            continue
        for tensor, input_grad in zip(record.inputs, record.backward(grad)):
            if input_grad is None or not tensor.requires_grad:
                continue
            if tensor in tape:
                if tensor.node_id in pending:
                    pending[tensor.node_id] = pending[tensor.node_id] + input_grad
                else:
                    pending[tensor.node_id] = input_grad
            elif tensor.grad is None:
                tensor.grad = np.array(input_grad, dtype=tensor.dtype, copy=True)
            else:
                tensor.grad += input_grad

    for leaf in leaves or ():
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)


# ----------------------------------------
# Convolutions
# ----------------------------------------

def _check_conv_args(op: str, weight: Tensor, bias: Tensor | None, stride: int, padding: int,
                     c_out: int) -> int:
    w_shape = weight.shape
    if w_shape[2] != w_shape[3]:
        raise ShapeError(f"{op}: kernel must be square, got {w_shape[2]}x{w_shape[3]}")
    if stride < 1:
        raise ShapeError(f"{op}: stride must be positive, got {stride}")
    if padding < 0:
        raise ShapeError(f"{op}: padding must be non-negative, got {padding}")
    if bias is not None and bias.shape != (1, c_out, 1, 1):
        raise ShapeError(f"{op}: bias shape {bias.shape} != (1, {c_out}, 1, 1)")
    return w_shape[2]


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Zero-padded 2-D convolution with weight (c_out, c_in, k, k)."""
    c_out, c_in = weight.shape[0], weight.shape[1]
    k = _check_conv_args("conv2d", weight, bias, stride, padding, c_out)
    n, channels, h, w = x.shape
    if channels != c_in:
        raise ShapeError(f"conv2d: input channels {channels} != weight c_in {c_in}")
    out_h = kernels.conv_output_size(h, k, stride, padding)
    out_w = kernels.conv_output_size(w, k, stride, padding)
    if out_h < 1:
        raise ShapeError(f"conv2d: input height {h} too small for kernel {k}, padding {padding}")
    if out_w < 1:
        raise ShapeError(f"conv2d: input width {w} too small for kernel {k}, padding {padding}")

    out = kernels.conv2d_forward(x.data, weight.data, None if bias is None else bias.data,
                                 stride, padding)
    need = (x.requires_grad, weight.requires_grad, bias is not None and bias.requires_grad)

    def rule(grad):
        gx = gw = gb = None
        if need[0]:
            gx = kernels.conv2d_grad_input(grad, weight.data, x.shape, stride, padding)
        if need[1]:
            gw = kernels.conv2d_grad_weight(grad, x.data, k, stride, padding)
        if need[2]:
            gb = grad.sum(axis=(0, 2, 3)).reshape(1, c_out, 1, 1)
        return gx, gw, gb

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _result("conv2d", out, inputs, rule)


def deconv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
             stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed convolution with weight (c_in, c_out, k, k)."""
    c_in, c_out = weight.shape[0], weight.shape[1]
    k = _check_conv_args("deconv2d", weight, bias, stride, padding, c_out)
    n, channels, h, w = x.shape
    if channels != c_in:
        raise ShapeError(f"deconv2d: input channels {channels} != weight c_in {c_in}")
    out_h = kernels.deconv_output_size(h, k, stride, padding)
    out_w = kernels.deconv_output_size(w, k, stride, padding)
    if out_h < 1:
        raise ShapeError(f"deconv2d: output height {out_h} is not positive")
    if out_w < 1:
        raise ShapeError(f"deconv2d: output width {out_w} is not positive")

    out = kernels.deconv2d_forward(x.data, weight.data, None if bias is None else bias.data,
                                   stride, padding)
    need = (x.requires_grad, weight.requires_grad, bias is not None and bias.requires_grad)

    def rule(grad):
        gx = gw = gb = None
        if need[0]:
            gx = kernels.deconv2d_grad_input(grad, weight.data, stride, padding)
        if need[1]:
            gw = kernels.deconv2d_grad_weight(grad, x.data, stride, padding, k)
        if need[2]:
            gb = grad.sum(axis=(0, 2, 3)).reshape(1, c_out, 1, 1)
        return gx, gw, gb

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _result("deconv2d", out, inputs, rule)


# ----------------------------------------
# Pointwise ops
# ----------------------------------------

def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        for axis, label in enumerate(("batch", "channels", "height", "width")):
            if a.shape[axis] != b.shape[axis]:
                raise ShapeError(f"{op}: {label} mismatch {a.shape[axis]} != {b.shape[axis]} "
                                 f"(shapes {a.shape} and {b.shape})")


def elementwise(a: Tensor, b: Tensor, kind: str) -> Tensor:
    _check_same_shape(kind, a, b)
    if kind == "add":
        return _result("add", a.data + b.data, (a, b), lambda g: (g, g))
    if kind == "mul":
        return _result("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))
    raise PreconditionError(f"unknown elementwise kind {kind!r}")


def add(a: Tensor, b: Tensor) -> Tensor:
    return elementwise(a, b, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    return elementwise(a, b, "mul")


def affine(x: Tensor, scale: float = 1.0, shift: float = 0.0) -> Tensor:
    """scale * x + shift with constant scalars."""
    s = x.dtype.type(scale)
    out = x.data * s + x.dtype.type(shift)
    return _result("affine", out, (x,), lambda g: (g * s,))


def scale_channels(x: Tensor, weights: Tensor) -> Tensor:
    """Multiply each (n, c) plane of x by weights[n, c, 0, 0]."""
    n, c = x.shape[0], x.shape[1]
    if weights.shape != (n, c, 1, 1):
        raise ShapeError(f"scale_channels: weights shape {weights.shape} != ({n}, {c}, 1, 1)")

    def rule(grad):
        return grad * weights.data, (grad * x.data).sum(axis=(2, 3), keepdims=True)

    return _result("scale_channels", x.data * weights.data, (x, weights), rule)


def activation(x: Tensor, kind: str, slope: float = settings.LEAKY_SLOPE) -> Tensor:
    """Pointwise nonlinearity: sigmoid, tanh, relu or leaky_relu."""
    data = x.data
    if kind == "sigmoid":
        out = expit(data)
        return _result("sigmoid", out, (x,), lambda g: (g * out * (1 - out),))
    if kind == "tanh":
        out = np.tanh(data)
        return _result("tanh", out, (x,), lambda g: (g * (1 - out * out),))
    if kind == "relu":
        mask = data > 0
        return _result("relu", np.where(mask, data, 0).astype(x.dtype), (x,),
                       lambda g: (g * mask,))
    if kind == "leaky_relu":
        factor = np.where(data > 0, 1, slope).astype(x.dtype)
        return _result("leaky_relu", data * factor, (x,), lambda g: (g * factor,))
    raise PreconditionError(f"unknown activation {kind!r}")


def min_const(x: Tensor, threshold: float) -> Tensor:
    """Pointwise min(threshold, x); gradient passes where x <= threshold."""
    if threshold < 0:
        raise PreconditionError(f"min_const: threshold must be >= 0, got {threshold}")
    limit = x.dtype.type(threshold)
    mask = x.data <= limit
    return _result("min_const", np.minimum(x.data, limit), (x,), lambda g: (g * mask,))


# ----------------------------------------
# Structural ops
# ----------------------------------------

def concat_channels(inputs: Sequence[Tensor]) -> Tensor:
    if not inputs:
        raise ShapeError("concat_channels needs at least one tensor")
    first = inputs[0]
    for t in inputs[1:]:
        for axis, label in ((0, "batch"), (2, "height"), (3, "width")):
            if t.shape[axis] != first.shape[axis]:
                raise ShapeError(f"concat_channels: {label} mismatch "
                                 f"{t.shape[axis]} != {first.shape[axis]}")
    if len(inputs) == 1:
        return first

    bounds = np.cumsum([0] + [t.shape[1] for t in inputs])

    def rule(grad):
        return [grad[:, lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:])]

    data = np.concatenate([t.data for t in inputs], axis=1)
    return _result("concat_channels", data, tuple(inputs), rule)


def global_avg_pool(x: Tensor) -> Tensor:
    n, c, h, w = x.shape
    area = h * w

    def rule(grad):
        return (np.broadcast_to(grad / area, x.shape).astype(x.dtype),)

    return _result("global_avg_pool", x.data.mean(axis=(2, 3), keepdims=True), (x,), rule)


def instance_norm(x: Tensor, eps: float = settings.NORM_EPS) -> Tensor:
    """Per-sample, per-channel spatial standardization (no affine terms)."""
    mean = x.data.mean(axis=(2, 3), keepdims=True)
    centered = x.data - mean
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=(2, 3), keepdims=True) + eps)
    x_hat = centered * inv_std

    def rule(grad):
        g_mean = grad.mean(axis=(2, 3), keepdims=True)
        gx_mean = (grad * x_hat).mean(axis=(2, 3), keepdims=True)
        return (inv_std * (grad - g_mean - x_hat * gx_mean),)

    return _result("instance_norm", x_hat.astype(x.dtype), (x,), rule)


# ----------------------------------------
# Reductions and losses (all return (1, 1, 1, 1) scalars)
# ----------------------------------------

def sum_reduce(x: Tensor) -> Tensor:
    total = x.data.sum().reshape(1, 1, 1, 1)
    return _result("sum", total, (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mean_reduce(x: Tensor) -> Tensor:
    count = x.size
    mean = x.data.mean().reshape(1, 1, 1, 1)
    return _result("mean", mean, (x,),
                   lambda g: (np.broadcast_to(g / count, x.shape).astype(x.dtype),))


def l1_loss(a: Tensor, b: Tensor) -> Tensor:
    """mean(|a - b|); subgradient 0 where a == b."""
    _check_same_shape("l1_loss", a, b)
    diff = a.data - b.data
    count = diff.size
    value = np.abs(diff).mean().reshape(1, 1, 1, 1)

    def rule(grad):
        g = np.sign(diff) * (grad.reshape(()) / count)
        return g, -g

    return _result("l1_loss", value, (a, b), rule)


def mse_loss(a: Tensor, b: Tensor) -> Tensor:
    """mean((a - b)^2)."""
    _check_same_shape("mse_loss", a, b)
    diff = a.data - b.data
    count = diff.size
    value = (diff * diff).mean().reshape(1, 1, 1, 1)

    def rule(grad):
        g = diff * (2 * grad.reshape(()) / count)
        return g, -g

    return _result("mse_loss", value, (a, b), rule)
