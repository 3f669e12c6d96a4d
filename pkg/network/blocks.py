"""Composite blocks: DFSB, UFSB, residual bottleneck, recalibration, patch critic.

Every block comes as a pair of functions: ``*_shapes`` enumerates the named
parameter shapes under a prefix, and ``*_forward`` runs the block against a
ParamStore holding those names. Parameter counts follow from the shapes, see
the ``*_param_count`` closed forms.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from config import settings
from core.errors import ShapeError
from core.params import ParamStore, Shape
from core.tensor import (Tensor, activation, add, conv2d, deconv2d, global_avg_pool,
                         instance_norm, mul, scale_channels)

ShapeList = list[tuple[str, Shape]]
Trace = Optional[dict[str, Tensor]]


@dataclass(frozen=True)
class BlockConfig:
    in_channels: int
    out_channels: int
    normalization: str = "instance"
    activation: str = "relu"
    calibration: bool = True


# ----------------------------------------
# Layer helpers
# ----------------------------------------

def conv_shapes(prefix: str, c_in: int, c_out: int, kernel: int) -> ShapeList:
    return [(f"{prefix}.weight", (c_out, c_in, kernel, kernel)),
            (f"{prefix}.bias", (1, c_out, 1, 1))]


def deconv_shapes(prefix: str, c_in: int, c_out: int, kernel: int) -> ShapeList:
    return [(f"{prefix}.weight", (c_in, c_out, kernel, kernel)),
            (f"{prefix}.bias", (1, c_out, 1, 1))]


def conv(params: ParamStore, prefix: str, x: Tensor, stride: int = 1,
         padding: int = 0) -> Tensor:
    return conv2d(x, params[f"{prefix}.weight"], params[f"{prefix}.bias"], stride, padding)


def deconv(params: ParamStore, prefix: str, x: Tensor, stride: int = 1,
           padding: int = 0) -> Tensor:
    return deconv2d(x, params[f"{prefix}.weight"], params[f"{prefix}.bias"], stride, padding)


def normalize(x: Tensor, kind: str) -> Tensor:
    if kind == "instance":
        return instance_norm(x)
    if kind == "none":
        return x
    raise ShapeError(f"unknown normalization {kind!r}")


def norm_act(x: Tensor, cfg: BlockConfig) -> Tensor:
    return activation(normalize(x, cfg.normalization), cfg.activation)


def _record(trace: Trace, key: str, tensor: Tensor) -> None:
    if trace is not None:
        trace[key] = tensor


def _check_input(op: str, x: Tensor, channels: int) -> None:
    if x.shape[1] != channels:
        raise ShapeError(f"{op}: expected {channels} input channels, got {x.shape[1]}")


# ----------------------------------------
# DFSB: down-sampling feature self-calibrated block (c -> 2c, /2)
# ----------------------------------------

def dfsb_config(channels: int, normalization: str = "instance", activation_kind: str = "relu",
                calibration: bool = True) -> BlockConfig:
    return BlockConfig(channels, 2 * channels, normalization, activation_kind, calibration)


def _check_dfsb(cfg: BlockConfig) -> None:
    if cfg.out_channels != 2 * cfg.in_channels:
        raise ShapeError(f"DFSB must double channels: {cfg.in_channels} -> {cfg.out_channels}")


def dfsb_shapes(prefix: str, cfg: BlockConfig) -> ShapeList:
    _check_dfsb(cfg)
    c = cfg.in_channels
    shapes = conv_shapes(f"{prefix}.down", c, 2 * c, 3)
    shapes += deconv_shapes(f"{prefix}.up", 2 * c, c, 4)
    if cfg.calibration:
        shapes += conv_shapes(f"{prefix}.cal", c, c, 1)
    shapes += conv_shapes(f"{prefix}.refine", c, 2 * c, 3)
    return shapes


def dfsb_param_count(c: int, calibration: bool = True) -> int:
    return 69 * c * c + 6 * c if calibration else 68 * c * c + 5 * c


def dfsb_forward(x: Tensor, params: ParamStore, prefix: str, cfg: BlockConfig,
                 trace: Trace = None) -> Tensor:
    _check_dfsb(cfg)
    _check_input("DFSB", x, cfg.in_channels)
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError(f"DFSB: spatial dims must be even, got {x.shape[2]}x{x.shape[3]}")

    f_lr = norm_act(conv(params, f"{prefix}.down", x, stride=2, padding=1), cfg)
    f_hr = norm_act(deconv(params, f"{prefix}.up", f_lr, stride=2, padding=1), cfg)
    if cfg.calibration:
        weight = activation(conv(params, f"{prefix}.cal", x), "sigmoid")
        _record(trace, f"{prefix}.weight", weight)
        f_hr = mul(weight, f_hr)
    refined = normalize(conv(params, f"{prefix}.refine", f_hr, stride=2, padding=1),
                        cfg.normalization)
    out = add(refined, f_lr)

    _record(trace, f"{prefix}.f_lr", f_lr)
    _record(trace, f"{prefix}.f_hr", f_hr)
    _record(trace, f"{prefix}.out", out)
    return out


# ----------------------------------------
# UFSB: up-sampling feature self-calibrated block (c -> c/2, x2)
# ----------------------------------------

def ufsb_config(channels: int, normalization: str = "instance", activation_kind: str = "relu",
                calibration: bool = True) -> BlockConfig:
    return BlockConfig(channels, channels // 2, normalization, activation_kind, calibration)


def _check_ufsb(cfg: BlockConfig) -> None:
    if cfg.in_channels % 2:
        raise ShapeError(f"UFSB needs an even channel count, got {cfg.in_channels}")
    if cfg.out_channels * 2 != cfg.in_channels:
        raise ShapeError(f"UFSB must halve channels: {cfg.in_channels} -> {cfg.out_channels}")


def ufsb_shapes(prefix: str, cfg: BlockConfig) -> ShapeList:
    _check_ufsb(cfg)
    c, half = cfg.in_channels, cfg.out_channels
    shapes = deconv_shapes(f"{prefix}.up", c, half, 4)
    shapes += conv_shapes(f"{prefix}.down", half, c, 3)
    if cfg.calibration:
        shapes += conv_shapes(f"{prefix}.cal", c, c, 1)
    shapes += deconv_shapes(f"{prefix}.refine", c, half, 4)
    return shapes


def ufsb_param_count(c: int, calibration: bool = True) -> int:
    # 21.5c^2 + 3c, kept integral for even c
    if calibration:
        return (43 * c * c) // 2 + 3 * c
    return (41 * c * c) // 2 + 2 * c


def ufsb_forward(x: Tensor, params: ParamStore, prefix: str, cfg: BlockConfig,
                 trace: Trace = None) -> Tensor:
    _check_ufsb(cfg)
    _check_input("UFSB", x, cfg.in_channels)

    f_hr = norm_act(deconv(params, f"{prefix}.up", x, stride=2, padding=1), cfg)
    f_lr = norm_act(conv(params, f"{prefix}.down", f_hr, stride=2, padding=1), cfg)
    if cfg.calibration:
        weight = activation(conv(params, f"{prefix}.cal", x), "sigmoid")
        _record(trace, f"{prefix}.weight", weight)
        f_lr = mul(weight, f_lr)
    refined = normalize(deconv(params, f"{prefix}.refine", f_lr, stride=2, padding=1),
                        cfg.normalization)
    out = add(refined, f_hr)

    _record(trace, f"{prefix}.f_lr", f_lr)
    _record(trace, f"{prefix}.f_hr", f_hr)
    _record(trace, f"{prefix}.out", out)
    return out


# ----------------------------------------
# Residual bottleneck
# ----------------------------------------

def resblocks_shapes(prefix: str, channels: int,
                     units: int = settings.RESIDUAL_BLOCKS) -> ShapeList:
    shapes: ShapeList = []
    for i in range(1, units + 1):
        shapes += conv_shapes(f"{prefix}.res{i}.conv1", channels, channels, 3)
        shapes += conv_shapes(f"{prefix}.res{i}.conv2", channels, channels, 3)
    return shapes


def resblocks_param_count(c: int, units: int = settings.RESIDUAL_BLOCKS) -> int:
    return units * (18 * c * c + 2 * c)


def resblocks_forward(x: Tensor, params: ParamStore, prefix: str, cfg: BlockConfig,
                      units: int = settings.RESIDUAL_BLOCKS) -> Tensor:
    _check_input("ResBlocks", x, cfg.in_channels)
    for i in range(1, units + 1):
        branch = norm_act(conv(params, f"{prefix}.res{i}.conv1", x, padding=1), cfg)
        x = add(x, conv(params, f"{prefix}.res{i}.conv2", branch, padding=1))
    return x


# ----------------------------------------
# Squeeze-excitation style channel recalibration
# ----------------------------------------

def _check_reduction(channels: int, reduction: int) -> None:
    if reduction < 1 or channels % reduction:
        raise ShapeError(f"recalibration: {channels} channels not divisible by reduction {reduction}")


def recalibration_shapes(prefix: str, channels: int, reduction: int) -> ShapeList:
    _check_reduction(channels, reduction)
    hidden = channels // reduction
    return conv_shapes(f"{prefix}.fc1", channels, hidden, 1) + \
        conv_shapes(f"{prefix}.fc2", hidden, channels, 1)


def recalibration_param_count(c: int, reduction: int) -> int:
    hidden = c // reduction
    return 2 * c * hidden + hidden + c


def recalibration_forward(x: Tensor, params: ParamStore, prefix: str, reduction: int,
                          activation_kind: str = "relu", trace: Trace = None) -> Tensor:
    _check_reduction(x.shape[1], reduction)
    pooled = global_avg_pool(x)
    hidden = activation(conv(params, f"{prefix}.fc1", pooled), activation_kind)
    gate = activation(conv(params, f"{prefix}.fc2", hidden), "sigmoid")
    _record(trace, f"{prefix}.gate", gate)
    return scale_channels(x, gate)


# ----------------------------------------
# Patch discriminator
# ----------------------------------------

def _disc_widths(base: int) -> list[tuple[int, int]]:
    widths = [3, base, 2 * base, 4 * base, 8 * base]
    return list(zip(widths[:-1], widths[1:]))


def discriminator_shapes(prefix: str, base: int = settings.DISC_CHANNELS) -> ShapeList:
    shapes: ShapeList = []
    for i, (c_in, c_out) in enumerate(_disc_widths(base), start=1):
        shapes += conv_shapes(f"{prefix}.layer{i}", c_in, c_out, 4)
    shapes += conv_shapes(f"{prefix}.score", 8 * base, 1, 3)
    return shapes


def discriminator_param_count(d: int) -> int:
    return 672 * d * d + 135 * d + 1


def discriminator_forward(image: Tensor, params: ParamStore, prefix: str,
                          normalization: str = "instance") -> Tensor:
    """Patch score map for a 3-channel image in [-1, 1]."""
    _check_input("discriminator", image, 3)
    size = min(image.shape[2], image.shape[3])
    if size < settings.DISC_MIN_SIZE:
        raise ShapeError(f"discriminator: input {image.shape[2]}x{image.shape[3]} below "
                         f"minimum {settings.DISC_MIN_SIZE}x{settings.DISC_MIN_SIZE}")
    x = image
    for i in range(1, 5):
        x = conv(params, f"{prefix}.layer{i}", x, stride=2, padding=1)
        if i > 1:
            x = normalize(x, normalization)
        x = activation(x, "leaky_relu")
    return conv(params, f"{prefix}.score", x, padding=1)
