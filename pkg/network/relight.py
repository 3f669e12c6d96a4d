"""The three-subnetwork relighting model.

    X --scene reconversion--> (scene_feature, shadow_free)
    X --shadow estimation---> (shadow_feature, relit)
    (scene_feature, shadow_feature) --re-renderer--> Y_hat

Both decomposition subnetworks share one encoder/decoder ladder: a 7x7 stem,
four DFSBs, nine residual units and four UFSBs. Scene reconversion adds
multi-scale fusion of the first three UFSB outputs plus a skip connection to
the stem; shadow estimation uses the bare ladder. Two patch discriminators
(scene and shadow) complete the bundle for adversarial training.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import prod
from typing import NamedTuple

from config import settings
from core.errors import ShapeError
from core.models import ArchConfig
from core.params import ParamStore
from core.tensor import Tensor, activation, concat_channels
from network.blocks import (ShapeList, Trace, conv, conv_shapes, deconv, deconv_shapes,
                            dfsb_config, dfsb_forward, dfsb_shapes, discriminator_forward,
                            discriminator_shapes, recalibration_forward, recalibration_shapes,
                            resblocks_forward, resblocks_shapes, ufsb_config, ufsb_forward,
                            ufsb_shapes, BlockConfig)

SCENE = "scene"
SHADOW = "shadow"
RERENDER = "rerender"
DISC_SCENE = "disc_scene"
DISC_SHADOW = "disc_shadow"

GENERATOR_PREFIXES = (f"{SCENE}.", f"{SHADOW}.", f"{RERENDER}.")
DISCRIMINATOR_PREFIXES = (f"{DISC_SCENE}.", f"{DISC_SHADOW}.")

# (kernel, stride, padding) of the upsampling branches fed by UFSB 1..3
MS_BRANCHES = ((8, 8, 0), (4, 4, 0), (4, 2, 1))


class RelightOutput(NamedTuple):
    y_hat: Tensor
    shadow_free: Tensor
    relit: Tensor


def _stage_channels(arch: ArchConfig) -> list[int]:
    c = arch.base_channels
    return [c * 2 ** i for i in range(settings.ENCODER_STAGES)]


def _block(arch: ArchConfig, channels: int, down: bool) -> BlockConfig:
    make = dfsb_config if down else ufsb_config
    return make(channels, arch.normalization, arch.activation, arch.calibration)


# ----------------------------------------
# Parameter enumeration
# ----------------------------------------

def _ladder_shapes(prefix: str, arch: ArchConfig) -> ShapeList:
    c = arch.base_channels
    stages = _stage_channels(arch)
    shapes = conv_shapes(f"{prefix}.shallow", 3, c, 7)
    for i, ch in enumerate(stages, start=1):
        shapes += dfsb_shapes(f"{prefix}.enc.dfsb{i}", _block(arch, ch, down=True))
    bottleneck = 2 * stages[-1]
    shapes += resblocks_shapes(f"{prefix}.res", bottleneck)
    for i, ch in enumerate(reversed(stages), start=1):
        shapes += ufsb_shapes(f"{prefix}.dec.ufsb{i}", _block(arch, 2 * ch, down=False))
    return shapes


def scene_shapes(arch: ArchConfig) -> ShapeList:
    c, m = arch.base_channels, arch.ms_channels
    shapes = _ladder_shapes(SCENE, arch)
    if arch.multiscale:
        # UFSB i (i = 1..3) emits c * 2^(4-i) channels
        for i, (k, _, _) in enumerate(MS_BRANCHES, start=1):
            shapes += deconv_shapes(f"{SCENE}.ms.up{i}", c * 2 ** (4 - i), m, k)
        shapes += conv_shapes(f"{SCENE}.ms.fuse", 3 * m + c, c, 1)
    shapes += conv_shapes(f"{SCENE}.skip", 2 * c, c, 3)
    shapes += conv_shapes(f"{SCENE}.head", c, 3, 7)
    return shapes


def shadow_shapes(arch: ArchConfig) -> ShapeList:
    return _ladder_shapes(SHADOW, arch) + conv_shapes(f"{SHADOW}.head", arch.base_channels, 3, 7)


def rerender_shapes(arch: ArchConfig) -> ShapeList:
    c, b = arch.base_channels, arch.rerender_channels
    shapes: ShapeList = []
    for k in arch.rerender_kernels:
        shapes += conv_shapes(f"{RERENDER}.branch{k}", 2 * c, b, k)
    width = b * len(arch.rerender_kernels)
    shapes += recalibration_shapes(f"{RERENDER}.recal", width, arch.reduction)
    shapes += conv_shapes(f"{RERENDER}.out", width, 3, 7)
    return shapes


def generator_shapes(arch: ArchConfig) -> ShapeList:
    return scene_shapes(arch) + shadow_shapes(arch) + rerender_shapes(arch)


def discriminator_pair_shapes(arch: ArchConfig) -> ShapeList:
    return discriminator_shapes(DISC_SCENE, arch.disc_channels) + \
        discriminator_shapes(DISC_SHADOW, arch.disc_channels)


def model_shapes(arch: ArchConfig) -> ShapeList:
    return generator_shapes(arch) + discriminator_pair_shapes(arch)


def count_parameters(shapes: ShapeList) -> int:
    return sum(prod(shape) for _, shape in shapes)


def scene_param_count(c: int, m: int) -> int:
    return 54666 * c * c + 765 * c + 611 * c * m + 3 * m + 3


def shadow_param_count(c: int) -> int:
    return 54647 * c * c + 763 * c + 3


def rerender_param_count(c: int) -> int:
    """Closed form for the default re-renderer (kernels 3..25, 16-wide branches, r = 4)."""
    return 38816 * c + 15143


# ----------------------------------------
# Forward passes
# ----------------------------------------

def _check_image(x: Tensor, arch: ArchConfig) -> None:
    if x.shape[1] != 3:
        raise ShapeError(f"expected a 3-channel image, got {x.shape[1]} channels")
    if x.shape[2] != arch.resolution or x.shape[3] != arch.resolution:
        raise ShapeError(f"expected a {arch.resolution}x{arch.resolution} image, "
                         f"got {x.shape[2]}x{x.shape[3]}")


def _ladder(x: Tensor, params: ParamStore, prefix: str, arch: ArchConfig,
            trace: Trace) -> tuple[Tensor, Tensor, list[Tensor]]:
    """Returns (F_shallow, F_decoder, [F_UFSB^1, F_UFSB^2, F_UFSB^3])."""
    stages = _stage_channels(arch)
    shallow = conv(params, f"{prefix}.shallow", x, padding=3)
    h = shallow
    for i, ch in enumerate(stages, start=1):
        h = dfsb_forward(h, params, f"{prefix}.enc.dfsb{i}", _block(arch, ch, down=True), trace)
    encoded = h
    bottleneck = 2 * stages[-1]
    h = resblocks_forward(h, params, f"{prefix}.res",
                          BlockConfig(bottleneck, bottleneck, arch.normalization, arch.activation))
    residual = h
    intermediates = []
    for i, ch in enumerate(reversed(stages), start=1):
        h = ufsb_forward(h, params, f"{prefix}.dec.ufsb{i}", _block(arch, 2 * ch, down=False),
                         trace)
        intermediates.append(h)

    if trace is not None:
        trace[f"{prefix}.shallow"] = shallow
        trace[f"{prefix}.encoder"] = encoded
        trace[f"{prefix}.res"] = residual
        trace[f"{prefix}.decoder"] = h
        for i, t in enumerate(intermediates[:3], start=1):
            trace[f"{prefix}.ufsb{i}"] = t
    return shallow, h, intermediates[:3]


def scene_reconversion_forward(x: Tensor, params: ParamStore, arch: ArchConfig,
                               trace: Trace = None) -> tuple[Tensor, Tensor]:
    """Returns (scene_feature, shadow_free_image)."""
    _check_image(x, arch)
    shallow, decoded, ufsb_outputs = _ladder(x, params, SCENE, arch, trace)
    if arch.multiscale:
        branches = []
        for i, (feature, (_, stride, padding)) in enumerate(zip(ufsb_outputs, MS_BRANCHES),
                                                           start=1):
            up = deconv(params, f"{SCENE}.ms.up{i}", feature, stride=stride, padding=padding)
            branches.append(up)
            if trace is not None:
                trace[f"{SCENE}.up{i}"] = up
        fused = conv(params, f"{SCENE}.ms.fuse", concat_channels(branches + [decoded]))
    else:
        fused = decoded
    feature = conv(params, f"{SCENE}.skip", concat_channels([fused, shallow]), padding=1)
    image = activation(conv(params, f"{SCENE}.head", feature, padding=3), "tanh")
    if trace is not None:
        trace[f"{SCENE}.fused"] = fused
        trace[f"{SCENE}.feature"] = feature
    return feature, image


def shadow_estimation_forward(x: Tensor, params: ParamStore, arch: ArchConfig,
                              trace: Trace = None) -> tuple[Tensor, Tensor]:
    """Returns (shadow_feature, relit_image)."""
    _check_image(x, arch)
    _, decoded, _ = _ladder(x, params, SHADOW, arch, trace)
    image = activation(conv(params, f"{SHADOW}.head", decoded, padding=3), "tanh")
    return decoded, image


def rerender_forward(scene_feature: Tensor, shadow_feature: Tensor, params: ParamStore,
                     arch: ArchConfig, trace: Trace = None) -> Tensor:
    if scene_feature.shape != shadow_feature.shape:
        raise ShapeError(f"re-renderer: scene feature {scene_feature.shape} and shadow "
                         f"feature {shadow_feature.shape} differ")
    if scene_feature.shape[1] != arch.base_channels:
        raise ShapeError(f"re-renderer: expected {arch.base_channels} feature channels, "
                         f"got {scene_feature.shape[1]}")
    joined = concat_channels([scene_feature, shadow_feature])
    branches = [
        activation(conv(params, f"{RERENDER}.branch{k}", joined, padding=k // 2), arch.activation)
        for k in arch.rerender_kernels
    ]
    mixed = recalibration_forward(concat_channels(branches), params, f"{RERENDER}.recal",
                                  arch.reduction, arch.activation, trace)
    return activation(conv(params, f"{RERENDER}.out", mixed, padding=3), "tanh")


# ----------------------------------------
# Bundle
# ----------------------------------------

@dataclass
class ModelBundle:
    """Architecture plus every learnable tensor of generator and discriminators."""
    arch: ArchConfig
    params: ParamStore = field(repr=False)

    def __post_init__(self):
        self.params.check_shapes(model_shapes(self.arch))

    @classmethod
    def initialize(cls, arch: ArchConfig, seed: int) -> "ModelBundle":
        return cls(arch, ParamStore.from_shapes(model_shapes(arch), seed))

    def generator_params(self) -> ParamStore:
        return self.params.subset(GENERATOR_PREFIXES)

    def discriminator_params(self) -> ParamStore:
        return self.params.subset(DISCRIMINATOR_PREFIXES)

    def astype(self, dtype) -> "ModelBundle":
        return ModelBundle(self.arch, self.params.astype(dtype))


def full_forward(x: Tensor, bundle: ModelBundle, trace: Trace = None) -> RelightOutput:
    arch, params = bundle.arch, bundle.params
    scene_feature, shadow_free = scene_reconversion_forward(x, params, arch, trace)
    shadow_feature, relit = shadow_estimation_forward(x, params, arch, trace)
    y_hat = rerender_forward(scene_feature, shadow_feature, params, arch, trace)
    return RelightOutput(y_hat, shadow_free, relit)


def discriminate(image: Tensor, bundle: ModelBundle, which: str) -> Tensor:
    prefix = {"scene": DISC_SCENE, "shadow": DISC_SHADOW}[which]
    return discriminator_forward(image, bundle.params, prefix, bundle.arch.normalization)
