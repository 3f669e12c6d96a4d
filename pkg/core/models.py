"""Data models for light settings, synthetic scenes and architecture configs."""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from config import settings
from core.errors import ConfigError, ShapeError


@dataclass(frozen=True, order=True)
class LightSetting:
    direction: str      # compass point, one of settings.DIRECTIONS
    temperature: int    # Kelvin, one of settings.TEMPERATURES

    def __post_init__(self):
        if self.direction not in settings.DIRECTIONS:
            raise ConfigError(f"unknown light direction {self.direction!r}")
        if self.temperature not in settings.TEMPERATURES:
            raise ConfigError(f"unsupported color temperature {self.temperature}")

    @property
    def slug(self) -> str:
        return f"{self.direction}_{self.temperature}"

    @classmethod
    def from_slug(cls, slug: str) -> "LightSetting":
        direction, _, kelvin = slug.partition("_")
        try:
            return cls(direction, int(kelvin))
        except ValueError:
            raise ConfigError(f"malformed light setting {slug!r}") from None

    @classmethod
    def grid(cls) -> list["LightSetting"]:
        """All 40 settings, direction-major in compass order, temperature ascending."""
        return [cls(d, k) for d in settings.DIRECTIONS for k in settings.TEMPERATURES]

    @classmethod
    def target(cls) -> "LightSetting":
        return cls(settings.TARGET_DIRECTION, settings.TARGET_TEMPERATURE)


@dataclass(frozen=True)
class SceneObject:
    shape: str                          # 'disk' or 'box'
    center: tuple[float, float]         # (x, y) in pixels
    size: float                         # radius or half-extent, pixels
    height: float                       # pixels
    albedo: tuple[float, float, float]


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    resolution: int
    ground_albedo: tuple[float, float, float]
    objects: tuple[SceneObject, ...] = ()


@dataclass
class SceneSample:
    """One training pair; images are (H, W, 3) float arrays in [0, 1]."""
    input_image: np.ndarray
    target_image: np.ndarray
    shadow_free: np.ndarray
    source: LightSetting
    target: LightSetting = field(default_factory=LightSetting.target)
    scene_seed: Optional[int] = None

    def __post_init__(self):
        shapes = {self.input_image.shape, self.target_image.shape, self.shadow_free.shape}
        if len(shapes) != 1:
            raise ShapeError(f"sample images must share one resolution, got {sorted(shapes)}")
        if self.input_image.ndim != 3 or self.input_image.shape[2] != 3:
            raise ShapeError(f"sample images must be (H, W, 3), got {self.input_image.shape}")


@dataclass(frozen=True)
class LossWeights:
    w_recon_scene: float = settings.W_RECON_SCENE
    w_recon_shadow: float = settings.W_RECON_SHADOW
    w_recon_final: float = settings.W_RECON_FINAL
    w_adv_scene: float = settings.W_ADV_SCENE
    w_adv_shadow: float = settings.W_ADV_SHADOW
    shadow_threshold: float = settings.SHADOW_THRESHOLD

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not np.isfinite(value) or value < 0:
                raise ConfigError(f"{f.name} must be a non-negative number, got {value}")
        if self.shadow_threshold > 1:
            raise ConfigError(f"shadow_threshold must lie in [0, 1], got {self.shadow_threshold}")

    @property
    def adversarial(self) -> bool:
        return self.w_adv_scene > 0 or self.w_adv_shadow > 0


ABLATIONS = {
    "cal": {"calibration": False},
    "ms": {"multiscale": False},
    "cal+ms": {"calibration": False, "multiscale": False},
}

VARIANT_NAMES = {
    (False, False): "no_cal_no_ms",
    (False, True): "no_cal",
    (True, False): "no_ms",
    (True, True): "full",
}


@dataclass(frozen=True)
class ArchConfig:
    base_channels: int = settings.BASE_CHANNELS
    resolution: int = settings.DEFAULT_RESOLUTION
    normalization: str = "instance"
    activation: str = "relu"
    calibration: bool = True
    multiscale: bool = True
    ms_channels: int = settings.MS_CHANNELS
    rerender_kernels: tuple[int, ...] = settings.RERENDER_KERNELS
    rerender_channels: int = settings.RERENDER_BRANCH_CHANNELS
    reduction: int = settings.RECALIBRATION_REDUCTION
    disc_channels: int = settings.DISC_CHANNELS

    def __post_init__(self):
        res = self.resolution
        if res < 1 or res & (res - 1):
            raise ConfigError(f"resolution must be a power of two, got {res}")
        if res % 16:
            raise ConfigError(f"resolution must be divisible by 16, got {res}")
        if res < 32 and not (res == 16 and self.normalization == "none"):
            raise ConfigError(f"resolution must be >= 32 (16 only without normalization), got {res}")
        if self.base_channels < 4 or self.base_channels % 4:
            raise ConfigError(f"base_channels must be a positive multiple of 4, got {self.base_channels}")
        if self.normalization not in settings.NORMALIZATIONS:
            raise ConfigError(f"normalization must be one of {settings.NORMALIZATIONS}, "
                              f"got {self.normalization!r}")
        if self.activation not in settings.ACTIVATIONS:
            raise ConfigError(f"activation must be one of {settings.ACTIVATIONS}, "
                              f"got {self.activation!r}")
        for name in ("ms_channels", "rerender_channels", "reduction", "disc_channels"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if any(k < 1 or k % 2 == 0 for k in self.rerender_kernels):
            raise ConfigError(f"re-renderer kernels must be odd, got {self.rerender_kernels}")
        recal = self.rerender_channels * len(self.rerender_kernels)
        if recal % self.reduction:
            raise ConfigError(f"re-renderer width {recal} not divisible by reduction {self.reduction}")

    @property
    def variant(self) -> str:
        return VARIANT_NAMES[(self.calibration, self.multiscale)]

    def ablate(self, kind: Optional[str]) -> "ArchConfig":
        """Copy with an ablation applied ('cal', 'ms', 'cal+ms' or None)."""
        if not kind:
            return self
        if kind not in ABLATIONS:
            raise ConfigError(f"unknown ablation {kind!r}; expected one of {', '.join(ABLATIONS)}")
        return replace(self, **ABLATIONS[kind])

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ArchConfig":
        raw = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"malformed architecture line {line!r}")
            raw[key] = value
        kwargs: dict = {}
        for f in fields(cls):
            if f.name not in raw:
                continue
            value = raw.pop(f.name)
            try:
                if f.name == "rerender_kernels":
                    kwargs[f.name] = tuple(int(v) for v in value.split(","))
                elif f.name in ("calibration", "multiscale"):
                    kwargs[f.name] = _parse_bool(value)
                elif f.name in ("normalization", "activation"):
                    kwargs[f.name] = value
                else:
                    kwargs[f.name] = int(value)
            except ValueError:
                raise ConfigError(f"bad architecture value {f.name}={value!r}") from None
        if raw:
            raise ConfigError(f"unknown architecture keys: {', '.join(sorted(raw))}")
        return cls(**kwargs)


def _parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(value)


@dataclass
class RunSummary:
    """What a training run reports back to its caller."""
    variant: str
    steps: int
    generator_parameters: int
    discriminator_parameters: int
    final_checkpoint: str
    losses: dict[str, float] = field(default_factory=dict)
