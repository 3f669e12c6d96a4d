"""Training configuration.

Config files are flat ``key=value`` text with ``#`` comments, parsed with
python-dotenv. Every key is optional; missing keys keep the desk-scale
defaults from config/settings.py.
"""
import io
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

from dotenv import dotenv_values

from config import settings
from core.errors import ConfigError
from core.models import ArchConfig, LossWeights


@dataclass(frozen=True)
class TrainConfig:
    """Configuration for one training run."""
    steps: int = settings.DEFAULT_STEPS
    batch_size: int = settings.DEFAULT_BATCH_SIZE
    learning_rate: float = settings.LEARNING_RATE
    beta1: float = settings.ADAM_BETA1
    beta2: float = settings.ADAM_BETA2
    epsilon: float = settings.ADAM_EPSILON
    seed: int = settings.DEFAULT_SEED
    checkpoint_interval: int = settings.DEFAULT_CHECKPOINT_INTERVAL
    log_every: int = settings.DEFAULT_LOG_EVERY
    resize_factor: float = settings.DEFAULT_RESIZE_FACTOR
    base_channels: int = settings.TEST_BASE_CHANNELS
    resolution: int = settings.DEFAULT_RESOLUTION
    normalization: str = "instance"
    activation: str = "relu"
    ms_channels: int = settings.MS_CHANNELS
    disc_channels: int = settings.DISC_CHANNELS
    calibration: bool = True
    multiscale: bool = True
    adversarial: bool = True
    w_recon_scene: float = settings.W_RECON_SCENE
    w_recon_shadow: float = settings.W_RECON_SHADOW
    w_recon_final: float = settings.W_RECON_FINAL
    w_adv_scene: float = settings.W_ADV_SCENE
    w_adv_shadow: float = settings.W_ADV_SHADOW
    shadow_threshold: float = settings.SHADOW_THRESHOLD

    def __post_init__(self):
        for name in ("steps", "batch_size", "checkpoint_interval", "log_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if self.steps > settings.MAX_STEPS:
            raise ConfigError(f"steps must be at most {settings.MAX_STEPS}, got {self.steps}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if not self.learning_rate > 0 or not self.epsilon > 0:
            raise ConfigError("learning_rate and epsilon must be positive")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {getattr(self, name)}")
        if not 0.0 < self.resize_factor <= 1.0:
            raise ConfigError(f"resize_factor must lie in (0, 1], got {self.resize_factor}")
        inverse = 1.0 / self.resize_factor
        if abs(inverse - round(inverse)) > 1e-9:
            raise ConfigError(f"resize_factor must be 1/k for an integer k, got {self.resize_factor}")
        # Derived configs validate the remaining fields
        self.arch()
        self.loss_weights()

    @property
    def downscale(self) -> int:
        """Integer factor corpus images are reduced by."""
        return int(round(1.0 / self.resize_factor))

    def arch(self) -> ArchConfig:
        return ArchConfig(
            base_channels=self.base_channels,
            resolution=self.resolution,
            normalization=self.normalization,
            activation=self.activation,
            calibration=self.calibration,
            multiscale=self.multiscale,
            ms_channels=self.ms_channels,
            disc_channels=self.disc_channels,
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(
            w_recon_scene=self.w_recon_scene,
            w_recon_shadow=self.w_recon_shadow,
            w_recon_final=self.w_recon_final,
            w_adv_scene=self.w_adv_scene,
            w_adv_shadow=self.w_adv_shadow,
            shadow_threshold=self.shadow_threshold,
        )

    def with_overrides(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def to_text(self) -> str:
        lines = ["# light-source-transfer training config"]
        for f in fields(self):
            lines.append(f"{f.name}={_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "TrainConfig":
        raw = dotenv_values(stream=io.StringIO(text))
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(key for key in raw if key not in known)
        if unknown:
            raise ConfigError(f"{source}: unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        for key, value in raw.items():
            if value is None or value == "":
                raise ConfigError(f"{source}: missing value for {key}")
            kwargs[key] = _parse_value(key, value, type(known[key].default), source)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: Optional[Path]) -> "TrainConfig":
        """Load a config file; None yields the defaults."""
        if path is None:
            return cls()
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
        return cls.from_text(text, source=str(path))


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(key: str, value: str, kind: type, source: str):
    text = value.strip()
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            number = float(text)
            if not math.isfinite(number):
                raise ValueError(text)
            return number
        return text
    except ValueError:
        raise ConfigError(f"{source}: bad value for {key}: {value!r}") from None


def config_help() -> str:
    """Key reference shown in ``train --help``."""
    defaults = TrainConfig()
    lines = ["config keys (key=value, one per line, # comments):"]
    for f in fields(TrainConfig):
        lines.append(f"  {f.name:<20} default {_format_value(getattr(defaults, f.name))}")
    return "\n".join(lines)
