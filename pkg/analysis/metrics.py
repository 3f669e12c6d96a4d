"""Image quality metrics: PSNR, SSIM and the mean perceptual score.

All functions take float arrays in [0, 1] shaped (H, W) or (H, W, C).
LPIPS is never computed here; it is supplied from outside and only combined.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter

from core.errors import MetricError, ShapeError

IDENTICAL = "identical"

# Gaussian window: sigma 1.5 truncated at 3.5 sigma gives 11 taps (radius 5)
SSIM_SIGMA = 1.5
SSIM_TRUNCATE = 3.5
SSIM_WINDOW = 11
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DYNAMIC_RANGE = 1.0


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")


def mse(a: np.ndarray, b: np.ndarray) -> float:
    _check_pair(a, b)
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.mean(diff * diff))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10 log10(1 / mse); math.inf for identical images."""
    error = mse(a, b)
    if error == 0.0:
        return math.inf
    return 10.0 * math.log10(DYNAMIC_RANGE ** 2 / error)


def _ssim_plane(x: np.ndarray, y: np.ndarray) -> float:
    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2

    def blur(v):
        return gaussian_filter(v, sigma=SSIM_SIGMA, truncate=SSIM_TRUNCATE)

    mu_x, mu_y = blur(x), blur(y)
    var_x = blur(x * x) - mu_x * mu_x
    var_y = blur(y * y) - mu_y * mu_y
    cov = blur(x * y) - mu_x * mu_y

    ssim_map = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / \
        ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2))
    # Only windows lying fully inside the image
    pad = SSIM_WINDOW // 2
    return float(ssim_map[pad:-pad, pad:-pad].mean())


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Windowed SSIM averaged over channels and valid window positions."""
    _check_pair(a, b)
    if a.ndim not in (2, 3):
        raise ShapeError(f"ssim expects (H, W) or (H, W, C) images, got shape {a.shape}")
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ShapeError(f"ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, "
                         f"got {a.shape[0]}x{a.shape[1]}")
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.ndim == 2:
        return _ssim_plane(x, y)
    return float(np.mean([_ssim_plane(x[..., ch], y[..., ch]) for ch in range(x.shape[2])]))


def mps(ssim_value: float, lpips_value: float) -> float:
    """Mean perceptual score 0.5 * (SSIM + (1 - LPIPS))."""
    for name, value in (("ssim", ssim_value), ("lpips", lpips_value)):
        if not 0.0 <= value <= 1.0:
            raise MetricError(f"{name} must lie in [0, 1] for MPS, got {value}")
    return 0.5 * (ssim_value + (1.0 - lpips_value))


def format_psnr(value: float) -> str | float:
    return IDENTICAL if math.isinf(value) else value


def parse_psnr(value) -> float:
    return math.inf if value == IDENTICAL else float(value)


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    lpips: Optional[float] = None
    mps: Optional[float] = None
    pairs: int = 0

    def __post_init__(self):
        if (self.lpips is None) != (self.mps is None):
            raise MetricError("mps must be present exactly when lpips is present")

    @classmethod
    def build(cls, psnr_value: float, ssim_value: float, lpips_value: Optional[float] = None,
              pairs: int = 0) -> "MetricReport":
        mps_value = None if lpips_value is None else mps(ssim_value, lpips_value)
        return cls(psnr_value, ssim_value, lpips_value, mps_value, pairs)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["psnr"] = format_psnr(self.psnr)
        return {key: value for key, value in data.items() if value is not None}

    def to_text(self) -> str:
        return "".join(f"{key}={value}\n" for key, value in self.to_dict().items())

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricReport":
        return cls(
            psnr=parse_psnr(data["psnr"]),
            ssim=float(data["ssim"]),
            lpips=None if data.get("lpips") is None else float(data["lpips"]),
            mps=None if data.get("mps") is None else float(data["mps"]),
            pairs=int(data.get("pairs", 0)),
        )

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_text(cls, text: str) -> "MetricReport":
        data = {}
        for line in text.splitlines():
            key, sep, value = line.partition("=")
            if sep:
                data[key.strip()] = value.strip()
        return cls.from_dict(data)
