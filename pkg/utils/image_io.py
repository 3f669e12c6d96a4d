"""8-bit RGB PNG reading and writing, plus conversion to and from network tensors."""
from __future__ import annotations

import io
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, ImageOps, UnidentifiedImageError

from core.errors import CorpusError, ImageFormatError
from core.tensor import Tensor
from utils.io import safe_write_bytes


def quantize(image: np.ndarray) -> np.ndarray:
    """round(clamp(v, 0, 1) * 255) as uint8."""
    return np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def encode_png(image: np.ndarray) -> bytes:
    if image.ndim != 3 or image.shape[2] != 3:
        raise ImageFormatError(f"expected an (H, W, 3) image, got shape {image.shape}")
    pixels = image if image.dtype == np.uint8 else quantize(image)
    buffer = io.BytesIO()
    Image.fromarray(pixels).save(buffer, format="PNG")
    return buffer.getvalue()


def write_image(path: Path, image: np.ndarray) -> None:
    """Write an (H, W, 3) image, floats in [0, 1] or uint8, as an 8-bit RGB PNG."""
    safe_write_bytes(Path(path), encode_png(image))


def read_pixels(path: Path) -> np.ndarray:
    """Raw uint8 (H, W, 3) pixels of a square RGB image file."""
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"missing image file {path}")
    try:
        with Image.open(path) as img:
            img.load()
            mode, size = img.mode, img.size
            pixels = np.asarray(img) if mode == "RGB" else None
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageFormatError(f"corrupt image file {path}: {exc}") from exc
    if mode != "RGB":
        raise ImageFormatError(f"{path}: expected 8-bit RGB, got mode {mode}")
    if size[0] != size[1]:
        raise ImageFormatError(f"{path}: expected a square image, got {size[0]}x{size[1]}")
    return pixels


def read_image(path: Path) -> np.ndarray:
    """Float32 (H, W, 3) image in [0, 1]."""
    return read_pixels(path).astype(np.float32) / 255.0


def downscale(pixels: np.ndarray, factor: int) -> np.ndarray:
    """Box-downscale uint8 pixels by an integer factor."""
    if factor == 1:
        return pixels
    return np.asarray(Image.fromarray(pixels).reduce(factor))


def enhance_contrast(image: np.ndarray) -> np.ndarray:
    """Autocontrast copy for inspecting faint light effects; returns uint8 pixels."""
    pixels = image if image.dtype == np.uint8 else quantize(image)
    return np.asarray(ImageOps.autocontrast(Image.fromarray(pixels)))


def to_tensor(images: Sequence[np.ndarray]) -> Tensor:
    """Stack (H, W, 3) [0, 1] images into an (n, 3, H, W) float32 tensor in [-1, 1]."""
    batch = np.stack([np.asarray(img, dtype=np.float32) for img in images])
    return Tensor(np.ascontiguousarray(batch.transpose(0, 3, 1, 2)) * 2.0 - 1.0)


def from_tensor(tensor: Tensor) -> list[np.ndarray]:
    """Inverse of to_tensor: list of (H, W, 3) images clipped to [0, 1]."""
    images = np.clip((tensor.data.astype(np.float64) + 1.0) * 0.5, 0.0, 1.0)
    return [img.transpose(1, 2, 0) for img in images]
