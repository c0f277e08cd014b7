# --------------------------------------------------------
# 🎨 textures.py — deterministic procedural scene textures
# --------------------------------------------------------
from typing import Callable, Dict

import cv2
import numpy as np

from smm import Image

DEFAULT_SIZE = 210
DEFAULT_SEED = 7


def _stretch(field: np.ndarray, low: float, high: float) -> Image:
    lo, hi = float(field.min()), float(field.max())
    if hi - lo < 1e-12:
        return Image(np.full(field.shape, (low + high) / 2.0))
    return Image(low + (field - lo) * (high - low) / (hi - lo))


def _blobs(size: int, rng: np.random.Generator, count: int, scale=(0.08, 0.16)) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / float(size)
    field = np.zeros((size, size))
    for _ in range(count):
        cx, cy = rng.uniform(0.0, 1.0, 2)
        sx, sy = rng.uniform(*scale, 2)
        theta = rng.uniform(0.0, np.pi)
        amp = rng.uniform(-1.0, 1.0)
        dx, dy = xx - cx, yy - cy
        a = np.cos(theta) * dx + np.sin(theta) * dy
        b = -np.sin(theta) * dx + np.cos(theta) * dy
        field += amp * np.exp(-0.5 * ((a / sx) ** 2 + (b / sy) ** 2))
    return field


def blob_texture(size: int = DEFAULT_SIZE, seed: int = DEFAULT_SEED) -> Image:
    """Overlapping anisotropic blobs on a tilted ramp: broad spatial frequency content."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / float(size)
    field = _blobs(size, rng, count=20) + 0.4 * (xx - 0.5) - 0.2 * (yy - 0.5)
    return _stretch(field, 20.0, 235.0)


def fine_texture(size: int = DEFAULT_SIZE, seed: int = DEFAULT_SEED) -> Image:
    """Blobs plus blurred noise, for a high-texture view."""
    rng = np.random.default_rng(seed)
    noise = cv2.GaussianBlur(rng.standard_normal((size, size)), (0, 0), sigmaX=size / 30.0)
    coarse = _blobs(size, rng, count=20)
    field = coarse / (np.abs(coarse).max() + 1e-12) + 0.4 * noise / (np.abs(noise).max() + 1e-12)
    return _stretch(field, 10.0, 245.0)


def low_texture(size: int = DEFAULT_SIZE, seed: int = DEFAULT_SEED) -> Image:
    """Gentle ramp with a couple of faint, wide blobs."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / float(size)
    field = 0.6 * xx + 0.3 * yy + 0.5 * _blobs(size, rng, count=3, scale=(0.12, 0.2))
    return _stretch(field, 90.0, 165.0)


def constant_texture(size: int = DEFAULT_SIZE, level: float = 128.0) -> Image:
    return Image(np.full((size, size), float(level)))


def mirrored(img: Image) -> Image:
    """Left-right symmetric version of an image."""
    return Image(0.5 * (img.intensities + img.intensities[:, ::-1]))


TEXTURES: Dict[str, Callable[[int], Image]] = {
    "blobs": blob_texture,
    "fine": fine_texture,
    "low": low_texture,
    "constant": constant_texture,
}
