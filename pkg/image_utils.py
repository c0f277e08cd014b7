# --------------------------------------------------------
# 🖼️ image_utils.py — PGM/PNG ingestion and export, CSV grids
# --------------------------------------------------------
import os
from typing import Union

import cv2
import numpy as np
import pandas as pd
from PIL import Image as PILImage

from smm import Image, SmmGradient, SmmImage
from textures import DEFAULT_SIZE, TEXTURES

ALLOWED_EXTENSIONS = {".pgm", ".png"}


def _check_extension(path: str) -> str:
    ext = os.path.splitext(path)[1].lower()
    if ext not in ALLOWED_EXTENSIONS:
        raise ValueError(f"Unsupported image type: {ext or '(none)'} (use .pgm or .png)")
    return ext


def load_image(path: str) -> Image:
    """Read an 8-bit grayscale PGM (P5) or PNG; colour inputs are converted to luma."""
    _check_extension(path)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"image not found: {path}")
    with PILImage.open(path) as pic:
        return Image(np.asarray(pic.convert("L"), dtype=float))


def load_texture(name_or_path: str, size: int = DEFAULT_SIZE) -> Image:
    """A registered procedural texture by name, otherwise an image file."""
    if name_or_path in TEXTURES:
        return TEXTURES[name_or_path](size)
    return load_image(name_or_path)


def to_uint8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def minmax_uint8(values: np.ndarray) -> np.ndarray:
    """Stretch any real grid onto 0..255 for inspection."""
    return cv2.normalize(np.asarray(values, dtype=np.float64), None, 0, 255,
                         cv2.NORM_MINMAX, dtype=cv2.CV_8U)


def save_image(img: Union[Image, np.ndarray], path: str) -> str:
    """Write intensities (already in 0..255) as 8-bit PGM or PNG."""
    _check_extension(path)
    values = img.intensities if isinstance(img, Image) else np.asarray(img)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    PILImage.fromarray(to_uint8(values)).save(path)
    return path


def save_minmax_image(values: np.ndarray, path: str) -> str:
    _check_extension(path)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    PILImage.fromarray(minmax_uint8(values)).save(path)
    return path


def save_grid_csv(values: np.ndarray, path: str) -> str:
    """Row-major grid, one CSV row per image row, no header."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    pd.DataFrame(np.asarray(values)).to_csv(path, header=False, index=False, float_format="%.12g")
    return path


def load_grid_csv(path: str) -> np.ndarray:
    return pd.read_csv(path, header=None).to_numpy(dtype=float)


def export_smm(smm: SmmImage, csv_path: str = None, pgm_path: str = None) -> None:
    if csv_path:
        save_grid_csv(smm.values, csv_path)
    if pgm_path:
        save_minmax_image(smm.values, pgm_path)


def export_gradient(grad: SmmGradient, prefix: str) -> None:
    """Writes <prefix>_du.csv/.pgm and <prefix>_dv.csv/.pgm."""
    for name, values in (("du", grad.du), ("dv", grad.dv)):
        save_grid_csv(values, f"{prefix}_{name}.csv")
        save_minmax_image(values, f"{prefix}_{name}.pgm")
