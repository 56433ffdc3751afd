"""8-bit PNG helpers. Images are exchanged as float arrays in [0, 1]."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def save_rgb8(path: str | Path, pixels: np.ndarray) -> None:
    """Write an (H, W, 3) float array in [0,1] as 8-bit RGB PNG."""
    data = np.rint(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(str(path), format="PNG")


def load_rgb8(path: str | Path) -> np.ndarray:
    """Read an RGB PNG into an (H, W, 3) float64 array in [0,1]."""
    with Image.open(str(path)) as img:
        data = np.asarray(img.convert("RGB"), dtype=np.uint8)
    return data.astype(np.float64) / 255.0


def save_gray8(path: str | Path, values: np.ndarray) -> None:
    """Write an (H, W) array (bool or float in [0,1]) as 8-bit grayscale PNG."""
    if values.dtype == bool:
        data = np.where(values, np.uint8(255), np.uint8(0))
    else:
        data = np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(str(path), format="PNG")


def load_gray8(path: str | Path) -> np.ndarray:
    """Read a grayscale PNG into an (H, W) float64 array in [0,1]."""
    with Image.open(str(path)) as img:
        data = np.asarray(img.convert("L"), dtype=np.uint8)
    return data.astype(np.float64) / 255.0
