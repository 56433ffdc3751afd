"""Structure guidance: Canny edge extraction and an edge-overlap metric.

The pipeline is fully pinned so two implementations produce identical maps:
luma (0.299/0.587/0.114 on the 0-255 scale), 5x5 Gaussian blur (sigma 1.4),
Sobel gradients, non-maximum suppression quantized to four directions, then
hysteresis. Borders use replicate padding throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imgio import load_gray8, save_gray8
from .scene import Frame

DEFAULT_LOW = 100.0
DEFAULT_HIGH = 200.0

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = np.array([[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]])


def _gaussian_kernel5(sigma: float = 1.4) -> np.ndarray:
    ax = np.arange(-2.0, 3.0)
    xx, yy = np.meshgrid(ax, ax)
    k = np.exp(-(xx ** 2 + yy ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


_BLUR = _gaussian_kernel5()


@dataclass(eq=False)
class EdgeMap:
    """Binary edge image."""

    edges: np.ndarray  # (H, W) bool

    @property
    def width(self) -> int:
        return self.edges.shape[1]

    @property
    def height(self) -> int:
        return self.edges.shape[0]


def luma(pixels: np.ndarray) -> np.ndarray:
    """Grayscale on the 0-255 scale from [0,1] RGB."""
    return (0.299 * pixels[..., 0] + 0.587 * pixels[..., 1]
            + 0.114 * pixels[..., 2]) * 255.0


def canny(frame: Frame, low: float = DEFAULT_LOW, high: float = DEFAULT_HIGH) -> EdgeMap:
    """Edge detection with thresholds on the 0-255 gradient-magnitude scale."""
    if not 0.0 <= low <= high:
        raise ValueError(f"need 0 <= low <= high, got low={low} high={high}")
    pixels = frame.pixels if isinstance(frame, Frame) else np.asarray(frame)
    h, w = pixels.shape[:2]
    if h < 5 or w < 5:
        raise ValueError(f"frame too small for edge detection: {w}x{h} (need >= 5x5)")

    gray = luma(pixels)
    smooth = ndimage.correlate(gray, _BLUR, mode="nearest")
    gx = ndimage.correlate(smooth, _SOBEL_X, mode="nearest")
    gy = ndimage.correlate(smooth, _SOBEL_Y, mode="nearest")
    mag = np.hypot(gx, gy)

    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    direction = np.zeros(angle.shape, dtype=np.int8)
    direction[(angle >= 22.5) & (angle < 67.5)] = 1
    direction[(angle >= 67.5) & (angle < 112.5)] = 2
    direction[(angle >= 112.5) & (angle < 157.5)] = 3

    # suppress non-maxima along the quantized gradient direction
    magp = np.pad(mag, 1, mode="edge")
    nms = np.zeros_like(mag)
    for d, (dy, dx) in enumerate(((0, 1), (1, 1), (1, 0), (1, -1))):
        sel = direction == d
        ahead = magp[1 + dy:h + 1 + dy, 1 + dx:w + 1 + dx]
        behind = magp[1 - dy:h + 1 - dy, 1 - dx:w + 1 - dx]
        keep = sel & (mag >= ahead) & (mag >= behind)
        nms[keep] = mag[keep]

    strong = nms >= high
    weak = nms >= low
    if not strong.any():
        return EdgeMap(np.zeros((h, w), dtype=bool))
    labels, count = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    seeded = np.unique(labels[strong])
    keep = np.zeros(count + 1, dtype=bool)
    keep[seeded[seeded > 0]] = True
    return EdgeMap(keep[labels])


def edge_iou(a: EdgeMap, b: EdgeMap, dilation: int = 1) -> float:
    """Intersection-over-union after dilating both maps (Chebyshev radius).

    Returns 1.0 when both maps are empty.
    """
    if a.edges.shape != b.edges.shape:
        raise ValueError(f"edge map shapes differ: {a.edges.shape} vs {b.edges.shape}")
    ea, eb = a.edges, b.edges
    if dilation > 0:
        st = np.ones((3, 3), dtype=bool)
        if ea.any():
            ea = ndimage.binary_dilation(ea, structure=st, iterations=dilation)
        if eb.any():
            eb = ndimage.binary_dilation(eb, structure=st, iterations=dilation)
    union = np.count_nonzero(ea | eb)
    if union == 0:
        return 1.0
    return np.count_nonzero(ea & eb) / union


def save_edges(path: str | Path, edge_map: EdgeMap) -> None:
    save_gray8(path, edge_map.edges)


def load_edges(path: str | Path) -> EdgeMap:
    return EdgeMap(load_gray8(path) >= 0.5)
