"""Consistency metrics: dense optical flow agreement and frame deviations.

dense_flow is a Horn-Schunck iteration with central-difference spatial
derivatives on the two-frame mean, replicate borders, and the classic 3x3
weighted neighborhood average. It replaces learned/OpenCV flow so results
are fully reproducible; only orderings and zero cases are meaningful, not
absolute magnitudes from other implementations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .guidance import luma
from .mapping import warp_keyframe
from .parallel import parallel_map
from .scene import AlphaMap, Frame, Scene

HS_NEIGHBORHOOD = np.array([[1 / 12, 1 / 6, 1 / 12],
                            [1 / 6, 0.0, 1 / 6],
                            [1 / 12, 1 / 6, 1 / 12]])


@dataclass(eq=False)
class FlowField:
    """Per-pixel displacement in pixels: dx rightward, dy downward."""

    dx: np.ndarray
    dy: np.ndarray

    @property
    def width(self) -> int:
        return self.dx.shape[1]

    @property
    def height(self) -> int:
        return self.dx.shape[0]


def _gray(frame) -> np.ndarray:
    pixels = frame.pixels if isinstance(frame, Frame) else np.asarray(frame)
    return luma(pixels) / 255.0


def dense_flow(a, b, iterations: int = 100, smoothness: float = 0.1) -> FlowField:
    """Horn-Schunck optical flow from frame a to frame b."""
    ga, gb = _gray(a), _gray(b)
    if ga.shape != gb.shape:
        raise ValueError(f"frame shapes differ: {ga.shape} vs {gb.shape}")
    mean = 0.5 * (ga + gb)
    ix = ndimage.correlate1d(mean, [-0.5, 0.0, 0.5], axis=1, mode="nearest")
    iy = ndimage.correlate1d(mean, [-0.5, 0.0, 0.5], axis=0, mode="nearest")
    it = gb - ga
    denom = smoothness ** 2 + ix ** 2 + iy ** 2
    u = np.zeros_like(ga)
    v = np.zeros_like(ga)
    for _ in range(iterations):
        ubar = ndimage.correlate(u, HS_NEIGHBORHOOD, mode="nearest")
        vbar = ndimage.correlate(v, HS_NEIGHBORHOOD, mode="nearest")
        shared = (ix * ubar + iy * vbar + it) / denom
        u = ubar - ix * shared
        v = vbar - iy * shared
    return FlowField(dx=u, dy=v)


def flow_consistency(original: Sequence[Frame], edited: Sequence[Frame]) -> float:
    """Mean L2 distance between consecutive-pair flows of the two videos."""
    if len(original) != len(edited):
        raise ValueError(f"video lengths differ: {len(original)} vs {len(edited)}")
    if len(original) < 2:
        return 0.0

    def pair_distance(i: int) -> float:
        fo = dense_flow(original[i], original[i + 1])
        fe = dense_flow(edited[i], edited[i + 1])
        return float(np.hypot(fo.dx - fe.dx, fo.dy - fe.dy).mean())

    distances = parallel_map(pair_distance, list(range(len(original) - 1)))
    return float(np.mean(distances))


def positional_deviation(original: Sequence[Frame], edited: Sequence[Frame]) -> float:
    """Mean absolute per-pixel, per-channel difference across all frames."""
    if len(original) != len(edited):
        raise ValueError(f"video lengths differ: {len(original)} vs {len(edited)}")
    total = 0.0
    for fo, fe in zip(original, edited):
        total += float(np.abs(fo.pixels - fe.pixels).mean())
    return total / len(original)


def temporal_deviation(edited: Sequence[Frame], scene: Scene) -> float:
    """Motion-compensated deviation between adjacent edited frames.

    Each frame i >= 1 is compared against frame i-1 warped through the
    top-most foreground layer's atlas mapping (the background mapping with
    full opacity when the scene has no foregrounds), restricted to pixels
    the warp declares valid. Pairs with no valid pixels contribute zero.
    """
    if len(edited) != scene.frame_count:
        raise ValueError(f"video has {len(edited)} frames, scene has {scene.frame_count}")
    if len(edited) < 2:
        return 0.0
    if scene.foregrounds:
        layer = max(scene.foregrounds, key=lambda l: l.order)
        alphas = layer.alpha
    else:
        layer = scene.background
        opaque = AlphaMap(np.ones((scene.height, scene.width), dtype=np.float32))
        alphas = [opaque] * scene.frame_count
    atlas_dims = (layer.atlas.width, layer.atlas.height)

    def pair_deviation(i: int) -> float:
        warped = warp_keyframe(edited[i - 1], layer.uv[i - 1], layer.uv[i],
                               alphas[i], atlas_dims)
        valid = warped.valid_mask()
        if not valid.any():
            return 0.0
        diff = np.abs(edited[i].pixels - warped.pixels)
        return float(diff[valid].mean())

    deviations = parallel_map(pair_deviation, list(range(1, len(edited))))
    return float(np.mean(deviations))


def metrics_report(original: Sequence[Frame], edited: Sequence[Frame],
                   scene: Scene) -> dict:
    """The three consistency numbers as a JSON-ready dict."""
    return {
        "flow_consistency": flow_consistency(original, edited),
        "positional_deviation": positional_deviation(original, edited),
        "temporal_deviation": temporal_deviation(edited, scene),
    }
