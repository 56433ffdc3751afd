"""Frame reconstruction: per-layer atlas sampling + back-to-front over blending."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .mapping import forward_sample
from .parallel import parallel_map
from .scene import AlphaMap, Atlas, Frame, Scene


def composite_frame(bg: Frame, fg_list: Sequence[tuple[Frame, AlphaMap]]) -> Frame:
    """Blend foregrounds over a background: out = a*fg + (1-a)*out per layer.

    fg_list must be ordered back-to-front. A foreground's invalid pixels
    composite as opacity zero.
    """
    out = bg.pixels.astype(np.float64, copy=True)
    for fg, alpha in fg_list:
        a = alpha.values.astype(np.float64)
        if fg.validity is not None:
            a = np.where(fg.validity, a, 0.0)
        a = a[..., None]
        out = a * fg.pixels + (1.0 - a) * out
    return Frame(out)


def reconstruct_frame(scene: Scene, atlases: Sequence[Atlas], index: int) -> Frame:
    """Rebuild frame `index` from per-layer atlases (aligned with scene.layers)."""
    if not 0 <= index < scene.frame_count:
        raise IndexError(f"frame index {index} out of range [0, {scene.frame_count})")
    if len(atlases) != len(scene.layers):
        raise ValueError(f"{len(atlases)} atlases for {len(scene.layers)} layers")

    bg = forward_sample(atlases[0], scene.background.uv[index])
    fgs = []
    order = np.argsort([layer.order for layer in scene.foregrounds], kind="stable")
    for li in order:
        layer = scene.foregrounds[li]
        sampled = forward_sample(atlases[1 + li], layer.uv[index])
        assert layer.alpha is not None
        fgs.append((sampled, layer.alpha[index]))
    return composite_frame(bg, fgs)


def reconstruct_video(scene: Scene, atlases: Sequence[Atlas]) -> list[Frame]:
    """reconstruct_frame for every frame; frames are independent."""
    return parallel_map(lambda i: reconstruct_frame(scene, atlases, i),
                        list(range(scene.frame_count)))


def scene_atlases(scene: Scene) -> list[Atlas]:
    """The scene's own (unedited) atlases, aligned with scene.layers."""
    return [layer.atlas for layer in scene.layers]
