import numpy as np
import pytest

from atlasforge.generators import hsv_to_rgb
from atlasforge.scene import Frame, Scene, UVMap
from atlasforge.synth import (Checkerboard, DiskMatte, LayerSpec, SmoothNoise,
                              StaticMotion, SynthConfig, make_scene)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def identity_uv(width: int, height: int) -> UVMap:
    """UV grid hitting integer texel coordinates of a width x height atlas."""
    u = np.linspace(0.0, 1.0, width, dtype=np.float32) if width > 1 else np.zeros(width, np.float32)
    v = np.linspace(0.0, 1.0, height, dtype=np.float32) if height > 1 else np.zeros(height, np.float32)
    gu, gv = np.meshgrid(u, v)
    return UVMap(np.stack([gu, gv], axis=-1))


def random_frame(rng, width: int, height: int) -> Frame:
    return Frame(rng.uniform(0.0, 1.0, size=(height, width, 3)))


def quantized_frame(rng, width: int, height: int) -> Frame:
    """Random frame whose colors are exact 8-bit levels (survives PNG round trip)."""
    levels = rng.integers(0, 256, size=(height, width, 3))
    return Frame(levels.astype(np.float64) / 255.0)


def make_identity_scene(frames: int = 3, width: int = 8, height: int = 6,
                        seed: int = 0) -> Scene:
    """Tiny scene with identity-ish static motion and a rectangle-free disk matte."""
    cfg = SynthConfig(
        frames=frames, width=width, height=height,
        atlas_width=width, atlas_height=height, seed=seed,
        background=LayerSpec(pattern=SmoothNoise(cells=3), motion=StaticMotion()),
        foregrounds=[LayerSpec(pattern=Checkerboard(cell=2),
                               motion=StaticMotion(),
                               matte=DiskMatte(center=(width / 2, height / 2),
                                               radius=min(width, height) / 3))],
    )
    return make_scene(cfg)


def make_translation_scene(frames: int = 12, seed: int = 0) -> Scene:
    """The desk-scale default: 96x54, disk foreground moving 1 px/frame."""
    return make_scene(SynthConfig(frames=frames, seed=seed))


@pytest.fixture
def translation_scene():
    return make_translation_scene()


@pytest.fixture
def identity_scene():
    return make_identity_scene()


def textured_checker(width: int = 96, height: int = 54) -> Frame:
    """Strong value-contrast checkerboard; edges survive any hue rotation."""
    ys, xs = np.mgrid[0:height, 0:width]
    parity = ((xs // 8 + ys // 8) % 2).astype(np.float64)
    value = 0.05 + 0.95 * parity
    hue = 20.0 + 40.0 * parity
    sat = np.full_like(value, 0.35)
    return Frame(hsv_to_rgb(hue, sat, value))


@pytest.fixture
def textured_frame():
    return textured_checker()
