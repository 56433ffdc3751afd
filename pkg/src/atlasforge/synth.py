"""Synthetic scenes with analytically known atlases, motion and mattes.

Every generated scene is self-consistent by construction: atlases are
procedural (quantized to exact 8-bit levels so a disk round trip stays
lossless), UV maps come from the closed-form motion, mattes are analytic,
and the stored frames are rendered with the same compositing path the
engine uses for reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .compositing import reconstruct_frame
from .mapping import sample_grid
from .scene import (UNMAPPED, AlphaMap, Atlas, Frame, Layer, Scene, UVMap,
                    validate_scene)


class SynthError(Exception):
    pass


# ---------------------------------------------------------------------------
# Motions: closed-form mapping from frame pixel (x, y) to atlas position
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StaticMotion:
    kind: str = field(default="static", init=False)
    offset: tuple[float, float] = (0.0, 0.0)

    def positions(self, i, xs, ys):
        return xs + self.offset[0], ys + self.offset[1]


@dataclass(frozen=True)
class TranslationMotion:
    """Content moves by `step` pixels per frame (atlas anchor fixed)."""

    kind: str = field(default="translation", init=False)
    offset: tuple[float, float] = (0.0, 0.0)
    step: tuple[float, float] = (1.0, 0.0)

    def positions(self, i, xs, ys):
        return (xs + self.offset[0] - i * self.step[0],
                ys + self.offset[1] - i * self.step[1])


@dataclass(frozen=True)
class AffineMotion:
    """Arbitrary per-frame 2x3 frame->atlas transforms."""

    matrices: tuple  # F matrices, each ((a, b, c), (d, e, f))
    kind: str = field(default="affine", init=False)

    def positions(self, i, xs, ys):
        (a, b, c), (d, e, f) = self.matrices[i]
        return a * xs + b * ys + c, d * xs + e * ys + f


def analytic_uv(motion, i: int, width: int, height: int,
                atlas_dims: tuple[int, int]) -> UVMap:
    """Closed-form UV map for frame i; UNMAPPED where the motion leaves the atlas."""
    if not hasattr(motion, "positions"):
        raise SynthError(f"unsupported motion {motion!r}")
    wa, ha = atlas_dims
    xs, ys = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    px, py = motion.positions(i, xs, ys)
    u = px / (wa - 1) if wa > 1 else np.zeros_like(px)
    v = py / (ha - 1) if ha > 1 else np.zeros_like(py)
    inside = (u >= 0.0) & (u <= 1.0) & (v >= 0.0) & (v <= 1.0)
    coords = np.stack([u, v], axis=-1).astype(np.float32)
    coords[~inside] = UNMAPPED
    return UVMap(coords)


# ---------------------------------------------------------------------------
# Mattes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiskMatte:
    center: tuple[float, float]
    radius: float
    velocity: tuple[float, float] = (0.0, 0.0)
    kind: str = field(default="disk", init=False)

    def values(self, i, xs, ys):
        cx = self.center[0] + i * self.velocity[0]
        cy = self.center[1] + i * self.velocity[1]
        return ((xs - cx) ** 2 + (ys - cy) ** 2 <= self.radius ** 2).astype(np.float32)

    def center_at(self, i):
        return (self.center[0] + i * self.velocity[0],
                self.center[1] + i * self.velocity[1])


@dataclass(frozen=True)
class RectMatte:
    origin: tuple[float, float]
    size: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    kind: str = field(default="rectangle", init=False)

    def values(self, i, xs, ys):
        x0 = self.origin[0] + i * self.velocity[0]
        y0 = self.origin[1] + i * self.velocity[1]
        inside = ((xs >= x0) & (xs < x0 + self.size[0])
                  & (ys >= y0) & (ys < y0 + self.size[1]))
        return inside.astype(np.float32)


# ---------------------------------------------------------------------------
# Atlas patterns (always quantized to 8-bit levels)
# ---------------------------------------------------------------------------

def _quantize8(pixels: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(pixels, 0.0, 1.0) * 255.0) / 255.0


@dataclass(frozen=True)
class Checkerboard:
    # default colors carry strong luma contrast so edge fixtures fire
    cell: int = 8
    colors: tuple = ((0.9, 0.85, 0.2), (0.05, 0.1, 0.3))
    kind: str = field(default="checkerboard", init=False)

    def render(self, width, height, rng):
        ys, xs = np.mgrid[0:height, 0:width]
        parity = ((xs // self.cell + ys // self.cell) % 2)
        a = np.asarray(self.colors[0], dtype=np.float64)
        b = np.asarray(self.colors[1], dtype=np.float64)
        return _quantize8(np.where(parity[..., None] == 0, a, b))


@dataclass(frozen=True)
class Ramp:
    kind: str = field(default="ramp", init=False)

    def render(self, width, height, rng):
        xs = np.linspace(0.0, 1.0, width)
        ys = np.linspace(0.0, 1.0, height)
        gx, gy = np.meshgrid(xs, ys)
        return _quantize8(np.stack([gx, gy, 0.5 * (gx + gy)], axis=-1))


@dataclass(frozen=True)
class SmoothNoise:
    """Low-frequency colored noise: a coarse random grid, bilinearly upsampled."""

    cells: int = 6
    kind: str = field(default="smooth_noise", init=False)

    def render(self, width, height, rng):
        coarse = rng.uniform(0.0, 1.0, size=(self.cells, self.cells, 3))
        px, py = np.meshgrid(np.linspace(0.0, self.cells - 1.0, width),
                             np.linspace(0.0, self.cells - 1.0, height))
        return _quantize8(sample_grid(coarse, px, py))


# ---------------------------------------------------------------------------
# Scene construction
# ---------------------------------------------------------------------------

@dataclass
class LayerSpec:
    pattern: object
    motion: object
    matte: Optional[object] = None  # required on foregrounds
    name: str = ""


@dataclass
class SynthConfig:
    frames: int = 12
    width: int = 96
    height: int = 54
    atlas_width: int = 128
    atlas_height: int = 128
    seed: int = 0
    background: LayerSpec = field(default_factory=lambda: LayerSpec(
        pattern=SmoothNoise(cells=5), motion=StaticMotion(offset=(8.0, 16.0))))
    foregrounds: list[LayerSpec] = field(default_factory=lambda: [LayerSpec(
        pattern=Checkerboard(cell=8),
        motion=TranslationMotion(offset=(20.0, 16.0), step=(1.0, 0.0)),
        matte=DiskMatte(center=(40.0, 27.0), radius=14.0, velocity=(1.0, 0.0)))])


def _build_layer(spec: LayerSpec, cfg: SynthConfig, order: int, kind: str,
                 rng: np.random.Generator) -> Layer:
    atlas = Atlas(spec.pattern.render(cfg.atlas_width, cfg.atlas_height, rng))
    uv = []
    for i in range(cfg.frames):
        m = analytic_uv(spec.motion, i, cfg.width, cfg.height,
                        (cfg.atlas_width, cfg.atlas_height))
        if not m.mapped.all():
            raise SynthError(
                f"motion of layer {spec.name or kind!r} escapes the atlas at frame {i}")
        uv.append(m)
    alpha = None
    if kind == "foreground":
        if spec.matte is None:
            raise SynthError(f"foreground layer {spec.name!r} needs a matte")
        xs, ys = np.meshgrid(np.arange(cfg.width, dtype=np.float64),
                             np.arange(cfg.height, dtype=np.float64))
        alpha = [AlphaMap(spec.matte.values(i, xs, ys)) for i in range(cfg.frames)]
    return Layer(name=spec.name or f"{kind}{order}", kind=kind, order=order,
                 atlas=atlas, uv=uv, alpha=alpha)


def make_scene(config: SynthConfig) -> Scene:
    """Build a validated, self-consistent scene from a synth config."""
    if config.frames < 1:
        raise SynthError("config.frames must be >= 1")
    rng = np.random.default_rng(config.seed)
    background = _build_layer(config.background, config, 0, "background", rng)
    foregrounds = [
        _build_layer(spec, config, 1 + i, "foreground", rng)
        for i, spec in enumerate(config.foregrounds)
    ]
    blank = [Frame(np.zeros((config.height, config.width, 3)))
             for _ in range(config.frames)]
    scene = Scene(frames=blank, background=background, foregrounds=foregrounds)
    atlases = [layer.atlas for layer in scene.layers]
    scene.frames = [reconstruct_frame(scene, atlases, i) for i in range(config.frames)]
    for frame in scene.frames:
        frame.validity = None  # originals are full frames
        np.clip(frame.pixels, 0.0, 1.0, out=frame.pixels)
    violations = validate_scene(scene)
    if violations:
        raise SynthError(f"generated scene is invalid: {violations[0]}")
    return scene


# ---------------------------------------------------------------------------
# JSON config (CLI surface)
# ---------------------------------------------------------------------------

_PATTERNS = {"checkerboard": Checkerboard, "ramp": Ramp, "smooth_noise": SmoothNoise}


def _motion_from_json(obj) -> object:
    kind = obj.get("kind")
    if kind == "static":
        return StaticMotion(offset=tuple(obj.get("offset", (0.0, 0.0))))
    if kind == "translation":
        return TranslationMotion(offset=tuple(obj.get("offset", (0.0, 0.0))),
                                 step=tuple(obj.get("step", (1.0, 0.0))))
    if kind == "affine":
        mats = tuple(tuple(tuple(row) for row in m) for m in obj["matrices"])
        return AffineMotion(matrices=mats)
    raise SynthError(f"unknown motion kind {kind!r}")


def _matte_from_json(obj) -> object:
    kind = obj.get("kind")
    if kind == "disk":
        return DiskMatte(center=tuple(obj["center"]), radius=float(obj["radius"]),
                         velocity=tuple(obj.get("velocity", (0.0, 0.0))))
    if kind == "rectangle":
        return RectMatte(origin=tuple(obj["origin"]), size=tuple(obj["size"]),
                         velocity=tuple(obj.get("velocity", (0.0, 0.0))))
    raise SynthError(f"unknown matte kind {kind!r}")


def _pattern_from_json(obj) -> object:
    kind = obj.get("kind")
    if kind not in _PATTERNS:
        raise SynthError(f"unknown pattern kind {kind!r}")
    args = {k: v for k, v in obj.items() if k != "kind"}
    if "colors" in args:
        args["colors"] = tuple(tuple(c) for c in args["colors"])
    return _PATTERNS[kind](**args)


def _layer_from_json(obj, need_matte: bool) -> LayerSpec:
    matte = _matte_from_json(obj["matte"]) if obj.get("matte") else None
    if need_matte and matte is None:
        raise SynthError("foreground layer spec needs a matte")
    return LayerSpec(pattern=_pattern_from_json(obj["pattern"]),
                     motion=_motion_from_json(obj["motion"]),
                     matte=matte, name=obj.get("name", ""))


def config_from_json(obj: dict) -> SynthConfig:
    """Parse the `synth --config` JSON document."""
    cfg = SynthConfig(
        frames=int(obj.get("frames", 12)),
        width=int(obj.get("width", 96)),
        height=int(obj.get("height", 54)),
        atlas_width=int(obj.get("atlas_width", 128)),
        atlas_height=int(obj.get("atlas_height", 128)),
        seed=int(obj.get("seed", 0)),
    )
    if "background" in obj:
        cfg.background = _layer_from_json(obj["background"], need_matte=False)
    if "foregrounds" in obj:
        cfg.foregrounds = [_layer_from_json(o, need_matte=True) for o in obj["foregrounds"]]
    return cfg
