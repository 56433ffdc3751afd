"""Decomposed-video data model and its on-disk representation.

A scene is a video of F frames plus one background layer and at least one
foreground layer. Every layer owns a single atlas image and one UV map per
frame; foreground layers additionally carry per-frame opacity maps. UV
coordinates are normalized: (u, v) in [0,1]^2 addresses the continuous atlas
position (u*(Wa-1), v*(Ha-1)). Pixels without an atlas correspondence store
the sentinel (-1, -1).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .imgio import load_rgb8, save_rgb8

UNMAPPED = -1.0

UV_MAGIC = b"UVM1"
ALPHA_MAGIC = b"ALP1"


class SceneError(Exception):
    """Raised for malformed scene directories or invalid scene data."""

    def __init__(self, message: str, path: Optional[str] = None, field: Optional[str] = None):
        self.path = path
        self.field = field
        detail = message
        if field:
            detail += f" (field: {field})"
        if path:
            detail += f" [{path}]"
        super().__init__(detail)


@dataclass(eq=False)
class Atlas:
    """A single RGB image summarizing one layer's appearance over the video."""

    pixels: np.ndarray  # (H, W, 3) float64 in [0, 1]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(eq=False)
class UVMap:
    """Per-frame grid of normalized atlas coordinates, (-1,-1) where unmapped."""

    coords: np.ndarray  # (H, W, 2) float32

    @property
    def width(self) -> int:
        return self.coords.shape[1]

    @property
    def height(self) -> int:
        return self.coords.shape[0]

    @property
    def mapped(self) -> np.ndarray:
        """Boolean (H, W) mask of pixels that carry a coordinate."""
        return ~np.all(self.coords == UNMAPPED, axis=-1)


@dataclass(eq=False)
class AlphaMap:
    """Per-frame foreground opacity in [0, 1]."""

    values: np.ndarray  # (H, W) float32

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(eq=False)
class Frame:
    """An RGB video frame, optionally with a per-pixel validity mask."""

    pixels: np.ndarray  # (H, W, 3) float64 in [0, 1]
    validity: Optional[np.ndarray] = None  # (H, W) bool

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def valid_mask(self) -> np.ndarray:
        """Validity as a concrete boolean array (all-valid when absent)."""
        if self.validity is None:
            return np.ones(self.pixels.shape[:2], dtype=bool)
        return self.validity


@dataclass(eq=False)
class Layer:
    """One atlas plus its per-frame mappings. Foregrounds carry opacity maps."""

    name: str
    kind: str  # "background" | "foreground"
    order: int  # higher = closer to camera
    atlas: Atlas
    uv: list[UVMap]
    alpha: Optional[list[AlphaMap]] = None


@dataclass(eq=False)
class Scene:
    """A decomposed video: original frames, one background, >=1 foregrounds."""

    frames: list[Frame]
    background: Layer
    foregrounds: list[Layer]

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def layers(self) -> list[Layer]:
        """Background first, then foregrounds in stored order."""
        return [self.background] + list(self.foregrounds)


@dataclass
class EditRequest:
    """Parameters of one edit: prompt, noise strength, generator and targets."""

    prompt: str
    t0: float = 0.8
    generator: str = "passthrough"
    seed: int = 0
    keyframe_interval: int = 20
    layer: int = 0  # index into scene.foregrounds
    keyframes: Optional[list[int]] = None  # explicit override of interval sampling
    edit_background: bool = False
    remote_url: Optional[str] = None

    def validate(self) -> None:
        if not 0.0 <= self.t0 <= 1.0:
            raise ValueError(f"t0 must be in [0, 1], got {self.t0}")
        if self.keyframe_interval < 1:
            raise ValueError(f"keyframe interval must be >= 1, got {self.keyframe_interval}")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")


@dataclass
class Violation:
    """One invariant violation, locating the offending layer/frame/field."""

    field: str
    message: str
    layer: Optional[str] = None
    frame: Optional[int] = None

    def __str__(self) -> str:
        where = []
        if self.layer is not None:
            where.append(f"layer={self.layer}")
        if self.frame is not None:
            where.append(f"frame={self.frame}")
        loc = (" [" + ", ".join(where) + "]") if where else ""
        return f"{self.field}: {self.message}{loc}"


def _check_channels(arr: np.ndarray, out: list[Violation], field_name: str,
                    layer: Optional[str] = None, frame: Optional[int] = None) -> None:
    if not np.isfinite(arr).all():
        out.append(Violation(field_name, "non-finite value", layer, frame))
        return
    lo, hi = float(arr.min(initial=0.0)), float(arr.max(initial=0.0))
    if lo < 0.0 or hi > 1.0:
        bad = np.argwhere((arr < 0.0) | (arr > 1.0))[0]
        out.append(Violation(field_name,
                             f"value out of [0,1] at {tuple(int(i) for i in bad)}",
                             layer, frame))


def validate_scene(scene: Scene) -> list[Violation]:
    """Check every type invariant; returns an empty list iff the scene is valid."""
    v: list[Violation] = []
    f_count = scene.frame_count
    if f_count < 1:
        v.append(Violation("frames", "scene must contain at least one frame"))
        return v
    w, h = scene.width, scene.height

    for i, frame in enumerate(scene.frames):
        if frame.pixels.shape != (h, w, 3):
            v.append(Violation("frame.pixels", f"shape {frame.pixels.shape} != {(h, w, 3)}", frame=i))
            continue
        _check_channels(frame.pixels, v, "frame.pixels", frame=i)
        if frame.validity is not None and frame.validity.shape != (h, w):
            v.append(Violation("frame.validity", f"shape {frame.validity.shape} != {(h, w)}", frame=i))

    orders = [layer.order for layer in scene.layers]
    if len(set(orders)) != len(orders):
        v.append(Violation("layer.order", f"depth-order indices not unique: {orders}"))

    for layer in scene.layers:
        name = layer.name
        atlas = layer.atlas
        if atlas.width < 1 or atlas.height < 1:
            v.append(Violation("atlas", "atlas must be at least 1x1", layer=name))
        elif atlas.pixels.shape != (atlas.height, atlas.width, 3):
            v.append(Violation("atlas", f"bad pixel shape {atlas.pixels.shape}", layer=name))
        else:
            _check_channels(atlas.pixels, v, "atlas.pixels", layer=name)

        if len(layer.uv) != f_count:
            v.append(Violation("uv", f"{len(layer.uv)} UV maps for {f_count} frames", layer=name))
        for i, uv in enumerate(layer.uv):
            if uv.coords.shape != (h, w, 2):
                v.append(Violation("uv", f"shape {uv.coords.shape} != {(h, w, 2)}", layer=name, frame=i))
                continue
            coords = uv.coords
            sentinel = np.all(coords == UNMAPPED, axis=-1)
            in_range = np.all((coords >= 0.0) & (coords <= 1.0), axis=-1)
            bad = ~(sentinel | in_range)
            if bad.any():
                y, x = np.argwhere(bad)[0]
                v.append(Violation(
                    "uv", f"entry {tuple(float(c) for c in coords[y, x])} at ({int(y)},{int(x)}) "
                          "is neither in [0,1] nor the unmapped sentinel",
                    layer=name, frame=i))

        if layer.kind == "foreground":
            if layer.alpha is None or len(layer.alpha) != f_count:
                n = 0 if layer.alpha is None else len(layer.alpha)
                v.append(Violation("alpha", f"{n} alpha maps for {f_count} frames", layer=name))
            else:
                for i, alpha in enumerate(layer.alpha):
                    if alpha.values.shape != (h, w):
                        v.append(Violation("alpha", f"shape {alpha.values.shape} != {(h, w)}",
                                           layer=name, frame=i))
                        continue
                    vals = alpha.values
                    if not np.isfinite(vals).all() or vals.min() < 0.0 or vals.max() > 1.0:
                        y, x = np.argwhere(~((vals >= 0.0) & (vals <= 1.0)))[0]
                        v.append(Violation(
                            "alpha", f"opacity {float(vals[y, x])} out of [0,1] at ({int(y)},{int(x)})",
                            layer=name, frame=i))
        elif layer.kind == "background":
            if layer.alpha is not None:
                v.append(Violation("alpha", "background layer must not carry alpha maps", layer=name))
        else:
            v.append(Violation("kind", f"unknown layer kind {layer.kind!r}", layer=name))
    return v


# ---------------------------------------------------------------------------
# Binary grid files (UV and alpha)
# ---------------------------------------------------------------------------

def _write_grid(path: Path, magic: bytes, data: np.ndarray) -> None:
    h, w = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<II", w, h))
        fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def _read_grid(path: Path, magic: bytes, channels: int) -> np.ndarray:
    raw = path.read_bytes()
    name = magic.decode("ascii")
    if len(raw) < 12:
        raise SceneError(f"truncated {name} file", path=str(path), field="header")
    if raw[:4] != magic:
        raise SceneError(f"bad magic {raw[:4]!r}, expected {magic!r}", path=str(path), field="magic")
    w, h = struct.unpack("<II", raw[4:12])
    expected = 12 + w * h * channels * 4
    if len(raw) != expected:
        raise SceneError(f"{name} payload is {len(raw) - 12} bytes, expected {expected - 12}",
                         path=str(path), field="payload")
    flat = np.frombuffer(raw, dtype="<f4", offset=12)
    shape = (h, w, channels) if channels > 1 else (h, w)
    return flat.reshape(shape).copy()


def save_uv(path: Path, uv: UVMap) -> None:
    _write_grid(path, UV_MAGIC, uv.coords)


def load_uv(path: Path) -> UVMap:
    return UVMap(_read_grid(path, UV_MAGIC, 2))


def save_alpha(path: Path, alpha: AlphaMap) -> None:
    _write_grid(path, ALPHA_MAGIC, alpha.values)


def load_alpha(path: Path) -> AlphaMap:
    return AlphaMap(_read_grid(path, ALPHA_MAGIC, 1))


# ---------------------------------------------------------------------------
# Scene directories
# ---------------------------------------------------------------------------

def save_scene(scene: Scene, path: str | Path) -> None:
    """Write a scene directory (manifest.json, PNG images, binary grids).

    Frames and atlases are stored as 8-bit PNG; UV and alpha grids keep full
    float32 precision. load_scene(save_scene(s)) == s whenever s's colors are
    exact 8-bit levels.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    (root / "frames").mkdir(exist_ok=True)

    layers_meta = []
    for li, layer in enumerate(scene.layers):
        ldir = root / f"layer{li:02d}"
        ldir.mkdir(exist_ok=True)
        atlas_rel = f"layer{li:02d}/atlas.png"
        uv_rel = f"layer{li:02d}/uv_%04d.uvm"
        alpha_rel = f"layer{li:02d}/alpha_%04d.alp" if layer.kind == "foreground" else None
        save_rgb8(root / atlas_rel, layer.atlas.pixels)
        for i, uv in enumerate(layer.uv):
            save_uv(root / (uv_rel % i), uv)
        if alpha_rel is not None:
            assert layer.alpha is not None
            for i, alpha in enumerate(layer.alpha):
                save_alpha(root / (alpha_rel % i), alpha)
        layers_meta.append({
            "name": layer.name,
            "kind": layer.kind,
            "order": layer.order,
            "atlas": atlas_rel,
            "atlas_width": layer.atlas.width,
            "atlas_height": layer.atlas.height,
            "uv_pattern": uv_rel,
            "alpha_pattern": alpha_rel,
        })

    for i, frame in enumerate(scene.frames):
        save_rgb8(root / "frames" / f"{i:04d}.png", frame.pixels)

    manifest = {
        "frames": scene.frame_count,
        "width": scene.width,
        "height": scene.height,
        "layers": layers_meta,
        "frame_pattern": "frames/%04d.png",
    }
    (root / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_scene(path: str | Path) -> Scene:
    """Read a scene directory written by save_scene (or any conforming tool)."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise SceneError("manifest.json not found", path=str(manifest_path), field="manifest")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SceneError(f"malformed manifest: {e}", path=str(manifest_path), field="manifest") from e

    try:
        f_count = int(manifest["frames"])
        width = int(manifest["width"])
        height = int(manifest["height"])
        layers_meta = manifest["layers"]
        frame_pattern = manifest["frame_pattern"]
    except (KeyError, TypeError, ValueError) as e:
        raise SceneError(f"manifest missing or malformed key: {e}",
                         path=str(manifest_path), field="manifest") from e

    def _require(rel: str, field_name: str) -> Path:
        p = root / rel
        if not p.is_file():
            raise SceneError("referenced file missing", path=str(p), field=field_name)
        return p

    frames = []
    for i in range(f_count):
        p = _require(frame_pattern % i, "frame")
        pixels = load_rgb8(p)
        if pixels.shape != (height, width, 3):
            raise SceneError(f"frame is {pixels.shape[1]}x{pixels.shape[0]}, "
                             f"manifest says {width}x{height}", path=str(p), field="frame")
        frames.append(Frame(pixels))

    background: Optional[Layer] = None
    foregrounds: list[Layer] = []
    for meta in layers_meta:
        name = meta["name"]
        kind = meta["kind"]
        atlas_path = _require(meta["atlas"], "atlas")
        atlas_pixels = load_rgb8(atlas_path)
        if atlas_pixels.shape[:2] != (meta["atlas_height"], meta["atlas_width"]):
            raise SceneError("atlas dimensions disagree with manifest",
                             path=str(atlas_path), field="atlas")
        uv = []
        for i in range(f_count):
            p = _require(meta["uv_pattern"] % i, "uv")
            m = load_uv(p)
            if m.coords.shape[:2] != (height, width):
                raise SceneError(f"UV grid is {m.width}x{m.height}, frame is {width}x{height}",
                                 path=str(p), field="uv")
            uv.append(m)
        alpha = None
        if meta.get("alpha_pattern"):
            alpha = []
            for i in range(f_count):
                p = _require(meta["alpha_pattern"] % i, "alpha")
                a = load_alpha(p)
                if a.values.shape != (height, width):
                    raise SceneError(f"alpha grid is {a.width}x{a.height}, frame is {width}x{height}",
                                     path=str(p), field="alpha")
                alpha.append(a)
        layer = Layer(name=name, kind=kind, order=int(meta["order"]),
                      atlas=Atlas(atlas_pixels), uv=uv, alpha=alpha)
        if kind == "background":
            if background is not None:
                raise SceneError("more than one background layer",
                                 path=str(manifest_path), field="layers")
            background = layer
        else:
            foregrounds.append(layer)

    if background is None:
        raise SceneError("no background layer declared", path=str(manifest_path), field="layers")

    scene = Scene(frames=frames, background=background, foregrounds=foregrounds)
    violations = validate_scene(scene)
    if violations:
        first = violations[0]
        raise SceneError(f"invalid scene: {first}" +
                         (f" (+{len(violations) - 1} more)" if len(violations) > 1 else ""),
                         path=str(root), field=first.field)
    return scene


def scenes_equal(a: Scene, b: Scene) -> bool:
    """Field-by-field equality (exact array comparison)."""
    if a.frame_count != b.frame_count or len(a.foregrounds) != len(b.foregrounds):
        return False
    for fa, fb in zip(a.frames, b.frames):
        if not np.array_equal(fa.pixels, fb.pixels):
            return False
    for la, lb in zip(a.layers, b.layers):
        if (la.name, la.kind, la.order) != (lb.name, lb.kind, lb.order):
            return False
        if not np.array_equal(la.atlas.pixels, lb.atlas.pixels):
            return False
        for ua, ub in zip(la.uv, lb.uv):
            if not np.array_equal(ua.coords, ub.coords):
                return False
        if (la.alpha is None) != (lb.alpha is None):
            return False
        if la.alpha is not None:
            for aa, ab in zip(la.alpha, lb.alpha):
                if not np.array_equal(aa.values, ab.values):
                    return False
    return True
