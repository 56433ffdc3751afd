"""Reference generators: passthrough and recolor.

These deliberately re-implement the engine's built-in semantics op for op
(same formulas, same operation order, float64 math) so that wire outputs are
bit-exact against the engine on float32-representable inputs. Any change
here must keep that conformance; the test suite checks it against the engine
package directly.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

# procedural init used for mode "first" without an init payload
BLANK_SATURATION = 0.6
BLANK_VALUE_BASE = 0.25
BLANK_VALUE_EDGE = 0.5


class ReferenceError(Exception):
    pass


def prompt_hash(prompt: str) -> int:
    h = _FNV_OFFSET
    for byte in prompt.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def hue_angle(prompt: str) -> float:
    return float(prompt_hash(prompt) % 360)


def _offsets_at_sq_distance(d2: int) -> list[tuple[int, int]]:
    out = []
    r = int(np.floor(np.sqrt(d2))) + 1
    for dy in range(-r, r + 1):
        rem = d2 - dy * dy
        if rem < 0:
            continue
        dx = int(round(np.sqrt(rem)))
        if dx * dx != rem:
            continue
        if dx == 0:
            out.append((dy, 0))
        else:
            out.append((dy, -dx))
            out.append((dy, dx))
    out.sort()
    return out


def nearest_valid_fill(pixels: np.ndarray, validity: np.ndarray) -> np.ndarray:
    """Fill holes from the nearest valid pixel (ties: smaller row, then column)."""
    if validity.all():
        return pixels.copy()
    if not validity.any():
        raise ReferenceError("empty init: no valid pixels to fill from")
    h, w = validity.shape
    dist = ndimage.distance_transform_edt(~validity)
    out = pixels.copy()
    rows, cols = np.nonzero(~validity)
    d2 = np.rint(dist[rows, cols] ** 2).astype(np.int64)
    for val in np.unique(d2):
        group = d2 == val
        gr, gc = rows[group], cols[group]
        unresolved = np.ones(gr.size, dtype=bool)
        for dy, dx in _offsets_at_sq_distance(int(val)):
            if not unresolved.any():
                break
            sr = gr + dy
            sc = gc + dx
            hit = (unresolved & (sr >= 0) & (sr < h) & (sc >= 0) & (sc < w))
            hit[hit] = validity[sr[hit], sc[hit]]
            out[gr[hit], gc[hit]] = pixels[sr[hit], sc[hit]]
            unresolved &= ~hit
    return out


def rgb_to_hsv(rgb: np.ndarray):
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    s = np.where(v > 0.0, c / np.where(v > 0.0, v, 1.0), 0.0)
    h = np.zeros_like(v)
    nz = c > 0.0
    safe_c = np.where(nz, c, 1.0)
    rmax = nz & (v == r)
    gmax = nz & (v == g) & ~rmax
    bmax = nz & ~rmax & ~gmax
    h = np.where(rmax, (60.0 * (g - b) / safe_c) % 360.0, h)
    h = np.where(gmax, 60.0 * (b - r) / safe_c + 120.0, h)
    h = np.where(bmax, 60.0 * (r - g) / safe_c + 240.0, h)
    return h % 360.0, s, v


def hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    hp = (h % 360.0) / 60.0
    c = v * s
    x = c * (1.0 - np.abs(hp % 2.0 - 1.0))
    m = v - c
    sector = np.floor(hp).astype(np.int64) % 6
    mx = m + x
    r = np.choose(sector, [v, mx, m, m, mx, v])
    g = np.choose(sector, [mx, v, v, mx, m, m])
    b = np.choose(sector, [m, m, mx, v, v, mx])
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)


def procedural_init(edges: np.ndarray) -> np.ndarray:
    """Deterministic base image for first-frame requests without an init:
    edge-keyed value over a fixed low-saturation base hue."""
    value = BLANK_VALUE_BASE + BLANK_VALUE_EDGE * edges.astype(np.float64)
    hue = np.zeros_like(value)
    sat = np.full_like(value, BLANK_SATURATION)
    return hsv_to_rgb(hue, sat, value)


def generate_passthrough(init: np.ndarray, validity: np.ndarray) -> np.ndarray:
    return nearest_valid_fill(init, validity)


def generate_recolor(init: np.ndarray, validity: np.ndarray, prompt: str) -> np.ndarray:
    filled = nearest_valid_fill(init, validity)
    h, s, v = rgb_to_hsv(filled)
    return hsv_to_rgb(h + hue_angle(prompt), s, v)
