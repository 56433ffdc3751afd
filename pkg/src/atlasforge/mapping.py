"""Transport between frame space and atlas space.

forward_sample pulls colors out of an atlas through a UV map (bilinear).
inverse_splat pushes a frame's colors into atlas space (the adjoint of
bilinear sampling), accumulating a coverage weight per texel. warp_keyframe
chains the two to carry an edited frame from one frame's mapping to
another's, modulated by the target frame's opacity.

All operations are pure and linear in the color inputs. Splat accumulation
uses np.bincount, which reduces in a fixed order, so results are
deterministic. Continuous positions within POSITION_SNAP of a texel center
are snapped to it, so integer-coordinate mappings survive the float32
precision of stored UV grids exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import AlphaMap, Atlas, Frame, UVMap

COVERAGE_EPS = 1e-6

# UV maps are stored float32; u*(Wa-1) then misses integer texel positions by
# up to ~1e-4 texels at large atlas sizes. Positions that close to a texel
# center are snapped so integer-coordinate mappings stay exact end to end.
POSITION_SNAP = 1e-4


@dataclass(eq=False)
class PartialAtlas:
    """Atlas-space image splatted from a single frame.

    colors holds coverage-normalized RGB (zero where uncovered); coverage is
    the accumulated splat weight, zeroed below COVERAGE_EPS.
    """

    colors: np.ndarray    # (Ha, Wa, 3) float64
    coverage: np.ndarray  # (Ha, Wa) float64

    @property
    def width(self) -> int:
        return self.colors.shape[1]

    @property
    def height(self) -> int:
        return self.colors.shape[0]

    @property
    def covered(self) -> np.ndarray:
        return self.coverage > 0.0


def _bilinear_taps(px: np.ndarray, py: np.ndarray, wa: int, ha: int):
    """Corner indices and weights for continuous positions (clamped to bounds).

    Returns four (index_y, index_x, weight) triples covering the standard
    bilinear footprint.
    """
    px = np.clip(px, 0.0, float(wa - 1))
    py = np.clip(py, 0.0, float(ha - 1))
    rx = np.rint(px)
    ry = np.rint(py)
    px = np.where(np.abs(px - rx) < POSITION_SNAP, rx, px)
    py = np.where(np.abs(py - ry) < POSITION_SNAP, ry, py)
    x0 = np.floor(px).astype(np.int64)
    y0 = np.floor(py).astype(np.int64)
    x1 = np.minimum(x0 + 1, wa - 1)
    y1 = np.minimum(y0 + 1, ha - 1)
    fx = px - x0
    fy = py - y0
    return (
        (y0, x0, (1.0 - fx) * (1.0 - fy)),
        (y0, x1, fx * (1.0 - fy)),
        (y1, x0, (1.0 - fx) * fy),
        (y1, x1, fx * fy),
    )


def sample_grid(texels: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Bilinear lookup of (..., C) texels at continuous positions."""
    ha, wa = texels.shape[:2]
    out = None
    for iy, ix, w in _bilinear_taps(px, py, wa, ha):
        term = texels[iy, ix] * w[..., None]
        out = term if out is None else out + term
    return out


def splat_grid(values: np.ndarray, weights: np.ndarray, px: np.ndarray,
               py: np.ndarray, atlas_width: int, atlas_height: int):
    """Adjoint of sample_grid: scatter weighted values into a texel grid.

    values: (N, C); weights, px, py: (N,). Returns (accum (Ha, Wa, C),
    coverage (Ha, Wa)) with raw accumulated sums (no normalization).
    """
    ha, wa = atlas_height, atlas_width
    channels = values.shape[-1]
    accum = np.zeros((ha * wa, channels))
    coverage = np.zeros(ha * wa)
    for iy, ix, w in _bilinear_taps(px, py, wa, ha):
        idx = iy * wa + ix
        ww = w * weights
        coverage += np.bincount(idx, weights=ww, minlength=ha * wa)
        for c in range(channels):
            accum[:, c] += np.bincount(idx, weights=ww * values[:, c], minlength=ha * wa)
    return accum.reshape(ha, wa, channels), coverage.reshape(ha, wa)


def uv_positions(uv: UVMap, atlas_width: int, atlas_height: int):
    """Continuous atlas positions for a UV map; invalid where unmapped."""
    coords = uv.coords.astype(np.float64)
    px = coords[..., 0] * (atlas_width - 1)
    py = coords[..., 1] * (atlas_height - 1)
    return px, py, uv.mapped


def forward_sample(atlas: Atlas, uv: UVMap) -> Frame:
    """Sample an atlas through a UV map; unmapped pixels are black and invalid."""
    px, py, mapped = uv_positions(uv, atlas.width, atlas.height)
    pixels = sample_grid(atlas.pixels, px, py)
    pixels[~mapped] = 0.0
    return Frame(pixels, validity=mapped)


def inverse_splat(frame: Frame, uv: UVMap, mask, atlas_dims: tuple[int, int]) -> PartialAtlas:
    """Splat a frame into atlas space with per-pixel mask weights.

    mask may be an AlphaMap, a float array, a bool array, or None (all ones).
    Unmapped pixels never contribute. Accumulated colors are normalized by
    coverage; texels with coverage below COVERAGE_EPS are declared uncovered.
    """
    wa, ha = atlas_dims
    px, py, mapped = uv_positions(uv, wa, ha)
    if mask is None:
        weights = np.ones(frame.pixels.shape[:2])
    elif isinstance(mask, AlphaMap):
        weights = mask.values.astype(np.float64)
    else:
        weights = np.asarray(mask, dtype=np.float64)
    weights = np.where(mapped, weights, 0.0)

    accum, coverage = splat_grid(
        frame.pixels.reshape(-1, 3), weights.ravel(), px.ravel(), py.ravel(), wa, ha)
    covered = coverage >= COVERAGE_EPS
    colors = np.zeros_like(accum)
    colors[covered] = accum[covered] / coverage[covered, None]
    np.clip(colors, 0.0, 1.0, out=colors)
    coverage = np.where(covered, coverage, 0.0)
    return PartialAtlas(colors=colors, coverage=coverage)


def sample_covered(partial: PartialAtlas, uv: UVMap):
    """Sample a partial atlas; also report where every contributing texel is covered.

    Returns (pixels, fully_covered) where fully_covered is True only for
    mapped pixels whose nonzero-weight bilinear taps all land on covered
    texels.
    """
    px, py, mapped = uv_positions(uv, partial.width, partial.height)
    covered = partial.covered
    pixels = np.zeros(px.shape + (3,))
    ok = np.ones(px.shape, dtype=bool)
    for iy, ix, w in _bilinear_taps(px, py, partial.width, partial.height):
        pixels += partial.colors[iy, ix] * w[..., None]
        ok &= covered[iy, ix] | (w == 0.0)
    pixels[~mapped] = 0.0
    return pixels, ok & mapped


def warp_keyframe(prev: Frame, uv_prev: UVMap, uv_cur: UVMap,
                  alpha_cur: AlphaMap, atlas_dims: tuple[int, int]) -> Frame:
    """Carry an edited frame to another frame's geometry through atlas space.

    Splats prev (masked by its validity) through uv_prev, resamples through
    uv_cur, and multiplies by alpha_cur. Output validity marks pixels whose
    bilinear taps are all covered and whose opacity is positive.
    """
    partial = inverse_splat(prev, uv_prev, prev.valid_mask().astype(np.float64), atlas_dims)
    pixels, covered_ok = sample_covered(partial, uv_cur)
    alpha = alpha_cur.values.astype(np.float64)
    pixels = pixels * alpha[..., None]
    validity = covered_ok & (alpha > 0.0)
    return Frame(pixels, validity=validity)
