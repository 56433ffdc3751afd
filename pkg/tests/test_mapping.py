import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from atlasforge.mapping import (COVERAGE_EPS, forward_sample, inverse_splat,
                                warp_keyframe)
from atlasforge.scene import UNMAPPED, AlphaMap, Atlas, Frame, UVMap

from conftest import identity_uv, random_frame


def brute_splat(frame, uv, mask, wa, ha):
    """Per-pixel loop oracle for inverse_splat (same math, no vectorization)."""
    accum = np.zeros((ha, wa, 3))
    cov = np.zeros((ha, wa))
    h, w = frame.pixels.shape[:2]
    for y in range(h):
        for x in range(w):
            u, v = uv.coords[y, x]
            if u == UNMAPPED and v == UNMAPPED:
                continue
            m = float(mask[y, x])
            if m == 0.0:
                continue
            px = min(max(float(u) * (wa - 1), 0.0), wa - 1)
            py = min(max(float(v) * (ha - 1), 0.0), ha - 1)
            if abs(px - round(px)) < 1e-4:
                px = round(px)
            if abs(py - round(py)) < 1e-4:
                py = round(py)
            x0, y0 = int(np.floor(px)), int(np.floor(py))
            x1, y1 = min(x0 + 1, wa - 1), min(y0 + 1, ha - 1)
            fx, fy = px - x0, py - y0
            for (yy, xx, wgt) in ((y0, x0, (1 - fx) * (1 - fy)), (y0, x1, fx * (1 - fy)),
                                  (y1, x0, (1 - fx) * fy), (y1, x1, fx * fy)):
                accum[yy, xx] += wgt * m * frame.pixels[y, x]
                cov[yy, xx] += wgt * m
    return accum, cov


class TestForwardSample:
    def test_identity_uv_is_exact(self, rng):
        atlas = Atlas(rng.uniform(size=(4, 4, 3)))
        out = forward_sample(atlas, identity_uv(4, 4))
        assert np.array_equal(out.pixels, atlas.pixels)
        assert out.validity.all()

    def test_constant_atlas_any_uv(self, rng):
        atlas = Atlas(np.full((5, 7, 3), 0.42))
        coords = rng.uniform(0, 1, size=(6, 9, 2)).astype(np.float32)
        out = forward_sample(atlas, UVMap(coords))
        assert np.allclose(out.pixels, 0.42, atol=1e-12)

    def test_half_texel_offset_averages_neighbors(self):
        # 1D ramp along x: value = x / 7; sampling at x + 0.5 must give the
        # mean of the two neighbors.
        wa = 8
        ramp = np.repeat(np.linspace(0, 1, wa)[None, :, None], 3, axis=2)
        atlas = Atlas(np.repeat(ramp, 4, axis=0))
        xs = (np.arange(wa - 1) + 0.5) / (wa - 1)
        coords = np.zeros((4, wa - 1, 2), dtype=np.float32)
        coords[..., 0] = xs[None, :].astype(np.float32)
        coords[..., 1] = np.linspace(0, 1, 4, dtype=np.float32)[:, None]
        out = forward_sample(atlas, UVMap(coords))
        expected = 0.5 * (ramp[0, :-1, 0] + ramp[0, 1:, 0])
        # float32 uv coordinates: sub-1e-7 slack on the positions
        assert np.allclose(out.pixels[0, :, 0], expected, atol=1e-6)

    def test_unmapped_pixels_black_and_invalid(self, rng):
        atlas = Atlas(rng.uniform(size=(4, 4, 3)))
        coords = rng.uniform(0, 1, size=(3, 3, 2)).astype(np.float32)
        coords[1, 1] = UNMAPPED
        out = forward_sample(atlas, UVMap(coords))
        assert np.all(out.pixels[1, 1] == 0.0)
        assert not out.validity[1, 1]
        assert out.validity.sum() == 8


class TestInverseSplat:
    def test_identity_integer_splat(self, rng):
        frame = random_frame(rng, 6, 5)
        uv = identity_uv(6, 5)
        pa = inverse_splat(frame, uv, np.ones((5, 6)), (6, 5))
        assert np.allclose(pa.colors, frame.pixels, atol=1e-9)
        assert np.allclose(pa.coverage, 1.0, atol=1e-9)

    def test_zero_mask_empty(self, rng):
        frame = random_frame(rng, 6, 5)
        pa = inverse_splat(frame, identity_uv(6, 5), np.zeros((5, 6)), (8, 8))
        assert np.all(pa.coverage == 0.0)
        assert np.all(pa.colors == 0.0)

    def test_matches_bruteforce(self, rng):
        frame = random_frame(rng, 8, 8)
        coords = rng.uniform(0, 1, size=(8, 8, 2)).astype(np.float32)
        coords[0, 0] = UNMAPPED
        uv = UVMap(coords)
        mask = rng.uniform(0, 1, size=(8, 8))
        pa = inverse_splat(frame, uv, mask, (6, 7))
        accum, cov = brute_splat(frame, uv, mask, 6, 7)
        covered = cov >= COVERAGE_EPS
        expected = np.zeros_like(accum)
        expected[covered] = accum[covered] / cov[covered, None]
        assert np.allclose(pa.coverage[covered], cov[covered], atol=1e-9)
        assert np.allclose(pa.colors, np.clip(expected, 0, 1), atol=1e-9)

    def test_weight_conservation(self, rng):
        # total splatted weight equals the sum of mask values (all pixels mapped)
        frame = random_frame(rng, 9, 7)
        coords = rng.uniform(0.05, 0.95, size=(7, 9, 2)).astype(np.float32)
        mask = rng.uniform(0, 1, size=(7, 9))
        pa = inverse_splat(frame, UVMap(coords), mask, (5, 6))
        assert abs(pa.coverage.sum() - mask.sum()) < 1e-9

    def test_subpixel_roundtrip_within_blur(self, rng):
        # splat through a half-texel shift and resample: bilinear blur bound
        frame = Frame(np.repeat(rng.uniform(0.2, 0.8, size=(8, 8, 1)), 3, axis=2))
        xs = (np.arange(8) + 0.25) / 15.0
        ys = (np.arange(8) + 0.25) / 15.0
        gu, gv = np.meshgrid(xs.astype(np.float32), ys.astype(np.float32))
        uv = UVMap(np.stack([gu, gv], axis=-1))
        pa = inverse_splat(frame, uv, np.ones((8, 8)), (16, 16))
        out = forward_sample(Atlas(pa.colors), uv)
        # neighboring samples are 1 texel apart: error bounded by local variation
        local = np.abs(np.diff(frame.pixels, axis=0)).max() + \
            np.abs(np.diff(frame.pixels, axis=1)).max()
        assert np.abs(out.pixels - frame.pixels).max() <= local


class TestWarpKeyframe:
    def test_identity_motion_identity(self, rng):
        frame = random_frame(rng, 6, 5)
        uv = identity_uv(6, 5)
        alpha = AlphaMap(np.ones((5, 6), dtype=np.float32))
        out = warp_keyframe(frame, uv, uv, alpha, (6, 5))
        assert out.validity.all()
        assert np.allclose(out.pixels, frame.pixels, atol=1e-9)

    def test_zero_alpha_blank(self, rng):
        frame = random_frame(rng, 6, 5)
        uv = identity_uv(6, 5)
        alpha = AlphaMap(np.zeros((5, 6), dtype=np.float32))
        out = warp_keyframe(frame, uv, uv, alpha, (6, 5))
        assert not out.validity.any()
        assert np.all(out.pixels == 0.0)

    def test_integer_translation_shift_oracle(self, rng):
        # content shifts right by 2 px between frames; atlas anchored
        w, h, wa, ha = 10, 6, 16, 8
        frame = random_frame(rng, w, h)
        xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))

        def uv_for(shift):
            u = ((xs + 3 - shift) / (wa - 1)).astype(np.float32)
            v = (ys / (ha - 1)).astype(np.float32)
            return UVMap(np.stack([u, v], axis=-1))

        alpha = AlphaMap(np.ones((h, w), dtype=np.float32))
        out = warp_keyframe(frame, uv_for(0), uv_for(2), alpha, (wa, ha))
        # pixel (y, x) in the new frame reads what (y, x-2) held before
        expected_valid = xs >= 2
        assert np.array_equal(out.validity, expected_valid)
        assert np.allclose(out.pixels[:, 2:], frame.pixels[:, :-2], atol=1e-6)

    def test_linear_in_colors(self, rng):
        w, h = 7, 5
        a = random_frame(rng, w, h)
        b = random_frame(rng, w, h)
        uv0 = identity_uv(w, h)
        coords = rng.uniform(0.1, 0.9, size=(h, w, 2)).astype(np.float32)
        uv1 = UVMap(coords)
        alpha = AlphaMap(rng.uniform(0, 1, size=(h, w)).astype(np.float32))
        combo = Frame(0.3 * a.pixels + 0.7 * b.pixels)
        out_combo = warp_keyframe(combo, uv0, uv1, alpha, (9, 9))
        out_a = warp_keyframe(a, uv0, uv1, alpha, (9, 9))
        out_b = warp_keyframe(b, uv0, uv1, alpha, (9, 9))
        assert np.allclose(out_combo.pixels, 0.3 * out_a.pixels + 0.7 * out_b.pixels,
                           atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_property_conservation(seed):
    rng = np.random.default_rng(seed)
    h, w = rng.integers(2, 7, size=2)
    wa, ha = rng.integers(2, 9, size=2)
    frame = Frame(rng.uniform(size=(h, w, 3)))
    coords = rng.uniform(0, 1, size=(h, w, 2)).astype(np.float32)
    mask = rng.uniform(0, 1, size=(h, w))
    pa = inverse_splat(frame, UVMap(coords), mask, (int(wa), int(ha)))
    # conservation holds before the epsilon cutoff zeroes anything
    accum, cov = brute_splat(frame, UVMap(coords), mask, int(wa), int(ha))
    assert abs(cov.sum() - mask.sum()) < 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_property_identity_sampling(seed):
    rng = np.random.default_rng(seed)
    h, w = int(rng.integers(2, 10)), int(rng.integers(2, 10))
    atlas = Atlas(rng.uniform(size=(h, w, 3)))
    out = forward_sample(atlas, identity_uv(w, h))
    assert np.array_equal(out.pixels, atlas.pixels)
