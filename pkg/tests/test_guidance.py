import numpy as np
import pytest
from scipy import ndimage

from atlasforge.guidance import (canny, edge_iou, EdgeMap, load_edges,
                                 luma, save_edges)
from atlasforge.scene import Frame

from conftest import textured_checker


def brute_iou(a, b, dilation):
    """Set-arithmetic oracle for edge_iou on small maps."""
    def dilate(m):
        out = np.zeros_like(m)
        h, w = m.shape
        for y in range(h):
            for x in range(w):
                y0, y1 = max(0, y - dilation), min(h, y + dilation + 1)
                x0, x1 = max(0, x - dilation), min(w, x + dilation + 1)
                out[y, x] = m[y0:y1, x0:x1].any()
        return out
    da, db = dilate(a), dilate(b)
    union = (da | db).sum()
    return 1.0 if union == 0 else float((da & db).sum() / union)


class TestCanny:
    def test_constant_frame_no_edges(self):
        frame = Frame(np.full((16, 16, 3), 0.37))
        assert not canny(frame).edges.any()

    def test_vertical_step_single_band(self):
        # black left half, white right half: Sobel responds at the boundary
        pixels = np.zeros((32, 32, 3))
        pixels[:, 16:] = 1.0
        edges = canny(Frame(pixels)).edges
        cols = np.where(edges.any(axis=0))[0]
        assert len(cols) >= 1
        assert set(cols) <= {15, 16}          # within +-1 px of the step
        assert edges[:, cols].all(axis=0).any()  # a full-height band

    def test_step_oracle_gradient_value(self):
        # hand check: for a unit step the blurred profile's Sobel x-response
        # at the boundary column dominates every other column
        pixels = np.zeros((16, 16, 3))
        pixels[:, 8:] = 1.0
        g = luma(pixels)
        from atlasforge.guidance import _BLUR, _SOBEL_X
        smooth = ndimage.correlate(g, _BLUR, mode="nearest")
        gx = ndimage.correlate(smooth, _SOBEL_X, mode="nearest")
        mid = np.abs(gx[8])
        assert mid.argmax() in (7, 8)
        assert mid.max() > 200.0  # well past the default high threshold

    def test_default_thresholds(self):
        import inspect
        sig = inspect.signature(canny)
        assert sig.parameters["low"].default == 100.0
        assert sig.parameters["high"].default == 200.0

    def test_degenerate_frame_rejected(self):
        with pytest.raises(ValueError):
            canny(Frame(np.zeros((4, 10, 3))))
        with pytest.raises(ValueError):
            canny(Frame(np.zeros((10, 4, 3))))

    def test_bad_thresholds_rejected(self):
        frame = Frame(np.zeros((8, 8, 3)))
        with pytest.raises(ValueError):
            canny(frame, low=200, high=100)
        with pytest.raises(ValueError):
            canny(frame, low=-5, high=100)

    def test_invariant_constant_shift(self, rng):
        pixels = rng.uniform(0.0, 0.8, size=(24, 24, 3))
        base = canny(Frame(pixels)).edges
        shifted = canny(Frame(pixels + 0.1)).edges
        assert np.array_equal(base, shifted)

    def test_raising_low_never_adds_edges(self, rng):
        frame = textured_checker(48, 32)
        reference = canny(frame, low=40.0).edges
        for low in (60.0, 100.0, 150.0, 199.0):
            tighter = canny(frame, low=low).edges
            assert not (tighter & ~reference).any()


class TestEdgeIou:
    def test_identical_maps(self, rng):
        edges = rng.uniform(size=(12, 12)) < 0.2
        assert edge_iou(EdgeMap(edges), EdgeMap(edges)) == 1.0

    def test_empty_maps(self):
        empty = EdgeMap(np.zeros((8, 8), dtype=bool))
        assert edge_iou(empty, empty) == 1.0

    def test_disjoint_far_pixels(self):
        a = np.zeros((8, 24), dtype=bool)
        b = np.zeros((8, 24), dtype=bool)
        a[4, 2] = True
        b[4, 12] = True  # 10 px apart, dilation 1 cannot bridge it
        assert edge_iou(EdgeMap(a), EdgeMap(b), dilation=1) == 0.0

    def test_one_pixel_shift_against_bruteforce(self, rng):
        for seed in range(5):
            r = np.random.default_rng(seed)
            edges = r.uniform(size=(16, 16)) < 0.15
            shifted = np.roll(edges, 1, axis=1)
            got = edge_iou(EdgeMap(edges), EdgeMap(shifted), dilation=1)
            want = brute_iou(edges, shifted, 1)
            assert got == pytest.approx(want, abs=1e-12)
            assert got >= 0.5

    def test_symmetry(self, rng):
        a = EdgeMap(rng.uniform(size=(10, 10)) < 0.3)
        b = EdgeMap(rng.uniform(size=(10, 10)) < 0.3)
        assert edge_iou(a, b) == edge_iou(b, a)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            edge_iou(EdgeMap(np.zeros((4, 4), dtype=bool)),
                     EdgeMap(np.zeros((4, 5), dtype=bool)))


def test_edge_map_png_roundtrip(tmp_path, rng):
    edges = EdgeMap(rng.uniform(size=(9, 13)) < 0.3)
    save_edges(tmp_path / "e.png", edges)
    loaded = load_edges(tmp_path / "e.png")
    assert np.array_equal(loaded.edges, edges.edges)
