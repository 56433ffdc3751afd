import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atlasforge.compositing import (composite_frame, reconstruct_frame,
                                    reconstruct_video, scene_atlases)
from atlasforge.scene import AlphaMap, Frame, validate_scene
from atlasforge.synth import (Checkerboard, DiskMatte, LayerSpec, Ramp,
                              SmoothNoise, StaticMotion, SynthConfig,
                              make_scene)

from conftest import make_identity_scene, make_translation_scene, random_frame


def const_alpha(value, w, h):
    return AlphaMap(np.full((h, w), value, dtype=np.float32))


class TestCompositeFrame:
    def test_opaque_foreground_wins(self, rng):
        bg, fg = random_frame(rng, 5, 4), random_frame(rng, 5, 4)
        out = composite_frame(bg, [(fg, const_alpha(1.0, 5, 4))])
        assert np.array_equal(out.pixels, fg.pixels)

    def test_transparent_foreground_keeps_background(self, rng):
        bg, fg = random_frame(rng, 5, 4), random_frame(rng, 5, 4)
        out = composite_frame(bg, [(fg, const_alpha(0.0, 5, 4))])
        assert np.array_equal(out.pixels, bg.pixels)

    def test_half_blend(self):
        bg = Frame(np.zeros((4, 5, 3)))
        fg = Frame(np.ones((4, 5, 3)))
        out = composite_frame(bg, [(fg, const_alpha(0.5, 5, 4))])
        assert np.allclose(out.pixels, 0.5, atol=1e-12)

    def test_invalid_foreground_pixels_composite_as_transparent(self, rng):
        bg = random_frame(rng, 5, 4)
        fg = random_frame(rng, 5, 4)
        fg.validity = np.zeros((4, 5), dtype=bool)
        fg.validity[0, 0] = True
        out = composite_frame(bg, [(fg, const_alpha(1.0, 5, 4))])
        assert np.array_equal(out.pixels[0, 0], fg.pixels[0, 0])
        assert np.array_equal(out.pixels[1:], bg.pixels[1:])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_property_output_in_range_and_monotone(seed):
    rng = np.random.default_rng(seed)
    h, w = 4, 6
    bg = Frame(rng.uniform(size=(h, w, 3)))
    fg = Frame(np.clip(bg.pixels + rng.uniform(0, 0.5, size=(h, w, 3)), 0, 1))
    a1 = rng.uniform(size=(h, w)).astype(np.float32)
    a2 = np.clip(a1 + rng.uniform(0, 0.3, size=(h, w)).astype(np.float32), 0, 1)
    out1 = composite_frame(bg, [(fg, AlphaMap(a1))])
    out2 = composite_frame(bg, [(fg, AlphaMap(a2))])
    assert out1.pixels.min() >= 0.0 and out1.pixels.max() <= 1.0
    # fg >= bg channel-wise, so raising alpha never lowers the output
    assert np.all(out2.pixels >= out1.pixels - 1e-12)


class TestReconstruct:
    def test_synth_scene_reconstruction_matches(self):
        scene = make_translation_scene(frames=6)
        video = reconstruct_video(scene, scene_atlases(scene))
        for got, want in zip(video, scene.frames):
            assert np.abs(got.pixels - want.pixels).max() <= 1e-5

    def test_background_only_scene(self):
        cfg = SynthConfig(frames=2, width=12, height=10, atlas_width=20,
                          atlas_height=20, foregrounds=[],
                          background=LayerSpec(pattern=SmoothNoise(cells=3),
                                               motion=StaticMotion(offset=(4.0, 5.0))))
        scene = make_scene(cfg)
        from atlasforge.mapping import forward_sample
        for i in range(2):
            direct = forward_sample(scene.background.atlas, scene.background.uv[i])
            got = reconstruct_frame(scene, scene_atlases(scene), i)
            assert np.array_equal(got.pixels, direct.pixels)

    def test_two_disjoint_foregrounds(self):
        cfg = SynthConfig(
            frames=2, width=24, height=16, atlas_width=32, atlas_height=32,
            background=LayerSpec(pattern=SmoothNoise(cells=3), motion=StaticMotion()),
            foregrounds=[
                LayerSpec(pattern=Checkerboard(cell=2), motion=StaticMotion(),
                          matte=DiskMatte(center=(6.0, 8.0), radius=4.0)),
                LayerSpec(pattern=Ramp(), motion=StaticMotion(),
                          matte=DiskMatte(center=(18.0, 8.0), radius=4.0)),
            ])
        scene = make_scene(cfg)
        from atlasforge.mapping import forward_sample
        frame = reconstruct_frame(scene, scene_atlases(scene), 0)
        for li, layer in enumerate(scene.foregrounds):
            mask = layer.alpha[0].values > 0
            sampled = forward_sample(layer.atlas, layer.uv[0])
            assert np.allclose(frame.pixels[mask], sampled.pixels[mask], atol=1e-12)

    def test_single_frame_video(self):
        scene = make_identity_scene(frames=1)
        video = reconstruct_video(scene, scene_atlases(scene))
        assert len(video) == 1
        single = reconstruct_frame(scene, scene_atlases(scene), 0)
        assert np.array_equal(video[0].pixels, single.pixels)

    def test_frame_index_out_of_range(self):
        scene = make_identity_scene(frames=2)
        with pytest.raises(IndexError):
            reconstruct_frame(scene, scene_atlases(scene), 2)

    def test_duplicate_order_rejected_by_validation(self):
        scene = make_identity_scene()
        scene.foregrounds[0].order = scene.background.order
        assert any(v.field == "layer.order" for v in validate_scene(scene))

    def test_worker_cap_does_not_change_results(self, monkeypatch):
        scene = make_translation_scene(frames=6)
        monkeypatch.setenv("ATLASFORGE_THREADS", "1")
        serial = reconstruct_video(scene, scene_atlases(scene))
        monkeypatch.setenv("ATLASFORGE_THREADS", "3")
        threaded = reconstruct_video(scene, scene_atlases(scene))
        for a, b in zip(serial, threaded):
            assert np.array_equal(a.pixels, b.pixels)

    def test_worker_count_parsing(self, monkeypatch):
        from atlasforge.parallel import worker_count
        monkeypatch.setenv("ATLASFORGE_THREADS", "5")
        assert worker_count() == 5
        monkeypatch.setenv("ATLASFORGE_THREADS", "0")
        assert worker_count() >= 1
        monkeypatch.setenv("ATLASFORGE_THREADS", "garbage")
        assert worker_count() >= 1
