"""Key-frame selection and sequential consistency-aware editing.

The first key frame is edited directly from the foreground view. Every
following key frame receives the previous edit warped through atlas space
(splat with the previous frame's opacity, resample with the current frame's
mapping, multiply by the current opacity) as its init; stochastic generators
get that init perturbed by the noise schedule, remote generators get it
clean together with t0 and noise in their own space. After all key frames
are edited, the aggregation net fuses them into an edited atlas and the
video is reconstructed by compositing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .aggregation import AggregationResult, TrainConfig, aggregate
from .compositing import reconstruct_video, scene_atlases
from .generators import GenInput, Generator, RemoteGenerator, get_generator
from .guidance import EdgeMap, canny
from .mapping import warp_keyframe
from .noise import perturb
from .scene import Atlas, EditRequest, Frame, Scene

MID_GRAY = 0.5


class PropagationError(Exception):
    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        super().__init__(message)


@dataclass(frozen=True)
class KeyFrameSet:
    """Strictly increasing frame indices starting at 0."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = self.indices
        if not idx:
            raise ValueError("key-frame set cannot be empty")
        if idx[0] != 0:
            raise ValueError(f"first key frame must be 0, got {idx[0]}")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"key-frame indices must be strictly increasing: {idx}")

    def __iter__(self):
        return iter(self.indices)

    def __len__(self):
        return len(self.indices)


def select_keyframes(frame_count: int, interval: int = 20) -> KeyFrameSet:
    """Every `interval`-th frame starting at 0."""
    if interval < 1:
        raise ValueError(f"interval must be >= 1, got {interval}")
    if frame_count < 1:
        raise ValueError("frame count must be >= 1")
    return KeyFrameSet(tuple(range(0, frame_count, interval)))


def keyframes_for_request(scene: Scene, request: EditRequest) -> KeyFrameSet:
    if request.keyframes is not None:
        ks = KeyFrameSet(tuple(int(i) for i in request.keyframes))
        if ks.indices[-1] >= scene.frame_count:
            raise ValueError(f"key frame {ks.indices[-1]} out of range "
                             f"[0, {scene.frame_count})")
        return ks
    return select_keyframes(scene.frame_count, request.keyframe_interval)


def foreground_view(scene: Scene, layer: int, index: int) -> tuple[Frame, EdgeMap]:
    """Foreground isolated over mid-gray, plus its structure edges."""
    fg = scene.foregrounds[layer]
    assert fg.alpha is not None
    alpha = fg.alpha[index].values.astype(np.float64)[..., None]
    pixels = alpha * scene.frames[index].pixels + (1.0 - alpha) * MID_GRAY
    frame = Frame(pixels)
    return frame, canny(frame)


def _resolve_generator(request: EditRequest, generator: Optional[Generator]) -> Generator:
    if generator is not None:
        return generator
    return get_generator(request.generator, remote_url=request.remote_url)


def edit_keyframes(scene: Scene, request: EditRequest,
                   generator: Optional[Generator] = None) -> list[Frame]:
    """Sequentially edit the key frames of the request's target layer."""
    request.validate()
    gen = _resolve_generator(request, generator)
    keys = keyframes_for_request(scene, request)
    fg = scene.foregrounds[request.layer]
    assert fg.alpha is not None
    atlas_dims = (fg.atlas.width, fg.atlas.height)
    remote = isinstance(gen, RemoteGenerator)

    edited: list[Frame] = []
    prev_index: Optional[int] = None
    for step, index in enumerate(keys):
        view, condition = foreground_view(scene, request.layer, index)
        if step == 0:
            gen_input = GenInput(init=view, condition=condition, prompt=request.prompt,
                                 t0=request.t0 if remote else 0.0,
                                 seed=request.seed, mode="first")
        else:
            prev = edited[-1]
            prev_alpha = fg.alpha[prev_index].values > 0.0
            carried = Frame(prev.pixels, validity=prev.valid_mask() & prev_alpha)
            warped = warp_keyframe(carried, fg.uv[prev_index], fg.uv[index],
                                   fg.alpha[index], atlas_dims)
            step_seed = request.seed ^ step
            if gen.stochastic and not remote:
                warped = Frame(perturb(warped.pixels, request.t0, step_seed),
                               validity=warped.validity)
            gen_input = GenInput(init=warped, condition=condition, prompt=request.prompt,
                                 t0=request.t0, seed=step_seed, mode="propagate")
        try:
            frame = gen.generate(gen_input)
        except Exception as e:
            raise PropagationError(
                f"generator {gen.name!r} failed at key-frame step {step} "
                f"(frame {index}): {e}", step=step) from e
        if frame.pixels.shape != (scene.height, scene.width, 3):
            raise PropagationError(
                f"generator returned {frame.pixels.shape} at step {step}, "
                f"expected {(scene.height, scene.width, 3)}", step=step)
        edited.append(frame)
        prev_index = index
    return edited


def propagation_deviation(scene: Scene, request: EditRequest,
                          generator: Optional[Generator] = None) -> float:
    """Mean |E_k - warp(E_{k-1})| over the valid overlap, averaged over steps.

    The fidelity half of the noise-strength trade-off: how far each
    propagated key frame drifts from the appearance carried over from its
    predecessor. Zero when there is a single key frame.
    """
    gen = _resolve_generator(request, generator)
    keys = keyframes_for_request(scene, request)
    edited = edit_keyframes(scene, request, gen)
    if len(edited) < 2:
        return 0.0
    fg = scene.foregrounds[request.layer]
    assert fg.alpha is not None
    atlas_dims = (fg.atlas.width, fg.atlas.height)
    deviations = []
    for step in range(1, len(edited)):
        prev_index, index = keys.indices[step - 1], keys.indices[step]
        prev = edited[step - 1]
        carried = Frame(prev.pixels,
                        validity=prev.valid_mask() & (fg.alpha[prev_index].values > 0.0))
        warped = warp_keyframe(carried, fg.uv[prev_index], fg.uv[index],
                               fg.alpha[index], atlas_dims)
        valid = warped.valid_mask()
        if not valid.any():
            deviations.append(0.0)
            continue
        diff = np.abs(edited[step].pixels - warped.pixels)
        deviations.append(float(diff[valid].mean()))
    return float(np.mean(deviations))


@dataclass
class EditResult:
    video: list[Frame]
    atlases: list[Atlas]           # aligned with scene.layers
    keyframe_indices: tuple[int, ...]
    edited_keyframes: list[Frame]
    loss_history: list[float]


def edit_background_atlas(scene: Scene, request: EditRequest,
                          generator: Optional[Generator] = None) -> Atlas:
    """Single generate call on the background atlas image."""
    gen = _resolve_generator(request, generator)
    atlas_frame = Frame(scene.background.atlas.pixels.copy())
    condition = canny(atlas_frame)
    out = gen.generate(GenInput(init=atlas_frame, condition=condition,
                                prompt=request.prompt, t0=request.t0,
                                seed=request.seed, mode="first"))
    return Atlas(np.clip(out.pixels, 0.0, 1.0))


def run_edit(scene: Scene, request: EditRequest,
             generator: Optional[Generator] = None,
             train_config: Optional[TrainConfig] = None) -> EditResult:
    """Full edit: key frames -> aggregation -> reconstruction."""
    request.validate()
    if not 0 <= request.layer < len(scene.foregrounds):
        raise ValueError(f"layer {request.layer} out of range "
                         f"[0, {len(scene.foregrounds)})")
    gen = _resolve_generator(request, generator)
    config = train_config if train_config is not None else TrainConfig()
    config.seed = request.seed if train_config is None else config.seed

    keys = keyframes_for_request(scene, request)
    edited = edit_keyframes(scene, request, gen)
    agg: AggregationResult = aggregate(scene, request.layer, edited,
                                       list(keys), config)

    atlases = scene_atlases(scene)
    atlases[1 + request.layer] = agg.atlas
    if request.edit_background:
        atlases[0] = edit_background_atlas(scene, request, gen)
    video = reconstruct_video(scene, atlases)
    return EditResult(video=video, atlases=atlases,
                      keyframe_indices=tuple(keys),
                      edited_keyframes=edited,
                      loss_history=agg.loss_history)
