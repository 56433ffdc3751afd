"""atlasforge: layered-video editing with consistency-aware propagation.

A video is represented as atlas layers (one global image per layer plus
per-frame UV/opacity grids). Edits are applied to sparse key frames,
propagated between them through atlas space, fused into an edited atlas by
a small trained network, and composited back into every frame. Content
generation is pluggable: deterministic built-ins for testing, or a remote
diffusion-backed service over a framed HTTP protocol.
"""

from .aggregation import (AggregationNet, AggregationResult, TrainConfig,
                          TrainData, aggregate, build_inputs, init_net,
                          loss_and_grad, net_forward, train)
from .compositing import (composite_frame, reconstruct_frame,
                          reconstruct_video, scene_atlases)
from .generators import (GenInput, Generator, GeneratorError,
                         RemoteGeneratorError, UnknownGeneratorError,
                         builtin_passthrough, builtin_recolor, generate,
                         get_generator, remote_generate)
from .guidance import EdgeMap, canny, edge_iou
from .mapping import PartialAtlas, forward_sample, inverse_splat, warp_keyframe
from .metrics import (FlowField, dense_flow, flow_consistency, metrics_report,
                      positional_deviation, temporal_deviation)
from .noise import ScheduleParams, alpha_sigma, perturb
from .propagation import (EditResult, KeyFrameSet, PropagationError,
                          edit_keyframes, foreground_view,
                          propagation_deviation, run_edit, select_keyframes)
from .scene import (UNMAPPED, AlphaMap, Atlas, EditRequest, Frame, Layer,
                    Scene, SceneError, UVMap, Violation, load_scene,
                    save_scene, validate_scene)
from .synth import SynthConfig, analytic_uv, make_scene

__version__ = "0.1.0"
