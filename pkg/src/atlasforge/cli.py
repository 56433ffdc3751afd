"""Operator entry point.

Subcommands: synth, reconstruct, edit, aggregate, metrics, t0-sweep. All
file outputs are byte-deterministic for a fixed --seed. Output directories
are built in a temporary sibling and renamed into place on success, so a
failed run leaves nothing behind. Exit codes: 0 success, 1 usage error,
2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
import tempfile
from pathlib import Path

from .aggregation import TrainConfig, aggregate
from .compositing import reconstruct_video, scene_atlases
from .generators import GENERATOR_IDS, get_generator
from .imgio import load_rgb8, save_rgb8
from .metrics import metrics_report
from .propagation import (edit_keyframes, keyframes_for_request,
                          propagation_deviation, run_edit)
from .scene import EditRequest, Frame, load_scene, save_scene
from .synth import config_from_json, make_scene

DEFAULT_T0 = 0.8
DEFAULT_INTERVAL = 20


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; the contract wants 1
        raise _UsageError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}")


def build_parser() -> _Parser:
    parser = _Parser(prog="atlasforge",
                     description="Layered-video editing engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene directory")
    p.add_argument("--config", required=True, help="JSON synth config file")
    p.add_argument("--out", required=True, help="scene directory to create")

    p = sub.add_parser("reconstruct", help="rebuild frames from the scene's own atlases")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)

    def add_edit_flags(p, with_metrics: bool):
        p.add_argument("--scene", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--layer", type=int, default=0)
        p.add_argument("--prompt", required=True)
        p.add_argument("--generator", choices=list(GENERATOR_IDS), default="passthrough")
        p.add_argument("--remote-url", default=None)
        p.add_argument("--t0", type=float, default=DEFAULT_T0)
        p.add_argument("--keyframe-interval", type=int, default=DEFAULT_INTERVAL)
        p.add_argument("--keyframes", type=_int_list, default=None,
                       help="explicit comma-separated key-frame indices (overrides interval)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--epochs", type=int, default=500)
        p.add_argument("--lr", type=float, default=0.003)
        p.add_argument("--momentum", type=float, default=0.9)
        p.add_argument("--agg-resolution", type=_int_list, default=None,
                       metavar="W,H", help="aggregation working atlas size "
                       "(default: the layer's atlas size)")
        if with_metrics:
            p.add_argument("--edit-background", action="store_true",
                           help="also edit the background atlas (single generate call)")
            p.add_argument("--metrics", action="store_true",
                           help="write report.json comparing against the original")

    p = sub.add_parser("edit", help="run the full edit pipeline")
    add_edit_flags(p, with_metrics=True)

    p = sub.add_parser("aggregate", help="edit key frames and train the atlas only")
    add_edit_flags(p, with_metrics=False)

    p = sub.add_parser("metrics", help="consistency metrics between two videos")
    p.add_argument("--original", required=True, help="original scene directory")
    p.add_argument("--edited", required=True, help="edited output (or scene) directory")
    p.add_argument("--out", required=True, help="report JSON path")

    p = sub.add_parser("t0-sweep", help="sweep noise strengths with the stochastic "
                                        "test generator")
    p.add_argument("--scene", required=True)
    p.add_argument("--values", type=_float_list, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--layer", type=int, default=0)
    p.add_argument("--prompt", default="")
    p.add_argument("--keyframe-interval", type=int, default=DEFAULT_INTERVAL)
    p.add_argument("--seed", type=int, default=0)
    return parser


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

class _OutputDir:
    """Builds the output in a temp sibling; renames into place on success."""

    def __init__(self, target: str):
        self.target = Path(target)

    def __enter__(self) -> Path:
        if self.target.exists():
            raise FileExistsError(f"output path already exists: {self.target}")
        self.target.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(dir=self.target.parent,
                                         prefix=self.target.name + ".tmp-"))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.tmp.rename(self.target)
        else:
            shutil.rmtree(self.tmp, ignore_errors=True)
        return False


def _write_frames(directory: Path, frames) -> None:
    fdir = directory / "frames"
    fdir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        save_rgb8(fdir / f"{i:04d}.png", frame.pixels)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_loss_csv(path: Path, history) -> None:
    lines = ["epoch,loss"]
    lines += [f"{i},{loss:.12g}" for i, loss in enumerate(history)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_video(path: str | Path) -> list[Frame]:
    """Frames from a scene directory or from an output directory's frames/."""
    root = Path(path)
    if (root / "manifest.json").is_file():
        return load_scene(root).frames
    fdir = root / "frames"
    if fdir.is_dir():
        files = sorted(fdir.glob("*.png"))
        if not files:
            raise FileNotFoundError(f"no frames in {fdir}")
        return [Frame(load_rgb8(f)) for f in files]
    raise FileNotFoundError(f"{root} is neither a scene directory nor an output directory")


def _request_from_args(args) -> EditRequest:
    return EditRequest(
        prompt=args.prompt,
        t0=args.t0,
        generator=args.generator,
        seed=args.seed,
        keyframe_interval=args.keyframe_interval,
        layer=args.layer,
        keyframes=args.keyframes,
        edit_background=getattr(args, "edit_background", False),
        remote_url=args.remote_url,
    )


def _train_config_from_args(args) -> TrainConfig:
    atlas_size = None
    if args.agg_resolution is not None:
        if len(args.agg_resolution) != 2:
            raise ValueError("--agg-resolution expects W,H")
        atlas_size = (args.agg_resolution[0], args.agg_resolution[1])
    return TrainConfig(epochs=args.epochs, lr=args.lr, momentum=args.momentum,
                       seed=args.seed, atlas_size=atlas_size)


def _request_json(request: EditRequest, keyframes) -> dict:
    return {
        "prompt": request.prompt,
        "t0": request.t0,
        "generator": request.generator,
        "seed": request.seed,
        "keyframe_interval": request.keyframe_interval,
        "layer": request.layer,
        "keyframes": list(keyframes),
        "edit_background": request.edit_background,
    }


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_synth(args) -> int:
    config = config_from_json(json.loads(Path(args.config).read_text(encoding="utf-8")))
    scene = make_scene(config)
    with _OutputDir(args.out) as tmp:
        save_scene(scene, tmp)
    return 0


def _cmd_reconstruct(args) -> int:
    scene = load_scene(args.scene)
    video = reconstruct_video(scene, scene_atlases(scene))
    with _OutputDir(args.out) as tmp:
        _write_frames(tmp, video)
    return 0


def _cmd_edit(args) -> int:
    scene = load_scene(args.scene)
    request = _request_from_args(args)
    config = _train_config_from_args(args)
    result = run_edit(scene, request, train_config=config)
    with _OutputDir(args.out) as tmp:
        _write_frames(tmp, result.video)
        layer_name = scene.foregrounds[request.layer].name
        save_rgb8(tmp / f"atlas_{layer_name}.png", result.atlases[1 + request.layer].pixels)
        if request.edit_background:
            save_rgb8(tmp / f"atlas_{scene.background.name}.png", result.atlases[0].pixels)
        _write_loss_csv(tmp / "loss_history.csv", result.loss_history)
        _write_json(tmp / "edit.json", _request_json(request, result.keyframe_indices))
        if args.metrics:
            _write_json(tmp / "report.json",
                        metrics_report(scene.frames, result.video, scene))
    return 0


def _cmd_aggregate(args) -> int:
    scene = load_scene(args.scene)
    request = _request_from_args(args)
    config = _train_config_from_args(args)
    keys = keyframes_for_request(scene, request)
    edited = edit_keyframes(scene, request)
    result = aggregate(scene, request.layer, edited, list(keys), config)
    with _OutputDir(args.out) as tmp:
        save_rgb8(tmp / "atlas.png", result.atlas.pixels)
        _write_loss_csv(tmp / "loss_history.csv", result.loss_history)
        kdir = tmp / "keyframes"
        kdir.mkdir()
        for index, frame in zip(keys, edited):
            save_rgb8(kdir / f"{index:04d}.png", frame.pixels)
        _write_json(tmp / "edit.json", _request_json(request, keys))
    return 0


def _cmd_metrics(args) -> int:
    scene = load_scene(args.original)
    edited = load_video(args.edited)
    report = metrics_report(scene.frames, edited, scene)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile("w", dir=out.parent, suffix=".tmp",
                                     delete=False, encoding="utf-8") as fh:
        fh.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
        tmp_name = fh.name
    Path(tmp_name).replace(out)
    return 0


def _cmd_t0_sweep(args) -> int:
    scene = load_scene(args.scene)
    rows = []
    with _OutputDir(args.out) as tmp:
        for value in args.values:
            request = EditRequest(prompt=args.prompt, t0=value,
                                  generator="noisy-passthrough", seed=args.seed,
                                  keyframe_interval=args.keyframe_interval,
                                  layer=args.layer)
            generator = get_generator(request.generator)
            deviation = propagation_deviation(scene, request, generator)
            result = run_edit(scene, request, generator)
            vdir = tmp / f"t0_{value:.3f}"
            vdir.mkdir()
            _write_frames(vdir, result.video)
            rows.append({"t0": value, "warp_deviation": deviation})
        _write_json(tmp / "sweep.json", rows)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "reconstruct": _cmd_reconstruct,
    "edit": _cmd_edit,
    "aggregate": _cmd_aggregate,
    "metrics": _cmd_metrics,
    "t0-sweep": _cmd_t0_sweep,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return 0 if e.code in (0, None) else 1
    try:
        return _COMMANDS[args.command](args)
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
