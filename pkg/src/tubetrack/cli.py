"""Command line: simulate, oracle, track, eval, loss and selftest."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Sequence

from . import formats
from .config import RunConfig, _SECTIONS, config_from_dict, dump_config, load_config
from .errors import ConfigError, TubeTrackError
from .metrics import evaluate, format_key_values, format_table
from .pipeline import anchors_for, n_frames_of, oracle_windows, track_windows, window_losses
from .simulator import simulate


def _override(cfg: RunConfig, assignments: Sequence[str]) -> RunConfig:
    """Apply ``section.key=value`` overrides; values are parsed as JSON when possible."""
    if not assignments:
        return cfg
    data = json.loads(dump_config(cfg))
    for item in assignments:
        key, sep, raw = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot or section not in _SECTIONS:
            raise ConfigError(f"bad override {item!r}; expected section.key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        data[section][name] = value
    return config_from_dict(data)


def _frame_size(args) -> tuple[float, float] | None:
    return tuple(args.frame_size) if getattr(args, "frame_size", None) else None


def _read_predictions(path: str, frame_size):
    with open(path) as fh:
        first = fh.readline().strip().split(",")
    if tuple(c.strip() for c in first) == formats.GT_COLUMNS:
        return formats.read_ground_truth(path, frame_size)
    return formats.read_tracks(path, frame_size)


def cmd_simulate(args, cfg: RunConfig) -> int:
    scene_cfg = dataclasses.replace(cfg.scene, seed=args.seed)
    if args.n_objects is not None:
        scene_cfg = dataclasses.replace(scene_cfg, n_objects=args.n_objects)
    if args.n_frames is not None:
        scene_cfg = dataclasses.replace(scene_cfg, n_frames=args.n_frames)
    scene = simulate(scene_cfg)
    formats.write_ground_truth(scene.records, args.out, _frame_size(args))
    manifest = args.manifest or cfg.paths.manifest or str(Path(args.out).with_suffix(".manifest.json"))
    with open(manifest, "w") as fh:
        json.dump(scene.manifest(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(scene.records)} records for {len(scene.objects)} objects to {args.out}")
    return 0


def cmd_oracle(args, cfg: RunConfig) -> int:
    records = formats.read_ground_truth(args.gt, _frame_size(args))
    windows = oracle_windows(records, cfg, n_total=args.n_frames or n_frames_of(records))
    formats.write_tube_file(windows, args.out, cfg.time_basis, cfg.oracle.margin)
    print(f"wrote {len(windows)} windows to {args.out}")
    return 0


def cmd_track(args, cfg: RunConfig) -> int:
    if (args.tubes is None) == (args.gt is None):
        raise ConfigError("track needs exactly one of --tubes or --gt")
    anchors = anchors_for(cfg)
    if args.tubes is not None:
        header, windows = formats.read_tube_file(args.tubes)
        if header.n_anchors != len(anchors) or header.n_frames != cfg.anchor.n_frames:
            raise ConfigError(
                f"tube file has {header.n_anchors} anchors over {header.n_frames} frames; "
                f"the anchor config gives {len(anchors)} over {cfg.anchor.n_frames}"
            )
        if header.basis != cfg.time_basis:
            cfg = dataclasses.replace(
                cfg, basis=dataclasses.replace(cfg.basis, origin=header.time_origin, scale=header.time_scale)
            )
    else:
        records = formats.read_ground_truth(args.gt, _frame_size(args))
        windows = oracle_windows(records, cfg, anchors, n_frames_of(records))
    tracks = track_windows(windows, cfg, anchors)
    formats.write_tracks(tracks, args.out, _frame_size(args))
    print(f"wrote {len(tracks)} records for {len({r.track_id for r in tracks})} tracks to {args.out}")
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    gt = formats.read_ground_truth(args.gt, _frame_size(args))
    pred = _read_predictions(args.pred, _frame_size(args))
    result = evaluate(gt, pred, cfg.eval)
    print(format_table([(Path(args.pred).stem, result)]))
    print(format_key_values(result), end="")
    if args.out:
        formats.write_eval_result(result, args.out)
    return 0


def cmd_loss(args, cfg: RunConfig) -> int:
    header, windows = formats.read_tube_file(args.tubes)
    cfg = dataclasses.replace(
        cfg, basis=dataclasses.replace(cfg.basis, origin=header.time_origin, scale=header.time_scale)
    )
    records = formats.read_ground_truth(args.gt, _frame_size(args))
    reports = window_losses(windows, records, cfg)
    for start, rep in reports:
        print(
            f"window={start} total={rep.total!r} motion={rep.motion!r} classification={rep.classification!r} "
            f"visibility={rep.visibility!r} n_pos={rep.n_pos}"
        )
    if reports:
        mean = sum(r.total for _, r in reports) / len(reports)
        print(f"mean_total={mean!r}")
    return 0


def cmd_selftest(args, cfg: RunConfig) -> int:
    from .selftest import run_all

    ok = run_all(seed=args.seed, scale=args.scale, out=sys.stdout)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tubetrack", description="Anchor-tube multi-object tracking toolkit.")
    parser.add_argument("--config", help="JSON run config (default: $TUBETRACK_CONFIG)")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
        help="override one config value; repeatable",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        return p

    def frame_size(p):
        p.add_argument("--frame-size", type=float, nargs=2, metavar=("W", "H"),
                       help="files hold pixel coordinates for this frame size")

    p = add("simulate", cmd_simulate, "generate a scene and write ground truth")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="ground-truth CSV")
    p.add_argument("--manifest", help="scene manifest (default: next to --out)")
    p.add_argument("--n-objects", type=int)
    p.add_argument("--n-frames", type=int)
    frame_size(p)

    p = add("oracle", cmd_oracle, "fit per-window motion to ground truth and write a tube file")
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-frames", type=int, help="sequence length (default: last frame + 1)")
    frame_size(p)

    p = add("track", cmd_track, "track a tube file, or ground truth through the oracle")
    p.add_argument("--tubes")
    p.add_argument("--gt")
    p.add_argument("--out", required=True)
    frame_size(p)

    p = add("eval", cmd_eval, "score tracker output against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", help="write the result as JSON")
    frame_size(p)

    p = add("loss", cmd_loss, "training losses of a tube file against ground truth")
    p.add_argument("--tubes", required=True)
    p.add_argument("--gt", required=True)
    frame_size(p)

    p = add("selftest", cmd_selftest, "run the brute-force cross-checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=1.0, help="multiplies the number of random cases")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _override(load_config(args.config), args.overrides)
        return args.func(args, cfg)
    except (TubeTrackError, OSError, ValueError) as exc:
        print(f"tubetrack {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
