"""End-to-end steps shared by the command line and the acceptance suite."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

from .anchors import AnchorSet, generate_anchor_tubes, match
from .config import RunConfig
from .loss import LossReport, PredictionWindow, window_loss
from .metrics import EvalResult, evaluate
from .records import TrackRecord
from .simulator import Scene, oracle_predict, prepare_training_tracks, simulate
from .tracker import run

Windows = list[tuple[int, PredictionWindow]]


def anchors_for(cfg: RunConfig) -> AnchorSet:
    return generate_anchor_tubes(cfg.anchor)


def n_frames_of(records: Sequence[TrackRecord]) -> int:
    return max((r.frame for r in records), default=-1) + 1


def oracle_windows(
    records: Sequence[TrackRecord], cfg: RunConfig, anchors: AnchorSet | None = None, n_total: int | None = None
) -> Windows:
    anchors = anchors or anchors_for(cfg)
    return oracle_predict(records, anchors, cfg.oracle, cfg.noise, n_total or n_frames_of(records), cfg.time_basis)


def track_windows(windows: Windows, cfg: RunConfig, anchors: AnchorSet | None = None) -> list[TrackRecord]:
    anchors = anchors or anchors_for(cfg)
    _, records = run(windows, cfg.tracker, anchors, cfg.time_basis)
    return records


def window_losses(
    windows: Windows, records: Sequence[TrackRecord], cfg: RunConfig, anchors: AnchorSet | None = None
) -> list[tuple[int, LossReport]]:
    """Loss of each predicted window against the ground truth cut to the same frames."""
    anchors = anchors or anchors_for(cfg)
    starts = [s for s, _ in windows]
    gt = prepare_training_tracks(records, cfg.anchor.n_frames, cfg.oracle.delta_v, starts=starts)
    out = []
    vt = cfg.oracle.vis_threshold
    for (start, pred), wt in zip(windows, gt):
        usable = [j for j, t in enumerate(wt.tracks) if t.visible(vt).any()]
        tracks = [wt.tracks[j] for j in usable]
        res = match(anchors, tracks, cfg.oracle.delta_o, [wt.track_ids[j] for j in usable], vt)
        report = window_loss(
            pred, anchors, tracks, [wt.classes[j] for j in usable], res, cfg.time_basis,
            cfg.loss.weights, cfg.loss.neg_pos_ratio, vt, cfg.loss.kind,
        )
        out.append((start, report))
    return out


@dataclass
class EndToEnd:
    scene: Scene
    windows: Windows
    tracks: list[TrackRecord]
    result: EvalResult
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def wall_time(self) -> float:
        return sum(self.timings.values())


def end_to_end(cfg: RunConfig) -> EndToEnd:
    """simulate, oracle, track and evaluate, timing each stage."""
    timings = {}
    t0 = time.perf_counter()
    scene = simulate(cfg.scene)
    t1 = time.perf_counter()
    anchors = anchors_for(cfg)
    windows = oracle_windows(scene.records, cfg, anchors, cfg.scene.n_frames)
    t2 = time.perf_counter()
    tracks = track_windows(windows, cfg, anchors)
    t3 = time.perf_counter()
    result = evaluate(scene.records, tracks, cfg.eval)
    t4 = time.perf_counter()
    timings.update(simulate=t1 - t0, oracle=t2 - t1, track=t3 - t2, eval=t4 - t3)
    return EndToEnd(scene, windows, tracks, result, timings)
