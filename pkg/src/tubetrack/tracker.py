"""Window-by-window tracker.

Each window of predictions goes through confidence filtering, tube NMS and
association against the current trajectories. Association uses the Hungarian
solver on ``1 - IOU`` where IOU is the tracklet IOU over the frames a
trajectory shares with the incoming window. When nothing is shared (stride
equal to the window length, or a trajectory that missed a window) the
trajectory's last motion model is extrapolated over the new window instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .anchors import AnchorSet, decode_array
from .assignment import hungarian
from .errors import ConfigError, ContractError, SequenceError
from .geometry import DEFAULT_VIS_THRESHOLD, BoxSeq, corners_array, pairwise_tracklet_iou, tracklet_iou_batch
from .loss import PredictionWindow, softmax
from .motion import TimeBasis, decode_tubes, eval_encoded_array
from .records import TrackRecord, sort_records


@dataclass(frozen=True)
class TrackerConfig:
    n_frames: int = 16
    window_stride: int = 8
    delta_c: float = 0.4
    delta_nms: float = 0.3
    delta_assoc: float = 0.2
    max_misses: int = 1
    vis_threshold: float = DEFAULT_VIS_THRESHOLD
    emit_invisible: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.n_frames < 3:
            raise ConfigError(f"n_frames must be >= 3, got {self.n_frames}")
        if not 1 <= self.window_stride <= self.n_frames:
            raise ConfigError(f"window_stride must be in [1, n_frames], got {self.window_stride}")
        for name in ("delta_c", "delta_nms", "delta_assoc", "vis_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.max_misses < 0:
            raise ConfigError(f"max_misses must be >= 0, got {self.max_misses}")


@dataclass
class Tracklet:
    """A decoded tube for one window.

    ``motion`` and ``anchor`` are kept when known so the tracklet can be
    extrapolated past its window.
    """

    seq: BoxSeq
    class_id: int
    confidence: float
    window_start: int
    motion: np.ndarray | None = None
    anchor: np.ndarray | None = None

    def __post_init__(self):
        if self.class_id == 0:
            raise ValueError("tracklets cannot carry the background class")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")

    @property
    def frames(self) -> range:
        return range(self.window_start, self.window_start + len(self.seq))


@dataclass
class Trajectory:
    track_id: int
    records: dict = field(default_factory=dict)  # frame -> (cx, cy, w, h, vis, conf)
    class_id: int = 1
    last_window: int = -1
    misses: int = 0
    motion: np.ndarray | None = None
    anchor: np.ndarray | None = None
    motion_start: int = 0

    def absorb(self, t: Tracklet, window_index: int) -> None:
        """Copy a tracklet's boxes in; the tracklet wins on shared frames."""
        for k, f in enumerate(t.frames):
            self.records[f] = (*map(float, t.seq.boxes[k]), float(t.seq.visibility[k]), float(t.confidence))
        self.records = dict(sorted(self.records.items()))
        self.class_id = t.class_id
        self.last_window = window_index
        self.misses = 0
        if t.motion is not None and t.anchor is not None:
            self.motion, self.anchor, self.motion_start = t.motion, t.anchor, t.window_start

    def boxes_on(self, frames: range) -> tuple[np.ndarray, np.ndarray, int]:
        boxes = np.zeros((len(frames), 4))
        vis = np.zeros(len(frames))
        shared = 0
        for k, f in enumerate(frames):
            rec = self.records.get(f)
            if rec is not None:
                boxes[k] = rec[:4]
                vis[k] = rec[4]
                shared += 1
        return boxes, vis, shared

    def extrapolate(self, frames: range, basis: TimeBasis) -> tuple[np.ndarray, np.ndarray] | None:
        if self.motion is None:
            return None
        taus = basis.tau(np.asarray(frames) - self.motion_start)
        enc = eval_encoded_array(self.motion, taus)
        # far extrapolation can blow up the log-size terms
        enc[..., 2:] = np.clip(enc[..., 2:], -50.0, 50.0)
        return decode_array(self.anchor, enc), np.ones(len(frames))


@dataclass
class TrackSet:
    active: list[Trajectory] = field(default_factory=list)
    retired: list[Trajectory] = field(default_factory=list)
    next_id: int = 0
    frontier: int = -1  # last frame covered by an associated window
    windows_seen: int = 0

    def new_trajectory(self) -> Trajectory:
        t = Trajectory(self.next_id)
        self.next_id += 1
        self.active.append(t)
        return t

    @property
    def all(self) -> list[Trajectory]:
        return sorted(self.active + self.retired, key=lambda t: t.track_id)


def filter_tubes(candidates: Sequence[Tracklet], delta_c: float) -> list[Tracklet]:
    return [t for t in candidates if t.confidence >= delta_c]


def tnms(
    tubes: Sequence[Tracklet], delta_nms: float, vis_threshold: float = DEFAULT_VIS_THRESHOLD
) -> list[Tracklet]:
    """Greedy per-class tube NMS; survivors keep their input order."""
    if not tubes:
        return []
    boxes = np.stack([t.seq.boxes for t in tubes])
    vis = np.stack([t.seq.visibility for t in tubes])
    ious = pairwise_tracklet_iou(boxes, vis, vis_threshold)
    conf = np.array([t.confidence for t in tubes])
    classes = np.array([t.class_id for t in tubes])
    order = np.argsort(-conf, kind="stable")
    kept: list[int] = []
    for i in order:
        same = [k for k in kept if classes[k] == classes[i]]
        if all(ious[i, k] <= delta_nms for k in same):
            kept.append(int(i))
    return [tubes[i] for i in sorted(kept)]


def tracklets_from_predictions(
    pred: PredictionWindow,
    anchors: AnchorSet,
    window_start: int,
    basis: TimeBasis,
    delta_c: float = 0.0,
) -> list[Tracklet]:
    """Decode the tubes whose confidence reaches ``delta_c``.

    Confidence is the best non-background class probability; per-frame
    visibility is the probability of the "visible" class.
    """
    if pred.n_tubes != len(anchors):
        raise ValueError(f"predictions cover {pred.n_tubes} tubes, anchors {len(anchors)}")
    probs = softmax(pred.class_scores)
    fg = probs[:, 1:]
    class_ids = np.argmax(fg, axis=1) + 1
    conf = fg.max(axis=1)
    keep = np.flatnonzero(conf >= delta_c)
    if len(keep) == 0:
        return []
    boxes = decode_tubes(pred.motion[keep], anchors.boxes[keep], basis)
    vis = softmax(pred.vis_scores[:, keep, :])[..., 1].T
    return [
        Tracklet(
            BoxSeq(boxes[n], vis[n]), int(class_ids[i]), float(min(1.0, conf[i])), window_start,
            pred.motion[i], anchors.boxes[i],
        )
        for n, i in enumerate(keep)
    ]


def association_matrix(
    tracks: TrackSet, tracklets: Sequence[Tracklet], basis: TimeBasis, vis_threshold: float
) -> np.ndarray:
    """IOU matrix between active trajectories (rows) and tracklets (columns)."""
    psi = np.zeros((len(tracks.active), len(tracklets)))
    if not tracklets or not tracks.active:
        return psi
    frames = tracklets[0].frames
    boxes = np.stack([t.seq.boxes for t in tracklets])
    vis = np.stack([t.seq.visibility for t in tracklets])
    for r, traj in enumerate(tracks.active):
        tb, tv, _ = traj.boxes_on(frames)
        unseen = tv < vis_threshold
        if unseen.any():
            ext = traj.extrapolate(frames, basis)
            if ext is not None:
                tb = np.where(unseen[:, None], ext[0], tb)
                tv = np.where(unseen, ext[1], tv)
        psi[r] = tracklet_iou_batch(tb, tv, boxes, vis, vis_threshold)
    return psi


def associate(
    tracks: TrackSet,
    tracklets: Sequence[Tracklet],
    cfg: TrackerConfig,
    basis: TimeBasis | None = None,
) -> TrackSet:
    """Update ``tracks`` in place with one window's tracklets and return it."""
    basis = basis or TimeBasis(cfg.n_frames)
    if tracklets:
        starts = {t.window_start for t in tracklets}
        if len(starts) != 1:
            raise ContractError("tracklets passed to associate must share one window")
        start = starts.pop()
        end = start + cfg.n_frames - 1
        if end < tracks.frontier:
            raise ContractError(
                f"window [{start}, {end}] lies before the tracked frontier {tracks.frontier}"
            )
    window_index = tracks.windows_seen
    tracks.windows_seen += 1

    psi = association_matrix(tracks, tracklets, basis, cfg.vis_threshold)
    matched_rows, matched_cols = set(), set()
    if psi.size:
        for r, c in hungarian(1.0 - psi):
            if psi[r, c] >= cfg.delta_assoc and psi[r, c] > 0:
                tracks.active[r].absorb(tracklets[c], window_index)
                matched_rows.add(r)
                matched_cols.add(c)

    still_active = []
    for r, traj in enumerate(tracks.active):
        if r not in matched_rows:
            traj.misses += 1
            if traj.misses > cfg.max_misses:
                tracks.retired.append(traj)
                continue
        still_active.append(traj)
    tracks.active = still_active

    for c, t in enumerate(tracklets):
        if c not in matched_cols:
            tracks.new_trajectory().absorb(t, window_index)
    if tracklets:
        tracks.frontier = max(tracks.frontier, tracklets[0].window_start + cfg.n_frames - 1)
    return tracks


class Tracker:
    """Stateful driver; feed windows in increasing start order."""

    def __init__(self, cfg: TrackerConfig | None = None, anchors: AnchorSet | None = None,
                 basis: TimeBasis | None = None):
        self.cfg = cfg or TrackerConfig()
        self.anchors = anchors
        self.basis = basis or TimeBasis(self.cfg.n_frames)
        if self.basis.n_frames != self.cfg.n_frames:
            raise ConfigError("time basis and tracker disagree on n_frames")
        if anchors is not None and anchors.n_frames != self.cfg.n_frames:
            raise ConfigError("anchors and tracker disagree on n_frames")
        self.tracks = TrackSet()
        self._last_start: int | None = None

    def _check_order(self, start: int) -> None:
        if self._last_start is not None and start <= self._last_start:
            raise SequenceError(f"window starting at {start} arrived after {self._last_start}")
        self._last_start = start

    def step_tracklets(self, window_start: int, tracklets: Sequence[Tracklet]) -> list[Tracklet]:
        self._check_order(window_start)
        for t in tracklets:
            if t.window_start != window_start or len(t.seq) != self.cfg.n_frames:
                raise ContractError("tracklet does not belong to this window")
        kept = tnms(filter_tubes(tracklets, self.cfg.delta_c), self.cfg.delta_nms, self.cfg.vis_threshold)
        associate(self.tracks, kept, self.cfg, self.basis)
        return kept

    def step(self, window_start: int, pred: PredictionWindow) -> list[Tracklet]:
        if self.anchors is None:
            raise ContractError("raw predictions need the anchor set")
        if pred.n_frames != self.cfg.n_frames:
            raise ContractError("prediction window length differs from the tracker's")
        candidates = tracklets_from_predictions(pred, self.anchors, window_start, self.basis, self.cfg.delta_c)
        return self.step_tracklets(window_start, candidates)

    def records(self) -> list[TrackRecord]:
        return trajectory_records(self.tracks, self.cfg)


def trajectory_records(tracks: TrackSet, cfg: TrackerConfig) -> list[TrackRecord]:
    out = []
    for traj in tracks.all:
        if not traj.records:
            continue
        frames = np.fromiter(traj.records.keys(), dtype=np.int64)
        vals = np.array(list(traj.records.values()))
        corners = corners_array(vals[:, :4])
        for f, c, v in zip(frames, corners, vals):
            vis, conf = float(v[4]), float(v[5])
            if not cfg.emit_invisible and vis < cfg.vis_threshold:
                continue
            out.append(TrackRecord(int(f), traj.track_id, *map(float, c), vis, conf))
    return sort_records(out)


def run(
    windows: Iterable[tuple[int, PredictionWindow | Sequence[Tracklet]]],
    cfg: TrackerConfig | None = None,
    anchors: AnchorSet | None = None,
    basis: TimeBasis | None = None,
) -> tuple[TrackSet, list[TrackRecord]]:
    """Track a stream of ``(window_start, predictions-or-tracklets)`` pairs."""
    tracker = Tracker(cfg, anchors, basis)
    for start, item in windows:
        if isinstance(item, PredictionWindow):
            tracker.step(start, item)
        else:
            tracker.step_tracklets(start, item)
    return tracker.tracks, tracker.records()
