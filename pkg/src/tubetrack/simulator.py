"""Box-level synthetic traffic scenes.

Objects are rectangles moving on piecewise-quadratic paths (log-size varies
linearly, so encoded width and height stay quadratic in time too). Each
object has a fixed integer depth (spawn order); boxes of greater depth and
static occluders cover boxes of lesser depth, and visibility is the uncovered
fraction of the box area. Initial sizes grow with depth, as nearer vehicles
look larger.

Also builds per-window training tracks and synthesizes oracle predictions
that stand in for a trained network.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .anchors import AnchorSet, match
from .errors import ConfigError
from .geometry import DEFAULT_VIS_THRESHOLD, BoxSeq
from .loss import PredictionWindow
from .motion import TimeBasis, fit_batch
from .anchors import encode_array
from .records import TrackRecord, by_track, sort_records

ORACLE_MARGIN = 10.0


@dataclass(frozen=True)
class Occluder:
    """Static rectangle (normalized corners), active on frames ``[start, end)``."""

    left: float
    top: float
    right: float
    bottom: float
    start: int = 0
    end: int | None = None

    def active(self, frame: int) -> bool:
        return frame >= self.start and (self.end is None or frame < self.end)


@dataclass(frozen=True)
class Segment:
    """One quadratic piece of a path, valid on frames ``[start, end)``."""

    start: int
    end: int
    cx: float
    cy: float
    vx: float
    vy: float
    ax: float
    ay: float
    log_w: float
    log_h: float
    rate_w: float = 0.0
    rate_h: float = 0.0
    jx: float = 0.0
    jy: float = 0.0

    def state(self, frame: int) -> tuple[float, float, float, float]:
        dt = frame - self.start
        cx = self.cx + self.vx * dt + 0.5 * self.ax * dt * dt + self.jx * dt ** 3 / 6.0
        cy = self.cy + self.vy * dt + 0.5 * self.ay * dt * dt + self.jy * dt ** 3 / 6.0
        return cx, cy, math.exp(self.log_w + self.rate_w * dt), math.exp(self.log_h + self.rate_h * dt)


@dataclass(frozen=True)
class ScriptedObject:
    """Object with an explicit path, for hand-built scenes."""

    track_id: int
    segments: tuple[Segment, ...]
    depth: int

    @property
    def birth(self) -> int:
        return self.segments[0].start

    @property
    def death(self) -> int:
        return self.segments[-1].end

    def box(self, frame: int) -> tuple[float, float, float, float]:
        for seg in self.segments:
            if seg.start <= frame < seg.end:
                return seg.state(frame)
        raise ValueError(f"object {self.track_id} is not alive at frame {frame}")

    @classmethod
    def constant_acceleration(
        cls, track_id: int, birth: int, death: int, cx: float, cy: float, w: float, h: float,
        vx: float = 0.0, vy: float = 0.0, ax: float = 0.0, ay: float = 0.0, depth: int | None = None,
    ) -> ScriptedObject:
        seg = Segment(birth, death, cx, cy, vx, vy, ax, ay, math.log(w), math.log(h))
        return cls(track_id, (seg,), track_id if depth is None else depth)


@dataclass(frozen=True)
class SceneConfig:
    n_objects: int = 20
    n_frames: int = 320
    frame_size: tuple[int, int] = (1920, 1080)
    seed: int = 0
    window: int = 16
    width_range: tuple[float, float] = (0.03, 0.07)
    height_range: tuple[float, float] = (0.025, 0.06)
    max_speed: float = 0.006
    max_accel: float = 2e-4
    max_size_rate: float = 0.002
    segment_frames: tuple[int, int] = (16, 48)
    spawn_prob: float = 0.3
    despawn_prob: float = 0.3
    min_lifetime: int = 32
    mode: str = "quadratic"
    occluders: tuple[Occluder, ...] = ()
    objects: tuple[ScriptedObject, ...] = ()
    tags: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.n_objects < 1 and not self.objects:
            raise ConfigError("n_objects must be >= 1")
        if self.n_frames < self.window:
            raise ConfigError(f"n_frames ({self.n_frames}) must be >= window ({self.window})")
        if self.window < 3:
            raise ConfigError("window must be >= 3")
        for name in ("width_range", "height_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ConfigError(f"{name} must satisfy 0 < low <= high")
            if hi >= 1.0:
                raise ConfigError(f"{name} allows objects larger than the frame")
        if self.segment_frames[0] < self.window or self.segment_frames[1] < self.segment_frames[0]:
            raise ConfigError("segment_frames must be >= window and ordered")
        for name in ("spawn_prob", "despawn_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        if self.min_lifetime < 1 or self.min_lifetime > self.n_frames:
            raise ConfigError("min_lifetime must be in [1, n_frames]")
        if self.mode not in ("quadratic", "cubic"):
            raise ConfigError(f"mode must be 'quadratic' or 'cubic', got {self.mode!r}")
        if any(v < 0 for v in (self.max_speed, self.max_accel, self.max_size_rate)):
            raise ConfigError("motion bounds must be non-negative")
        if self.frame_size[0] <= 0 or self.frame_size[1] <= 0:
            raise ConfigError("frame_size must be positive")


@dataclass(frozen=True)
class NoiseConfig:
    center_sigma: float = 0.0
    size_sigma: float = 0.0
    fn_rate: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.center_sigma < 0 or self.size_sigma < 0:
            raise ConfigError("noise sigmas must be non-negative")
        if not 0.0 <= self.fn_rate <= 1.0:
            raise ConfigError("fn_rate must be in [0, 1]")

    @property
    def is_zero(self) -> bool:
        return self.center_sigma == 0 and self.size_sigma == 0 and self.fn_rate == 0


@dataclass
class Scene:
    records: list[TrackRecord]
    objects: list[ScriptedObject]
    config: SceneConfig

    def track_table(self) -> list[dict]:
        return [
            {"track_id": o.track_id, "birth": o.birth, "death": o.death, "depth": o.depth}
            for o in self.objects
        ]

    def manifest(self) -> dict:
        cfg = asdict(self.config)
        cfg.pop("objects")
        return {
            "generator": "tubetrack.simulate",
            "seed": self.config.seed,
            "config": cfg,
            "tracks": self.track_table(),
            "n_records": len(self.records),
        }


# a box may only cover boxes at least this much smaller in area (nearer looks larger)
COVER_AREA_RATIO = 1.5
MAX_REDRAWS = 32
WALL_MARGIN = 0.2
WALL_GAIN = 10.0


def _segment_corners(seg: Segment, frames: np.ndarray) -> np.ndarray:
    dt = (frames - seg.start).astype(float)
    cx = seg.cx + seg.vx * dt + 0.5 * seg.ax * dt ** 2 + seg.jx * dt ** 3 / 6.0
    cy = seg.cy + seg.vy * dt + 0.5 * seg.ay * dt ** 2 + seg.jy * dt ** 3 / 6.0
    w = np.exp(seg.log_w + seg.rate_w * dt)
    h = np.exp(seg.log_h + seg.rate_h * dt)
    return np.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], axis=-1)


def _conflicts(corners: np.ndarray, farther: np.ndarray) -> int:
    """Frames where a candidate box leaves the frame or breaks the cover rule.

    ``corners`` is (T, 4); ``farther`` is (T, M, 4) for already placed objects
    of lesser depth, NaN where absent.
    """
    outside = (corners[:, :2] < 0).any(axis=1) | (corners[:, 2:] > 1).any(axis=1)
    c = corners[:, None, :]
    ix = np.minimum(c[..., 2], farther[..., 2]) - np.maximum(c[..., 0], farther[..., 0])
    iy = np.minimum(c[..., 3], farther[..., 3]) - np.maximum(c[..., 1], farther[..., 1])
    with np.errstate(invalid="ignore"):
        overlap = (ix > 0) & (iy > 0)
        area = (c[..., 2] - c[..., 0]) * (c[..., 3] - c[..., 1])
        other = (farther[..., 2] - farther[..., 0]) * (farther[..., 3] - farther[..., 1])
        bad = overlap & (area < COVER_AREA_RATIO * other)
    return int((outside | bad.any(axis=1)).sum())


def _random_objects(cfg: SceneConfig, rng: np.random.Generator) -> list[ScriptedObject]:
    """Random vehicles obeying a perspective rule.

    Initial sizes grow with depth, and a segment is redrawn until its box
    stays in the frame and only covers boxes ``COVER_AREA_RATIO`` times
    smaller (the best of ``MAX_REDRAWS`` draws is kept otherwise).
    """
    lifetimes = []
    for _ in range(cfg.n_objects):
        birth = 0
        if rng.random() < cfg.spawn_prob:
            birth = int(rng.integers(0, cfg.n_frames - cfg.min_lifetime + 1))
        death = cfg.n_frames
        if rng.random() < cfg.despawn_prob:
            death = int(rng.integers(birth + cfg.min_lifetime, cfg.n_frames + 1))
        lifetimes.append((birth, death))

    # depth follows spawn order: later spawns sit nearer the camera
    order = sorted(range(cfg.n_objects), key=lambda k: (lifetimes[k][0], k))
    sizes = np.column_stack([
        rng.uniform(*cfg.width_range, cfg.n_objects), rng.uniform(*cfg.height_range, cfg.n_objects)
    ])
    sizes = sizes[np.argsort(sizes[:, 0] * sizes[:, 1], kind="stable")]

    placed = np.full((cfg.n_frames, cfg.n_objects, 4), np.nan)
    objects = {}
    for rank, k in enumerate(order):
        birth, death = lifetimes[k]
        log_w, log_h = (math.log(float(x)) for x in sizes[rank])
        pos = vel = None
        segments = []
        start = birth
        while start < death:
            length = int(rng.integers(cfg.segment_frames[0], cfg.segment_frames[1] + 1))
            end = min(start + length, death)
            if death - end < cfg.segment_frames[0]:
                end = death
            frames = np.arange(start, end)
            best = None
            for _ in range(MAX_REDRAWS):
                cand = _draw_segment(cfg, rng, start, end, pos, vel, log_w, log_h)
                corners = _segment_corners(cand, frames)
                n_bad = _conflicts(corners, placed[start:end, :rank])
                if best is None or n_bad < best[0]:
                    best = (n_bad, cand, corners)
                if n_bad == 0:
                    break
            _, seg, corners = best
            segments.append(seg)
            placed[start:end, rank] = corners
            dur = end - start
            jerk = np.array([seg.jx, seg.jy])
            acc = np.array([seg.ax, seg.ay])
            vel0 = np.array([seg.vx, seg.vy])
            pos = np.array([seg.cx, seg.cy]) + vel0 * dur + 0.5 * acc * dur ** 2 + jerk * dur ** 3 / 6.0
            vel = vel0 + acc * dur + 0.5 * jerk * dur ** 2
            log_w = seg.log_w + seg.rate_w * dur
            log_h = seg.log_h + seg.rate_h * dur
            start = end
        objects[k] = ScriptedObject(k, tuple(segments), rank)
    return [objects[k] for k in range(cfg.n_objects)]


def _draw_segment(cfg, rng, start, end, pos, vel, log_w, log_h) -> Segment:
    """One random quadratic piece; a fresh start point and velocity when ``pos`` is None."""
    if pos is None:
        pos = rng.uniform([0.15, 0.15], [0.85, 0.85])
        angle = rng.uniform(0, 2 * math.pi)
        vel = rng.uniform(0.2, 1.0) * cfg.max_speed * np.array([math.cos(angle), math.sin(angle)])
    dur = end - start
    # push back only near the borders so density stays even inside the frame
    off = pos - 0.5
    wall = np.sign(off) * np.maximum(0.0, np.abs(off) - (0.5 - WALL_MARGIN))
    steer = -wall * WALL_GAIN * cfg.max_accel - 0.02 * vel
    acc = np.clip(steer + rng.normal(0.0, 0.5 * cfg.max_accel, 2), -cfg.max_accel, cfg.max_accel)
    end_vel = vel + acc * dur
    speed = float(np.linalg.norm(end_vel))
    if speed > cfg.max_speed:
        acc = (end_vel * cfg.max_speed / speed - vel) / dur
    jerk = np.zeros(2)
    if cfg.mode == "cubic":
        jerk = rng.normal(0.0, cfg.max_accel / cfg.segment_frames[0], 2)
    rate_w, rate_h = rng.uniform(-cfg.max_size_rate, cfg.max_size_rate, 2)
    # keep sizes inside the configured range
    if not cfg.width_range[0] <= math.exp(log_w + rate_w * dur) <= cfg.width_range[1]:
        rate_w = -rate_w if cfg.width_range[0] <= math.exp(log_w - rate_w * dur) <= cfg.width_range[1] else 0.0
    if not cfg.height_range[0] <= math.exp(log_h + rate_h * dur) <= cfg.height_range[1]:
        rate_h = -rate_h if cfg.height_range[0] <= math.exp(log_h - rate_h * dur) <= cfg.height_range[1] else 0.0
    return Segment(
        start, end, float(pos[0]), float(pos[1]), float(vel[0]), float(vel[1]),
        float(acc[0]), float(acc[1]), float(log_w), float(log_h), float(rate_w), float(rate_h),
        float(jerk[0]), float(jerk[1]),
    )


def covered_fraction(box: Sequence[float], covers: Sequence[Sequence[float]]) -> float:
    """Fraction of ``box`` (corners) covered by the union of ``covers`` (corners)."""
    l, t, r, b = box
    area = (r - l) * (b - t)
    clipped = []
    for cl, ct, cr, cb in covers:
        il, it, ir, ib = max(l, cl), max(t, ct), min(r, cr), min(b, cb)
        if ir > il and ib > it:
            clipped.append((il, it, ir, ib))
    if not clipped:
        return 0.0
    if len(clipped) == 1:
        il, it, ir, ib = clipped[0]
        return min(1.0, (ir - il) * (ib - it) / area)
    rects = np.array(clipped)
    xs = np.unique(np.concatenate([rects[:, 0], rects[:, 2]]))
    ys = np.unique(np.concatenate([rects[:, 1], rects[:, 3]]))
    mx = (xs[:-1] + xs[1:]) / 2
    my = (ys[:-1] + ys[1:]) / 2
    inside = (
        (rects[:, None, None, 0] <= mx[None, None, :])
        & (mx[None, None, :] < rects[:, None, None, 2])
        & (rects[:, None, None, 1] <= my[None, :, None])
        & (my[None, :, None] < rects[:, None, None, 3])
    ).any(axis=0)
    cell = np.diff(ys)[:, None] * np.diff(xs)[None, :]
    return min(1.0, float((cell * inside).sum()) / area)


def simulate(cfg: SceneConfig) -> Scene:
    """Generate a scene; identical configs give identical record streams."""
    cfg.validate()
    rng = np.random.default_rng(np.random.PCG64(cfg.seed))
    objects = list(cfg.objects) if cfg.objects else _random_objects(cfg, rng)
    records = []
    for frame in range(cfg.n_frames):
        live = [o for o in objects if o.birth <= frame < o.death]
        corners = {}
        for o in live:
            cx, cy, w, h = o.box(frame)
            corners[o.track_id] = (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
        occ = [(oc.left, oc.top, oc.right, oc.bottom) for oc in cfg.occluders if oc.active(frame)]
        for o in live:
            covers = [corners[p.track_id] for p in live if p.depth > o.depth] + occ
            vis = 1.0 - covered_fraction(corners[o.track_id], covers)
            records.append(TrackRecord(frame, o.track_id, *corners[o.track_id], min(1.0, max(0.0, vis))))
    return Scene(sort_records(records), objects, cfg)


def apply_noise(records: Sequence[TrackRecord], noise: NoiseConfig) -> list[TrackRecord]:
    """Perturb boxes and drop detections (dropped ones get visibility 0)."""
    noise.validate()
    if noise.is_zero:
        return list(records)
    rng = np.random.default_rng(np.random.PCG64(noise.seed))
    out = []
    for r in sort_records(records):
        d = rng.normal(0.0, 1.0, 4)
        drop = rng.random() < noise.fn_rate
        cx = (r.left + r.right) / 2 + noise.center_sigma * d[0]
        cy = (r.top + r.bottom) / 2 + noise.center_sigma * d[1]
        w = max(1e-4, r.right - r.left + noise.size_sigma * d[2])
        h = max(1e-4, r.bottom - r.top + noise.size_sigma * d[3])
        vis = 0.0 if drop else r.visibility
        out.append(r._replace(left=cx - w / 2, top=cy - h / 2, right=cx + w / 2, bottom=cy + h / 2, visibility=vis))
    return out


@dataclass
class WindowTracks:
    """Ground-truth tracks cut to one window.

    Masked frames (object absent or fully occluded) hold zero boxes and zero
    visibility, and ``present`` is False there.
    """

    start: int
    n_frames: int
    track_ids: list[int]
    tracks: list[BoxSeq]
    present: np.ndarray  # (n_tracks, N_F)
    classes: list[int]


def window_starts(n_total: int, n_frames: int, stride: int) -> list[int]:
    if n_total < n_frames:
        return []
    starts = list(range(0, n_total - n_frames + 1, stride))
    if starts[-1] + n_frames < n_total:
        starts.append(n_total - n_frames)
    return starts


def prepare_training_tracks(
    records: Sequence[TrackRecord],
    n_frames: int = 16,
    delta_v: float = 0.5,
    stride: int | None = None,
    n_total: int | None = None,
    starts: Sequence[int] | None = None,
) -> list[WindowTracks]:
    """Cut records into windows and drop tracks that are mostly fully occluded.

    A track is dropped from a window when the fraction of its frames that are
    fully occluded (or where it is absent) exceeds ``delta_v``. Explicit
    ``starts`` override the stride-based windowing.
    """
    if not 0.0 <= delta_v <= 1.0:
        raise ConfigError(f"delta_v must be in [0, 1], got {delta_v}")
    stride = stride or n_frames
    if n_total is None:
        n_total = max((r.frame for r in records), default=-1) + 1
    tracks = by_track(records)
    cube = {}
    for tid, recs in tracks.items():
        frames = np.array([r.frame for r in recs])
        cube[tid] = (frames, recs)
    out = []
    if starts is None:
        starts = window_starts(n_total, n_frames, stride)
    for start in starts:
        ids, seqs, present = [], [], []
        for tid, (frames, recs) in cube.items():
            lo, hi = np.searchsorted(frames, [start, start + n_frames])
            if lo == hi:
                continue
            boxes = np.zeros((n_frames, 4))
            vis = np.zeros(n_frames)
            for r in recs[lo:hi]:
                if r.visibility > 0:
                    k = r.frame - start
                    boxes[k] = ((r.left + r.right) / 2, (r.top + r.bottom) / 2, r.right - r.left, r.bottom - r.top)
                    vis[k] = r.visibility
            alive = vis > 0
            if (n_frames - alive.sum()) / n_frames > delta_v:
                continue
            ids.append(tid)
            seqs.append(BoxSeq(boxes, vis))
            present.append(alive)
        out.append(
            WindowTracks(start, n_frames, ids, seqs, np.array(present, dtype=bool).reshape(-1, n_frames), [1] * len(ids))
        )
    return out


@dataclass(frozen=True)
class OracleConfig:
    n_frames: int = 16
    stride: int = 8
    delta_v: float = 0.5
    delta_o: float = 0.5
    vis_threshold: float = DEFAULT_VIS_THRESHOLD
    n_classes: int = 2
    margin: float = ORACLE_MARGIN

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.n_frames < 3:
            raise ConfigError(f"n_frames must be >= 3, got {self.n_frames}")
        if not 1 <= self.stride <= self.n_frames:
            raise ConfigError(f"stride must be in [1, n_frames], got {self.stride}")
        for name in ("delta_v", "delta_o", "vis_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.n_classes < 2:
            raise ConfigError(f"n_classes must be >= 2, got {self.n_classes}")
        if not self.margin > 0:
            raise ConfigError(f"margin must be positive, got {self.margin}")


def oracle_window(
    wt: WindowTracks, anchors: AnchorSet, cfg: OracleConfig, basis: TimeBasis
) -> PredictionWindow:
    n_t, n_f, m = len(anchors), wt.n_frames, cfg.margin
    motion = np.zeros((n_t, 4, 3))
    cls = np.full((n_t, cfg.n_classes), -m)
    cls[:, 0] = m
    vis = np.zeros((n_f, n_t, 2))
    vis[..., 0] = m
    vis[..., 1] = -m

    usable = [j for j, tr in enumerate(wt.tracks) if tr.visible(cfg.vis_threshold).any()]
    if not usable:
        return PredictionWindow(motion, cls, vis)
    tracks = [wt.tracks[j] for j in usable]
    res = match(anchors, tracks, cfg.delta_o, [wt.track_ids[j] for j in usable], cfg.vis_threshold)
    pos = np.flatnonzero(res.positive)
    owner = res.best_track[pos]
    boxes = np.stack([tracks[j].boxes for j in owner])
    masks = np.stack([tracks[j].visible(cfg.vis_threshold) for j in owner])
    enc = np.full(boxes.shape, np.nan)
    enc[masks] = encode_array(np.repeat(anchors.boxes[pos][:, None, :], n_f, axis=1)[masks], boxes[masks])
    fitted = fit_batch(basis.taus, enc, masks)
    for i, j, ok, p in zip(pos, owner, fitted.ok, fitted.params):
        if not ok:
            continue
        motion[i] = p
        c = wt.classes[usable[j]]
        cls[i] = -m
        cls[i, c] = m
        seen = tracks[j].visible(cfg.vis_threshold)
        vis[:, i, 0] = np.where(seen, -m, m)
        vis[:, i, 1] = np.where(seen, m, -m)
    return PredictionWindow(motion, cls, vis)


def oracle_predict(
    records: Sequence[TrackRecord],
    anchors: AnchorSet,
    cfg: OracleConfig | None = None,
    noise: NoiseConfig | None = None,
    n_total: int | None = None,
    basis: TimeBasis | None = None,
) -> list[tuple[int, PredictionWindow]]:
    """Network stand-in: fit motion to (optionally noisy) ground truth per window."""
    cfg = cfg or OracleConfig()
    basis = basis or TimeBasis(cfg.n_frames)
    if anchors.n_frames != cfg.n_frames or basis.n_frames != cfg.n_frames:
        raise ConfigError("anchors, time basis and oracle disagree on n_frames")
    noisy = apply_noise(records, noise or NoiseConfig())
    windows = prepare_training_tracks(noisy, cfg.n_frames, cfg.delta_v, cfg.stride, n_total)
    return [(wt.start, oracle_window(wt, anchors, cfg, basis)) for wt in windows]
