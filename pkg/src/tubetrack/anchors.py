"""Anchor tubes: grid generation, track matching and box encoding.

An anchor tube is one constant box repeated over every frame of a window.
Tubes are laid out SSD-style over six square grids; each grid cell carries a
fixed list of (scale, aspect ratio) shapes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, NumericRangeError
from .geometry import DEFAULT_VIS_THRESHOLD, BBox, BoxSeq, _check_box, iou_matrix

# exp() of anything beyond this is treated as a corrupt prediction
MAX_LOG_SCALE = 50.0

DEFAULT_GRID_SIZES = (42, 21, 11, 6, 3, 2)
DEFAULT_TUBES_PER_CELL = (10, 8, 8, 5, 4, 4)


def _default_scales() -> tuple[float, ...]:
    return tuple(0.2 + 0.7 * k / 5 for k in range(6))


def _default_aspect_ratios() -> tuple[tuple[float, ...], ...]:
    wide = (1.0, 2.0, 0.5, 3.0, 1 / 3, 4.0, 0.25, 5.0, 0.2)
    return (wide, wide[:7], wide[:7], wide[:4], wide[:3], wide[:3])


@dataclass(frozen=True)
class AnchorConfig:
    n_frames: int = 16
    grid_sizes: tuple[int, ...] = DEFAULT_GRID_SIZES
    tubes_per_cell: tuple[int, ...] = DEFAULT_TUBES_PER_CELL
    scales: tuple[float, ...] = field(default_factory=_default_scales)
    aspect_ratios: tuple[tuple[float, ...], ...] = field(default_factory=_default_aspect_ratios)

    def __post_init__(self):
        object.__setattr__(self, "grid_sizes", tuple(int(g) for g in self.grid_sizes))
        object.__setattr__(self, "tubes_per_cell", tuple(int(k) for k in self.tubes_per_cell))
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        object.__setattr__(
            self, "aspect_ratios", tuple(tuple(float(r) for r in rs) for rs in self.aspect_ratios)
        )
        self.validate()

    def validate(self) -> None:
        if self.n_frames < 3:
            raise ConfigError(f"n_frames must be >= 3, got {self.n_frames}")
        n = len(self.grid_sizes)
        if n == 0:
            raise ConfigError("grid_sizes must not be empty")
        for name in ("tubes_per_cell", "scales", "aspect_ratios"):
            if len(getattr(self, name)) != n:
                raise ConfigError(f"{name} must have one entry per grid ({n})")
        if any(g <= 0 for g in self.grid_sizes):
            raise ConfigError("grid_sizes entries must be positive")
        if any(k <= 0 for k in self.tubes_per_cell):
            raise ConfigError("tubes_per_cell entries must be positive")
        if any(not 0.0 < s <= 1.0 for s in self.scales):
            raise ConfigError("scales must lie in (0, 1]")
        for k, ratios in enumerate(self.aspect_ratios):
            if any(r <= 0 for r in ratios):
                raise ConfigError(f"aspect_ratios[{k}] must be positive")
            available = len(self.shapes_available(k))
            if self.tubes_per_cell[k] > available:
                raise ConfigError(
                    f"tubes_per_cell[{k}]={self.tubes_per_cell[k]} exceeds the "
                    f"{available} shapes defined for that grid"
                )

    def shapes_available(self, k: int) -> list[tuple[float, float]]:
        """All (scale, aspect) shapes for grid ``k`` in preference order.

        The base scale with aspect 1 comes first, then an intermediate scale
        between this grid and the next, then the remaining aspect ratios.
        """
        s = self.scales[k]
        s_next = self.scales[k + 1] if k + 1 < len(self.scales) else 1.0
        ratios = self.aspect_ratios[k]
        if not ratios:
            return []
        shapes = [(s, ratios[0]), (math.sqrt(s * s_next), 1.0)]
        shapes.extend((s, r) for r in ratios[1:])
        return shapes

    def shapes(self, k: int) -> list[tuple[float, float]]:
        return self.shapes_available(k)[: self.tubes_per_cell[k]]

    @property
    def n_tubes(self) -> int:
        return sum(g * g * k for g, k in zip(self.grid_sizes, self.tubes_per_cell))


class AnchorTube(NamedTuple):
    box: BBox
    index: int


class AnchorSet(Sequence[AnchorTube]):
    """Ordered, immutable anchor tubes backed by an ``(N_T, 4)`` array."""

    def __init__(self, boxes: np.ndarray, n_frames: int):
        boxes = np.array(boxes, dtype=float).reshape(-1, 4)
        boxes.setflags(write=False)
        self.boxes = boxes
        self.n_frames = n_frames

    def __len__(self) -> int:
        return len(self.boxes)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        return AnchorTube(BBox(*map(float, self.boxes[i])), int(i))


def generate_anchor_tubes(cfg: AnchorConfig | None = None) -> AnchorSet:
    """Anchor tubes ordered grid-major, then row, column, shape."""
    cfg = cfg or AnchorConfig()
    parts = []
    for k, g in enumerate(cfg.grid_sizes):
        shapes = cfg.shapes(k)
        wh = np.array([(s * math.sqrt(r), s / math.sqrt(r)) for s, r in shapes])
        centers = (np.arange(g) + 0.5) / g
        cy, cx = np.meshgrid(centers, centers, indexing="ij")
        block = np.empty((g, g, len(shapes), 4))
        block[..., 0] = cx[..., None]
        block[..., 1] = cy[..., None]
        block[..., 2] = wh[:, 0]
        block[..., 3] = wh[:, 1]
        parts.append(block.reshape(-1, 4))
    return AnchorSet(np.concatenate(parts), cfg.n_frames)


@dataclass(frozen=True)
class MatchResult:
    """Per-anchor matching outcome.

    ``best_track`` holds the index into the track list passed to
    :func:`match`, or -1 when there is none.
    """

    best_track: np.ndarray
    overlap: np.ndarray
    positive: np.ndarray
    track_ids: tuple = ()

    @property
    def n_pos(self) -> int:
        return int(self.positive.sum())

    def best_track_id(self, i: int):
        j = int(self.best_track[i])
        if j < 0:
            return None
        return self.track_ids[j] if self.track_ids else j


def first_visible_boxes(tracks: Sequence[BoxSeq], vis_threshold: float = DEFAULT_VIS_THRESHOLD) -> np.ndarray:
    out = np.empty((len(tracks), 4))
    for j, tr in enumerate(tracks):
        vis = np.flatnonzero(tr.visible(vis_threshold))
        if len(vis) == 0:
            raise ValueError(f"track {j} has no visible box in the window")
        out[j] = tr.boxes[vis[0]]
    return out


def match(
    anchors: AnchorSet | np.ndarray,
    tracks: Sequence[BoxSeq],
    delta_o: float = 0.5,
    track_ids: Sequence | None = None,
    vis_threshold: float = DEFAULT_VIS_THRESHOLD,
) -> MatchResult:
    """Assign each anchor tube its best-overlapping track.

    Overlap is the IOU between the anchor box and the first visible box of a
    track. Anchors reaching ``delta_o`` are positive. Each track also claims
    its own best anchor (the best one not already claimed by an earlier
    track), so every track ends up with at least one positive anchor.
    """
    if not 0.0 < delta_o < 1.0:
        raise ValueError(f"delta_o must be in (0, 1), got {delta_o}")
    boxes = anchors.boxes if isinstance(anchors, AnchorSet) else np.asarray(anchors, dtype=float)
    n_t = len(boxes)
    ids = tuple(track_ids) if track_ids is not None else tuple(range(len(tracks)))
    if len(ids) != len(tracks):
        raise ValueError("track_ids must match tracks in length")
    if not tracks:
        return MatchResult(
            np.full(n_t, -1, dtype=np.int64), np.zeros(n_t), np.zeros(n_t, dtype=bool), ids
        )
    firsts = first_visible_boxes(tracks, vis_threshold)
    ov = iou_matrix(boxes, firsts)
    best = np.argmax(ov, axis=1)
    overlap = ov[np.arange(n_t), best]
    positive = overlap >= delta_o

    claimed = np.zeros(n_t, dtype=bool)
    for j in range(len(tracks)):
        col = np.where(claimed, -1.0, ov[:, j])
        i = int(np.argmax(col))
        claimed[i] = True
        best[i] = j
        overlap[i] = ov[i, j]
        positive[i] = True
    best = np.where(positive | (overlap > 0), best, -1).astype(np.int64)
    return MatchResult(best, overlap, positive, ids)


class EncodedBox(NamedTuple):
    g_cx: float
    g_cy: float
    g_w: float
    g_h: float


def encode(a: BBox, b: BBox) -> EncodedBox:
    _check_box(a, "anchor")
    _check_box(b, "box")
    return EncodedBox(
        (b.cx - a.cx) / a.w,
        (b.cy - a.cy) / a.h,
        math.log(b.w / a.w),
        math.log(b.h / a.h),
    )


def decode(a: BBox, g: EncodedBox) -> BBox:
    _check_box(a, "anchor")
    g_cx, g_cy, g_w, g_h = g
    if not all(math.isfinite(v) for v in g):
        raise ValueError(f"encoded box has non-finite values: {tuple(g)}")
    if abs(g_w) > MAX_LOG_SCALE or abs(g_h) > MAX_LOG_SCALE:
        raise NumericRangeError(f"log-scale offsets out of range: g_w={g_w}, g_h={g_h}")
    return BBox(a.cx + g_cx * a.w, a.cy + g_cy * a.h, a.w * math.exp(g_w), a.h * math.exp(g_h))


def encode_array(anchor: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Vectorised :func:`encode`; both args ``(..., 4)``, result in (cx, cy, w, h) order."""
    anchor = np.asarray(anchor, dtype=float)
    boxes = np.asarray(boxes, dtype=float)
    out = np.empty(np.broadcast_shapes(anchor.shape, boxes.shape))
    with np.errstate(divide="ignore", invalid="ignore"):
        out[..., 0] = (boxes[..., 0] - anchor[..., 0]) / anchor[..., 2]
        out[..., 1] = (boxes[..., 1] - anchor[..., 1]) / anchor[..., 3]
        out[..., 2] = np.log(boxes[..., 2] / anchor[..., 2])
        out[..., 3] = np.log(boxes[..., 3] / anchor[..., 3])
    return out


def decode_array(anchor: np.ndarray, enc: np.ndarray) -> np.ndarray:
    """Vectorised :func:`decode`; raises on log-scale overflow."""
    anchor = np.asarray(anchor, dtype=float)
    enc = np.asarray(enc, dtype=float)
    if np.any(np.abs(enc[..., 2:]) > MAX_LOG_SCALE):
        raise NumericRangeError("log-scale offsets out of range in encoded tube")
    out = np.empty(np.broadcast_shapes(anchor.shape, enc.shape))
    out[..., 0] = anchor[..., 0] + enc[..., 0] * anchor[..., 2]
    out[..., 1] = anchor[..., 1] + enc[..., 1] * anchor[..., 3]
    out[..., 2] = anchor[..., 2] * np.exp(enc[..., 2])
    out[..., 3] = anchor[..., 3] * np.exp(enc[..., 3])
    return out


@dataclass(frozen=True)
class EncodedTrack:
    """Per-frame encodings of a track against one anchor.

    ``values`` is ``(N_F, 4)`` in (g_cx, g_cy, g_w, g_h) order; rows where
    ``mask`` is False are masked out (NaN) and carry no encoding.
    """

    values: np.ndarray
    mask: np.ndarray

    def __getitem__(self, t: int) -> EncodedBox | None:
        if not self.mask[t]:
            return None
        return EncodedBox(*map(float, self.values[t]))

    def __len__(self) -> int:
        return len(self.values)


def encode_track(
    anchor: AnchorTube | BBox, track: BoxSeq, vis_threshold: float = DEFAULT_VIS_THRESHOLD
) -> EncodedTrack:
    box = anchor.box if isinstance(anchor, AnchorTube) else anchor
    _check_box(box, "anchor")
    mask = track.visible(vis_threshold)
    values = np.full((len(track), 4), np.nan)
    if mask.any():
        values[mask] = encode_array(np.asarray(box, dtype=float), track.boxes[mask])
    return EncodedTrack(values, mask)
