"""Per-frame box records shared by ground truth, tracker output and metrics."""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable, NamedTuple

from .geometry import BBox, from_corners, to_corners


class TrackRecord(NamedTuple):
    """One object box in one frame, stored as corners in normalized units."""

    frame: int
    track_id: int
    left: float
    top: float
    right: float
    bottom: float
    visibility: float = 1.0
    confidence: float = 1.0

    @property
    def box(self) -> BBox:
        return from_corners(self.left, self.top, self.right, self.bottom)

    @property
    def corners(self) -> tuple[float, float, float, float]:
        return (self.left, self.top, self.right, self.bottom)

    @classmethod
    def from_box(cls, frame: int, track_id: int, box: BBox, visibility: float = 1.0, confidence: float = 1.0):
        return cls(int(frame), int(track_id), *to_corners(box), float(visibility), float(confidence))


GroundTruthRecord = TrackRecord


def by_frame(records: Iterable[TrackRecord]) -> dict[int, list[TrackRecord]]:
    out: dict[int, list[TrackRecord]] = defaultdict(list)
    for r in records:
        out[r.frame].append(r)
    return dict(sorted(out.items()))


def by_track(records: Iterable[TrackRecord]) -> dict[int, list[TrackRecord]]:
    out: dict[int, list[TrackRecord]] = defaultdict(list)
    for r in records:
        out[r.track_id].append(r)
    return {k: sorted(v, key=lambda r: r.frame) for k, v in sorted(out.items())}


def sort_records(records: Iterable[TrackRecord]) -> list[TrackRecord]:
    return sorted(records, key=lambda r: (r.frame, r.track_id))
