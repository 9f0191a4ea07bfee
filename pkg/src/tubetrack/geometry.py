"""Box and tracklet geometry.

Boxes are center-parameterized ``(cx, cy, w, h)`` in normalized frame
coordinates (frame width and height are 1.0). Scalar helpers operate on
:class:`BBox`; the ``*_array`` helpers take ``(..., 4)`` float arrays in the
same layout and are what the hot paths use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

DEFAULT_VIS_THRESHOLD = 0.5


class BBox(NamedTuple):
    cx: float
    cy: float
    w: float
    h: float


def _check_box(b: Sequence[float], name: str = "box") -> None:
    if not all(math.isfinite(v) for v in b):
        raise ValueError(f"{name} has non-finite coordinates: {tuple(b)}")
    if b[2] <= 0 or b[3] <= 0:
        raise ValueError(f"{name} must have positive width and height: {tuple(b)}")


def to_corners(b: BBox) -> tuple[float, float, float, float]:
    """Return ``(left, top, right, bottom)``."""
    cx, cy, w, h = b
    return cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0


def from_corners(left: float, top: float, right: float, bottom: float) -> BBox:
    if not all(math.isfinite(v) for v in (left, top, right, bottom)):
        raise ValueError("corner coordinates must be finite")
    if right <= left or bottom <= top:
        raise ValueError(
            f"degenerate corners: left={left}, top={top}, right={right}, bottom={bottom}"
        )
    w = right - left
    h = bottom - top
    return BBox(left + w / 2.0, top + h / 2.0, w, h)


def iou(a: BBox, b: BBox) -> float:
    _check_box(a, "a")
    _check_box(b, "b")
    if a == b:
        return 1.0
    al, at, ar, ab = to_corners(a)
    bl, bt, br, bb = to_corners(b)
    iw = min(ar, br) - max(al, bl)
    ih = min(ab, bb) - max(at, bt)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    return min(1.0, inter / union)


def corners_array(boxes: np.ndarray) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=float)
    half = boxes[..., 2:] / 2.0
    return np.concatenate([boxes[..., :2] - half, boxes[..., :2] + half], axis=-1)


def iou_corners_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Broadcasting IOU of corner-form boxes ``(..., 4)``.

    Degenerate or NaN boxes give 0.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    iw = np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0])
    ih = np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    area_a = (a[..., 2] - a[..., 0]) * (a[..., 3] - a[..., 1])
    area_b = (b[..., 2] - b[..., 0]) * (b[..., 3] - b[..., 1])
    union = area_a + area_b - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
    out = np.nan_to_num(out, nan=0.0)
    return np.clip(out, 0.0, 1.0)


def iou_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Broadcasting IOU of center-form boxes ``(..., 4)``."""
    return iou_corners_array(corners_array(a), corners_array(b))


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IOU between ``(n, 4)`` and ``(m, 4)`` center-form boxes."""
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    return iou_array(a[:, None, :], b[None, :, :])


@dataclass(frozen=True)
class BoxSeq:
    """Boxes over a window plus per-frame visibility.

    ``boxes`` is ``(N_F, 4)`` in center form. Frames without a box hold
    zeros or NaN and should carry visibility 0.
    """

    boxes: np.ndarray
    visibility: np.ndarray

    def __post_init__(self):
        boxes = np.asarray(self.boxes, dtype=float).reshape(-1, 4)
        vis = np.asarray(self.visibility, dtype=float).reshape(-1)
        if len(boxes) != len(vis):
            raise ValueError(
                f"boxes and visibility differ in length ({len(boxes)} != {len(vis)})"
            )
        if np.any((vis < 0) | (vis > 1)) or np.any(np.isnan(vis)):
            raise ValueError("visibility values must lie in [0, 1]")
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "visibility", vis)

    def __len__(self) -> int:
        return len(self.boxes)

    def __getitem__(self, t: int) -> BBox:
        return BBox(*map(float, self.boxes[t]))

    @classmethod
    def from_boxes(cls, boxes: Sequence[BBox], visibility: Sequence[float] | None = None) -> BoxSeq:
        if visibility is None:
            visibility = [1.0] * len(boxes)
        return cls(np.array([tuple(b) for b in boxes], dtype=float).reshape(-1, 4), np.array(visibility))

    def visible(self, vis_threshold: float = DEFAULT_VIS_THRESHOLD) -> np.ndarray:
        valid = np.all(np.isfinite(self.boxes), axis=1) & (self.boxes[:, 2] > 0) & (self.boxes[:, 3] > 0)
        return valid & (self.visibility >= vis_threshold)


def tracklet_iou(t1: BoxSeq, t2: BoxSeq, vis_threshold: float = DEFAULT_VIS_THRESHOLD) -> float:
    """Largest per-frame IOU over frames where both boxes are visible.

    Returns 0 when no frame has both boxes visible.
    """
    if len(t1) != len(t2):
        raise ValueError("tracklets must be aligned to the same frames")
    if not 0.0 <= vis_threshold <= 1.0:
        raise ValueError(f"vis_threshold must be in [0, 1], got {vis_threshold}")
    both = t1.visible(vis_threshold) & t2.visible(vis_threshold)
    if not both.any():
        return 0.0
    return float(iou_array(t1.boxes[both], t2.boxes[both]).max())


def tracklet_iou_batch(
    boxes: np.ndarray,
    vis: np.ndarray,
    other_boxes: np.ndarray,
    other_vis: np.ndarray,
    vis_threshold: float = DEFAULT_VIS_THRESHOLD,
) -> np.ndarray:
    """Tracklet IOU of one aligned sequence against many.

    ``boxes`` is ``(N, 4)``, ``other_boxes`` is ``(k, N, 4)``; returns ``(k,)``.
    """
    ious = iou_array(boxes[None], other_boxes)
    both = (vis[None] >= vis_threshold) & (other_vis >= vis_threshold)
    ious = np.where(both, ious, 0.0)
    return ious.max(axis=-1) if ious.shape[-1] else np.zeros(len(other_boxes))


def pairwise_tracklet_iou(
    boxes: np.ndarray, vis: np.ndarray, vis_threshold: float = DEFAULT_VIS_THRESHOLD
) -> np.ndarray:
    """Symmetric ``(k, k)`` tracklet IOU matrix for ``(k, N, 4)`` tubes."""
    ious = iou_array(boxes[:, None], boxes[None, :])
    ok = vis >= vis_threshold
    both = ok[:, None] & ok[None, :]
    ious = np.where(both, ious, 0.0)
    if ious.shape[-1] == 0:
        return np.zeros((len(boxes), len(boxes)))
    return ious.max(axis=-1)
