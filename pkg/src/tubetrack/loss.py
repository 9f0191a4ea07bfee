"""Training-loss evaluation for tube predictions.

Nothing here computes gradients. The functions score a
:class:`PredictionWindow` against encoded ground truth so that predictors can
be compared and so any future trainer has a reference to match.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .anchors import AnchorSet, MatchResult, encode_array
from .errors import ConfigError, ContractError
from .geometry import DEFAULT_VIS_THRESHOLD, BoxSeq
from .motion import TimeBasis, eval_encoded_array


@dataclass(frozen=True)
class PredictionWindow:
    """Raw network-style outputs for one window.

    motion: ``(N_T, 4, 3)``; class_scores: ``(N_T, N_C)`` pre-softmax with
    class 0 as background; vis_scores: ``(N_F, N_T, 2)`` pre-softmax with
    index 1 meaning visible.
    """

    motion: np.ndarray
    class_scores: np.ndarray
    vis_scores: np.ndarray

    def __post_init__(self):
        motion = np.asarray(self.motion, dtype=float)
        cls = np.asarray(self.class_scores, dtype=float)
        vis = np.asarray(self.vis_scores, dtype=float)
        n_t = len(motion)
        if motion.shape != (n_t, 4, 3):
            raise ValueError(f"motion must be (N_T, 4, 3), got {motion.shape}")
        if cls.ndim != 2 or cls.shape[0] != n_t or cls.shape[1] < 2:
            raise ValueError(f"class_scores must be (N_T, N_C>=2), got {cls.shape}")
        if vis.ndim != 3 or vis.shape[1:] != (n_t, 2):
            raise ValueError(f"vis_scores must be (N_F, N_T, 2), got {vis.shape}")
        for name, arr in (("motion", motion), ("class_scores", cls), ("vis_scores", vis)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        object.__setattr__(self, "motion", motion)
        object.__setattr__(self, "class_scores", cls)
        object.__setattr__(self, "vis_scores", vis)

    @property
    def n_tubes(self) -> int:
        return len(self.motion)

    @property
    def n_classes(self) -> int:
        return self.class_scores.shape[1]

    @property
    def n_frames(self) -> int:
        return self.vis_scores.shape[0]


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ConfigError(f"alpha and beta must be positive, got alpha={self.alpha}, beta={self.beta}")


@dataclass(frozen=True)
class LossReport:
    total: float
    motion: float
    classification: float
    visibility: float
    n_pos: int
    empty: bool = False


@dataclass(frozen=True)
class EncodedTargets:
    """Ground-truth encodings for each anchor: ``values (N_T, N_F, 4)``, ``mask (N_T, N_F)``.

    Only positive anchors carry unmasked entries.
    """

    values: np.ndarray
    mask: np.ndarray


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    return np.exp(log_softmax(x, axis))


def smooth_l1(x):
    ax = np.abs(x)
    out = np.where(ax < 1.0, 0.5 * ax * ax, ax - 0.5)
    return float(out) if np.ndim(out) == 0 else out


def encode_targets(
    anchors: AnchorSet | np.ndarray,
    tracks: Sequence[BoxSeq],
    match: MatchResult,
    vis_threshold: float = DEFAULT_VIS_THRESHOLD,
) -> EncodedTargets:
    boxes = anchors.boxes if isinstance(anchors, AnchorSet) else np.asarray(anchors, dtype=float)
    n_f = len(tracks[0]) if tracks else 0
    values = np.full((len(boxes), n_f, 4), np.nan)
    mask = np.zeros((len(boxes), n_f), dtype=bool)
    for i in np.flatnonzero(match.positive):
        tr = tracks[int(match.best_track[i])]
        m = tr.visible(vis_threshold)
        values[i, m] = encode_array(boxes[i], tr.boxes[m])
        mask[i] = m
    return EncodedTargets(values, mask)


def motion_loss(
    pred: PredictionWindow,
    gt: EncodedTargets,
    match: MatchResult,
    basis: TimeBasis | None = None,
    kind: str = "smooth_l1",
) -> float:
    """Sum of per-coordinate Smooth-L1 (or plain L1) errors over positive anchors."""
    if kind not in ("smooth_l1", "l1"):
        raise ValueError(f"unknown motion loss kind {kind!r}")
    basis = basis or TimeBasis(pred.n_frames)
    pos = np.flatnonzero(match.positive)
    if len(pos) == 0:
        return 0.0
    values, mask = gt.values[pos], gt.mask[pos]
    if values.shape[1] != basis.n_frames:
        raise ValueError("ground truth and time basis disagree on the window length")
    lacking = ~mask.any(axis=1)
    if lacking.any():
        raise ContractError(f"positive anchor {int(pos[lacking][0])} has no ground-truth encoding")
    est = eval_encoded_array(pred.motion[pos], basis.taus)
    diff = np.where(mask[..., None], values - est, 0.0)
    per = np.abs(diff) if kind == "l1" else smooth_l1(diff)
    return float(per.sum())


def _check_classes(pred: PredictionWindow, match: MatchResult, gt_classes) -> np.ndarray:
    gt_classes = np.asarray(gt_classes, dtype=np.int64)
    if np.any(gt_classes >= pred.n_classes) or np.any(gt_classes < 1):
        raise ValueError(
            f"ground-truth class ids must lie in [1, {pred.n_classes - 1}], got {gt_classes.tolist()}"
        )
    if len(match.positive) != pred.n_tubes:
        raise ValueError("match result and predictions disagree on the number of anchors")
    return gt_classes


def select_hard_negatives(neg_losses: np.ndarray, n_pos: int, neg_pos_ratio: float) -> np.ndarray:
    """Positions (into ``neg_losses``) of the highest-loss negatives, ties to lower index."""
    n_sel = min(int(math.floor(neg_pos_ratio * n_pos)), len(neg_losses))
    if n_sel <= 0:
        return np.zeros(0, dtype=np.int64)
    order = np.argsort(-neg_losses, kind="stable")
    return order[:n_sel]


def classification_loss(
    pred: PredictionWindow,
    match: MatchResult,
    gt_classes: Sequence[int],
    neg_pos_ratio: float = 3.0,
) -> float:
    """Cross-entropy over positives plus mined negatives, summed over the window.

    Class scores are per tube, so the per-frame sum is the per-tube sum times
    ``N_F``.
    """
    if neg_pos_ratio < 0:
        raise ValueError("neg_pos_ratio must be non-negative")
    gt_classes = _check_classes(pred, match, gt_classes)
    logp = log_softmax(pred.class_scores)
    pos = np.flatnonzero(match.positive)
    neg = np.flatnonzero(~match.positive)
    pos_loss = -logp[pos, gt_classes[match.best_track[pos]]].sum() if len(pos) else 0.0
    neg_losses = -logp[neg, 0]
    chosen = select_hard_negatives(neg_losses, len(pos), neg_pos_ratio)
    neg_loss = neg_losses[chosen].sum() if len(chosen) else 0.0
    return float(pred.n_frames * (pos_loss + neg_loss))


def visibility_labels(
    match: MatchResult, gt_vis: Sequence, n_frames: int, vis_threshold: float = DEFAULT_VIS_THRESHOLD
) -> np.ndarray:
    """``(N_T, N_F)`` 0/1 labels for positive anchors, -1 elsewhere."""
    labels = np.full((len(match.positive), n_frames), -1, dtype=np.int64)
    for i in np.flatnonzero(match.positive):
        v = np.asarray(gt_vis[int(match.best_track[i])], dtype=float)
        if len(v) != n_frames:
            raise ValueError(f"visibility sequence has {len(v)} frames, expected {n_frames}")
        labels[i] = (v >= vis_threshold).astype(np.int64)
    return labels


def visibility_loss(
    pred: PredictionWindow,
    match: MatchResult,
    gt_vis: Sequence,
    vis_threshold: float = DEFAULT_VIS_THRESHOLD,
) -> float:
    if len(match.positive) != pred.n_tubes:
        raise ValueError("match result and predictions disagree on the number of anchors")
    labels = visibility_labels(match, gt_vis, pred.n_frames, vis_threshold)
    pos = np.flatnonzero(match.positive)
    if len(pos) == 0:
        return 0.0
    logp = log_softmax(pred.vis_scores[:, pos, :])  # (N_F, P, 2)
    lab = labels[pos].T  # (N_F, P)
    picked = np.take_along_axis(logp, lab[..., None], axis=-1)[..., 0]
    return float(-picked.sum())


def total_loss(
    motion: float,
    classification: float,
    visibility: float,
    weights: LossWeights | None = None,
    n_pos: int = 0,
) -> LossReport:
    weights = weights or LossWeights()
    for name, v in (("motion", motion), ("classification", classification), ("visibility", visibility)):
        if not v >= 0:
            raise ContractError(f"{name} loss must be non-negative, got {v}")
    if n_pos < 0:
        raise ValueError("n_pos must be non-negative")
    if n_pos == 0:
        return LossReport(0.0, motion, classification, visibility, 0, empty=True)
    total = (weights.alpha * motion + weights.beta * classification + visibility) / n_pos
    return LossReport(total, motion, classification, visibility, n_pos)


def window_loss(
    pred: PredictionWindow,
    anchors: AnchorSet,
    tracks: Sequence[BoxSeq],
    track_classes: Sequence[int],
    match: MatchResult,
    basis: TimeBasis | None = None,
    weights: LossWeights | None = None,
    neg_pos_ratio: float = 3.0,
    vis_threshold: float = DEFAULT_VIS_THRESHOLD,
    kind: str = "smooth_l1",
) -> LossReport:
    """All three losses and their weighted total for one window."""
    targets = encode_targets(anchors, tracks, match, vis_threshold)
    lm = motion_loss(pred, targets, match, basis, kind)
    lc = classification_loss(pred, match, track_classes, neg_pos_ratio)
    lv = visibility_loss(pred, match, [t.visibility for t in tracks], vis_threshold)
    return total_loss(lm, lc, lv, weights, match.n_pos)
