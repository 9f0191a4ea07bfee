"""Slow, obviously-correct reference implementations.

These are kept independent of the production code paths (plain loops,
exhaustive search, inclusion-exclusion) and are used by the self-test and
the test suite to cross-check the fast versions.
"""

from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np


def box_iou(a: Sequence[float], b: Sequence[float]) -> float:
    """IOU of two (cx, cy, w, h) boxes by explicit interval overlap."""
    ax0, ax1 = a[0] - a[2] / 2, a[0] + a[2] / 2
    ay0, ay1 = a[1] - a[3] / 2, a[1] + a[3] / 2
    bx0, bx1 = b[0] - b[2] / 2, b[0] + b[2] / 2
    by0, by1 = b[1] - b[3] / 2, b[1] + b[3] / 2
    ix = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    iy = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = ix * iy
    union = a[2] * a[3] + b[2] * b[3] - inter
    return inter / union if union > 0 else 0.0


def tracklet_iou(boxes1, vis1, boxes2, vis2, thr: float = 0.5) -> float:
    best = 0.0
    for b1, v1, b2, v2 in zip(boxes1, vis1, boxes2, vis2):
        if v1 >= thr and v2 >= thr:
            best = max(best, box_iou(b1, b2))
    return best


def encode(anchor, box) -> tuple[float, float, float, float]:
    return (
        (box[0] - anchor[0]) / anchor[2],
        (box[1] - anchor[1]) / anchor[3],
        math.log(box[2] / anchor[2]),
        math.log(box[3] / anchor[3]),
    )


def decode(anchor, g) -> tuple[float, float, float, float]:
    return (
        anchor[0] + g[0] * anchor[2],
        anchor[1] + g[1] * anchor[3],
        anchor[2] * math.exp(g[2]),
        anchor[3] * math.exp(g[3]),
    )


def polyfit_params(taus, encoded, mask, degree: int = 2) -> np.ndarray:
    """Per-coordinate ``np.polyfit``; returns (4, 3) rows (w, h, cx, cy), columns (quad, lin, const)."""
    taus = np.asarray(taus, dtype=float)
    encoded = np.asarray(encoded, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    out = np.zeros((4, 3))
    for row, col in enumerate((2, 3, 0, 1)):
        coef = np.polyfit(taus[mask], encoded[mask, col], degree)
        out[row, 3 - len(coef):] = coef
    return out


def assignment(cost) -> tuple[float, list[tuple[int, int]]]:
    """Exhaustive search: minimal cost over maximum matchings, lexicographically smallest pairs on ties."""
    cost = np.asarray(cost, dtype=float)
    m, n = cost.shape
    best = None
    if m <= n:
        for cols in itertools.permutations(range(n), m):
            pairs = list(enumerate(cols))
            total = sum(float(cost[r, c]) for r, c in pairs)
            if best is None or total < best[0] or (total == best[0] and pairs < best[1]):
                best = (total, pairs)
    else:
        for rows in itertools.permutations(range(m), n):
            pairs = sorted((r, c) for c, r in enumerate(rows))
            total = sum(float(cost[r, c]) for r, c in pairs)
            if best is None or total < best[0] or (total == best[0] and pairs < best[1]):
                best = (total, pairs)
    return best


def _log_softmax_entry(scores: Sequence[float], k: int) -> float:
    z = sum(math.exp(s) for s in scores)
    return scores[k] - math.log(z)


def classification_loss(scores, positive, best_track, classes, neg_pos_ratio: float, n_frames: int) -> float:
    """Direct summation of the per-frame class cross-entropy with hard negative mining."""
    scores = [list(map(float, row)) for row in np.asarray(scores)]
    pos = [i for i, p in enumerate(positive) if p]
    neg = [i for i, p in enumerate(positive) if not p]
    neg_losses = [(-_log_softmax_entry(scores[i], 0), i) for i in neg]
    # highest loss first, lower anchor index first among equals
    neg_losses.sort(key=lambda t: (-t[0], t[1]))
    n_sel = min(int(math.floor(neg_pos_ratio * len(pos))), len(neg))
    total = 0.0
    for _ in range(n_frames):
        for i in pos:
            total -= _log_softmax_entry(scores[i], int(classes[int(best_track[i])]))
        for loss, _ in neg_losses[:n_sel]:
            total += loss
    return total


def visibility_loss(vis_scores, positive, best_track, gt_vis, thr: float = 0.5) -> float:
    vis_scores = np.asarray(vis_scores, dtype=float)
    total = 0.0
    for t in range(vis_scores.shape[0]):
        for i, p in enumerate(positive):
            if not p:
                continue
            label = 1 if gt_vis[int(best_track[i])][t] >= thr else 0
            total -= _log_softmax_entry(list(vis_scores[t, i]), label)
    return total


def smooth_l1(x: float) -> float:
    return 0.5 * x * x if abs(x) < 1 else abs(x) - 0.5


def union_area(rects: Sequence[Sequence[float]]) -> float:
    """Area of a union of (l, t, r, b) rectangles by inclusion-exclusion."""
    total = 0.0
    for k in range(1, len(rects) + 1):
        for combo in itertools.combinations(rects, k):
            l = max(r[0] for r in combo)
            t = max(r[1] for r in combo)
            rr = min(r[2] for r in combo)
            b = min(r[3] for r in combo)
            if rr > l and b > t:
                total += (-1) ** (k + 1) * (rr - l) * (b - t)
    return total


def covered_fraction(box, covers) -> float:
    l, t, r, b = box
    clipped = []
    for c in covers:
        il, it, ir, ib = max(l, c[0]), max(t, c[1]), min(r, c[2]), min(b, c[3])
        if ir > il and ib > it:
            clipped.append((il, it, ir, ib))
    return union_area(clipped) / ((r - l) * (b - t))


def identity_true_positives(counts) -> int:
    """Best one-to-one gt/pred id matching by exhaustive search over a count matrix."""
    counts = np.asarray(counts)
    m, n = counts.shape
    best = 0
    if m <= n:
        for cols in itertools.permutations(range(n), m):
            best = max(best, int(sum(counts[r, c] for r, c in enumerate(cols))))
    else:
        for rows in itertools.permutations(range(m), n):
            best = max(best, int(sum(counts[r, c] for c, r in enumerate(rows))))
    return best


def tnms_violations(tubes, kept_indices, delta_nms: float, thr: float = 0.5) -> list[str]:
    """Check TNMS output against its definition; returns human-readable violations.

    ``tubes`` is a list of (boxes, vis, class_id, confidence); kept indices
    refer into it.
    """
    problems = []
    kept = set(kept_indices)
    for a, b in itertools.combinations(sorted(kept), 2):
        if tubes[a][2] == tubes[b][2]:
            v = tracklet_iou(tubes[a][0], tubes[a][1], tubes[b][0], tubes[b][1], thr)
            if v > delta_nms:
                problems.append(f"survivors {a} and {b} overlap {v:.4f}")
    for i in range(len(tubes)):
        if i in kept:
            continue
        ok = any(
            tubes[k][2] == tubes[i][2]
            and tubes[k][3] >= tubes[i][3]
            and tracklet_iou(tubes[i][0], tubes[i][1], tubes[k][0], tubes[k][1], thr) > delta_nms
            for k in kept
        )
        if not ok:
            problems.append(f"tube {i} was suppressed without a stronger overlapping survivor")
    return problems
