"""Randomized cross-checks of the fast code paths against :mod:`tubetrack.oracles`."""

from __future__ import annotations

import time
from typing import Callable, TextIO

import numpy as np

from . import oracles
from .anchors import MatchResult, decode_array, encode_array
from .assignment import hungarian
from .geometry import BoxSeq, tracklet_iou
from .loss import PredictionWindow, classification_loss, visibility_loss
from .metrics import identity_true_positives
from .motion import TimeBasis, eval_encoded_array, fit
from .simulator import covered_fraction
from .tracker import Tracklet, tnms


def random_boxes(rng: np.random.Generator, n: int) -> np.ndarray:
    return np.column_stack([
        rng.uniform(0.05, 0.95, n), rng.uniform(0.05, 0.95, n),
        rng.uniform(0.01, 0.5, n), rng.uniform(0.01, 0.5, n),
    ])


def random_tube(rng: np.random.Generator, n_frames: int, center=None) -> tuple[np.ndarray, np.ndarray]:
    c = rng.uniform(0.3, 0.7, 2) if center is None else center
    v = rng.normal(0, 0.01, 2)
    size = rng.uniform(0.05, 0.2, 2)
    t = np.arange(n_frames)[:, None]
    boxes = np.column_stack([c + v * t, np.repeat(size[None], n_frames, axis=0)])
    vis = np.where(rng.random(n_frames) < 0.2, rng.uniform(0, 0.5, n_frames), 1.0)
    return boxes, vis


def check_encoding(rng, n) -> list[str]:
    anchors = random_boxes(rng, n)
    boxes = random_boxes(rng, n)
    enc = encode_array(anchors, boxes)
    dec = decode_array(anchors, enc)
    bad = []
    for k in range(min(n, 200)):
        ref = oracles.encode(anchors[k], boxes[k])
        if not np.allclose(enc[k], ref, rtol=0, atol=1e-12):
            bad.append(f"encode mismatch at {k}")
    err = np.abs(dec - boxes).max()
    if err >= 1e-9:
        bad.append(f"round trip error {err:.3e}")
    return bad


def check_fit(rng, n) -> list[str]:
    basis = TimeBasis(16)
    bad = []
    for k in range(n):
        p = rng.normal(0, 0.5, (4, 3))
        enc = eval_encoded_array(p, basis.taus)
        mask = np.ones(16, dtype=bool)
        mask[rng.choice(16, int(rng.integers(0, 9)), replace=False)] = False
        got = fit(basis.taus, enc, mask).params
        ref = oracles.polyfit_params(basis.taus, enc, mask)
        if not (np.allclose(got, p, rtol=0, atol=1e-8) and np.allclose(got, ref, rtol=0, atol=1e-8)):
            bad.append(f"fit {k}: max error {np.abs(got - p).max():.3e}")
    return bad


def check_hungarian(rng, n) -> list[str]:
    bad = []
    for k in range(n):
        m, c = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        cost = rng.integers(0, 5, (m, c)).astype(float) if k % 2 else rng.random((m, c))
        pairs = hungarian(cost)
        total = sum(float(cost[r, cc]) for r, cc in pairs)
        ref_total, ref_pairs = oracles.assignment(cost)
        if total != ref_total and abs(total - ref_total) > 1e-12:
            bad.append(f"matrix {k}: cost {total} vs {ref_total}")
        elif k % 2 and pairs != ref_pairs:
            bad.append(f"matrix {k}: tie-break {pairs} vs {ref_pairs}")
    return bad


def check_losses(rng, n) -> list[str]:
    bad = []
    for k in range(n):
        n_t, n_c, n_f = int(rng.integers(1, 11)), int(rng.integers(2, 5)), int(rng.integers(1, 6))
        n_tracks = int(rng.integers(1, 4))
        positive = rng.random(n_t) < 0.4
        best = np.where(positive, rng.integers(0, n_tracks, n_t), -1)
        classes = rng.integers(1, n_c, n_tracks)
        gt_vis = rng.random((n_tracks, n_f))
        pred = PredictionWindow(
            rng.normal(size=(n_t, 4, 3)), rng.normal(0, 3, (n_t, n_c)), rng.normal(0, 3, (n_f, n_t, 2))
        )
        mr = MatchResult(best, np.zeros(n_t), positive, list(range(n_tracks)))
        ratio = float(rng.choice([0.0, 1.0, 3.0]))
        lc = classification_loss(pred, mr, classes, ratio)
        ref_c = oracles.classification_loss(pred.class_scores, positive, best, classes, ratio, n_f)
        lv = visibility_loss(pred, mr, gt_vis)
        ref_v = oracles.visibility_loss(pred.vis_scores, positive, best, gt_vis)
        if abs(lc - ref_c) > 1e-10 * max(1.0, abs(ref_c)) or abs(lv - ref_v) > 1e-10 * max(1.0, abs(ref_v)):
            bad.append(f"instance {k}: class {lc} vs {ref_c}, vis {lv} vs {ref_v}")
    return bad


def check_tracklet_iou(rng, n) -> list[str]:
    bad = []
    for k in range(n):
        b1, v1 = random_tube(rng, 8)
        b2, v2 = random_tube(rng, 8)
        got = tracklet_iou(BoxSeq(b1, v1), BoxSeq(b2, v2))
        ref = oracles.tracklet_iou(b1, v1, b2, v2)
        if abs(got - ref) > 1e-12:
            bad.append(f"pair {k}: {got} vs {ref}")
    return bad


def random_tube_set(rng, n_tubes: int, n_frames: int = 8, n_classes: int = 3) -> list[Tracklet]:
    centers = rng.uniform(0.3, 0.7, (max(1, n_tubes // 3), 2))
    out = []
    for _ in range(n_tubes):
        c = centers[rng.integers(len(centers))] + rng.normal(0, 0.03, 2)
        boxes, vis = random_tube(rng, n_frames, c)
        conf = float(np.round(rng.random(), 2))
        out.append(Tracklet(BoxSeq(boxes, vis), int(rng.integers(1, n_classes)), conf, 0))
    return out


def check_tnms(rng, n, delta_nms: float = 0.3) -> list[str]:
    bad = []
    for k in range(n):
        tubes = random_tube_set(rng, int(rng.integers(1, 13)))
        kept = tnms(tubes, delta_nms)
        idx = [next(i for i, t in enumerate(tubes) if t is s) for s in kept]
        plain = [(t.seq.boxes, t.seq.visibility, t.class_id, t.confidence) for t in tubes]
        bad += [f"set {k}: {p}" for p in oracles.tnms_violations(plain, idx, delta_nms)]
    return bad


def check_idf1(rng, n) -> list[str]:
    bad = []
    for k in range(n):
        m, c = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        counts = rng.integers(0, 20, (m, c)) * (rng.random((m, c)) < 0.6)
        overlap = {(g, p): int(counts[g, p]) for g in range(m) for p in range(c) if counts[g, p]}
        got = identity_true_positives(overlap, list(range(m)), list(range(c)))
        ref = oracles.identity_true_positives(counts)
        if got != ref:
            bad.append(f"instance {k}: {got} vs {ref}")
    return bad


def check_coverage(rng, n) -> list[str]:
    bad = []
    for k in range(n):
        box = (0.3, 0.3, 0.6, 0.7)
        covers = []
        for _ in range(int(rng.integers(0, 6))):
            l, t = rng.uniform(0.1, 0.7, 2)
            covers.append((l, t, l + rng.uniform(0.02, 0.3), t + rng.uniform(0.02, 0.3)))
        got = covered_fraction(box, covers)
        ref = oracles.covered_fraction(box, covers)
        if abs(got - ref) > 1e-12:
            bad.append(f"instance {k}: {got} vs {ref}")
    return bad


CHECKS: list[tuple[str, Callable, int]] = [
    ("box encoding round trip", check_encoding, 10_000),
    ("motion fit vs polyfit", check_fit, 200),
    ("hungarian vs exhaustive search", check_hungarian, 200),
    ("losses vs direct summation", check_losses, 200),
    ("tracklet IOU vs loop", check_tracklet_iou, 200),
    ("TNMS post-conditions", check_tnms, 200),
    ("IDF1 matching vs exhaustive search", check_idf1, 200),
    ("occlusion coverage vs inclusion-exclusion", check_coverage, 200),
]


def run_all(seed: int = 0, scale: float = 1.0, out: TextIO | None = None) -> bool:
    ok = True
    for name, check, n in CHECKS:
        rng = np.random.default_rng(seed)
        cases = max(1, int(n * scale))
        t0 = time.perf_counter()
        problems = check(rng, cases)
        dt = time.perf_counter() - t0
        status = "PASS" if not problems else "FAIL"
        ok &= not problems
        if out is not None:
            print(f"{status} {name} ({cases} cases, {dt:.2f}s)", file=out)
            for p in problems[:5]:
                print(f"    {p}", file=out)
    return ok
