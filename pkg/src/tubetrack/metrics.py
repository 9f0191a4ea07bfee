"""CLEAR MOT, identity and MT/PT/ML metrics.

Ground-truth boxes below the visibility threshold are unobservable: they are
neither required (no FN) nor counted as hits, and a prediction that lands on
one is ignored rather than counted as a false positive. ``consider_invisible``
switches this off.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Mapping, Sequence

import numpy as np

from .assignment import hungarian
from .errors import ConfigError, FormatError
from .geometry import DEFAULT_VIS_THRESHOLD, iou_corners_array
from .records import TrackRecord, by_frame

MT_RATIO = 0.8
ML_RATIO = 0.2


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.5
    vis_threshold: float = DEFAULT_VIS_THRESHOLD
    consider_invisible: bool = False
    persistent: bool = True  # keep last frame's correspondences when still valid

    def __post_init__(self):
        if not 0.0 < self.iou_threshold < 1.0:
            raise ConfigError(f"iou_threshold must be in (0, 1), got {self.iou_threshold}")
        if not 0.0 <= self.vis_threshold <= 1.0:
            raise ConfigError(f"vis_threshold must be in [0, 1], got {self.vis_threshold}")


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


@dataclass(frozen=True)
class EvalResult:
    idf1: float
    idp: float
    idr: float
    recall: float
    precision: float
    mota: float
    motp: float
    gt: int
    mt: int
    pt: int
    ml: int
    fp: int
    fn: int
    ids: int
    fm: int
    # raw counts the ratios derive from
    n_gt_boxes: int
    n_pred_boxes: int
    tp: int
    idtp: int
    iou_sum: float

    COUNT_FIELDS = ("gt", "mt", "pt", "ml", "fp", "fn", "ids", "fm",
                    "n_gt_boxes", "n_pred_boxes", "tp", "idtp", "iou_sum")

    @classmethod
    def from_counts(cls, *, gt, mt, pt, ml, fp, fn, ids, fm, n_gt_boxes, n_pred_boxes, tp, idtp, iou_sum):
        idfn = n_gt_boxes - idtp
        idfp = n_pred_boxes - idtp
        return cls(
            idf1=_ratio(2 * idtp, n_gt_boxes + n_pred_boxes),
            idp=_ratio(idtp, idtp + idfp),
            idr=_ratio(idtp, idtp + idfn),
            recall=_ratio(tp, n_gt_boxes),
            precision=_ratio(tp, tp + fp),
            mota=1.0 - (fp + fn + ids) / max(n_gt_boxes, 1),
            motp=_ratio(iou_sum, tp),
            gt=gt, mt=mt, pt=pt, ml=ml, fp=fp, fn=fn, ids=ids, fm=fm,
            n_gt_boxes=n_gt_boxes, n_pred_boxes=n_pred_boxes, tp=tp, idtp=idtp, iou_sum=iou_sum,
        )

    def counts(self) -> dict:
        return {k: getattr(self, k) for k in self.COUNT_FIELDS}

    def check(self) -> None:
        """Assert the stored ratios agree with a recomputation from the counts."""
        again = EvalResult.from_counts(**self.counts())
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(again, f.name)
            assert a == b or (isinstance(a, float) and math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12)), (
                f"inconsistent {f.name}: stored {a}, recomputed {b}"
            )
        assert self.mt + self.pt + self.ml == self.gt
        assert self.tp + self.fn == self.n_gt_boxes

    def as_dict(self) -> dict:
        return asdict(self)


def _index(records: Iterable[TrackRecord], what: str) -> dict[int, list[TrackRecord]]:
    frames = by_frame(records)
    for f, recs in frames.items():
        ids = [r.track_id for r in recs]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise FormatError(f"duplicate {what} record for frame {f}, id {dup}")
    return frames


def _match_max_iou(iou: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    """Pairs with IOU >= threshold maximizing first their number, then total IOU."""
    if iou.size == 0:
        return []
    valid = iou >= threshold
    if not valid.any():
        return []
    big = 2.0 * (min(iou.shape) + 1)
    cost = np.where(valid, 1.0 - iou, big)
    return [(r, c) for r, c in hungarian(cost) if valid[r, c]]


def evaluate(
    gt: Iterable[TrackRecord], pred: Iterable[TrackRecord], cfg: EvalConfig | None = None
) -> EvalResult:
    cfg = cfg or EvalConfig()
    gt_frames = _index(gt, "ground-truth")
    pred_frames = _index(pred, "prediction")
    thr = cfg.iou_threshold

    last_match: dict[int, int] = {}
    was_matched: dict[int, bool] = {}
    gt_len: dict[int, int] = defaultdict(int)
    gt_hit: dict[int, int] = defaultdict(int)
    overlap: dict[tuple[int, int], int] = defaultdict(int)
    pred_ids: set[int] = set()
    gt_ids: set[int] = set()
    tp = fp = fn = ids = fm = 0
    n_gt = n_pred = 0
    iou_sum = 0.0

    for f in sorted(set(gt_frames) | set(pred_frames)):
        g_all = gt_frames.get(f, [])
        p_all = pred_frames.get(f, [])
        if cfg.consider_invisible:
            g_vis, g_hidden = g_all, []
        else:
            g_vis = [g for g in g_all if g.visibility >= cfg.vis_threshold]
            g_hidden = [g for g in g_all if g.visibility < cfg.vis_threshold]
        gc = np.array([g.corners for g in g_vis]).reshape(-1, 4)
        pc = np.array([p.corners for p in p_all]).reshape(-1, 4)
        iou = iou_corners_array(gc[:, None], pc[None]) if len(g_vis) and len(p_all) else np.zeros((len(g_vis), len(p_all)))
        p_col = {p.track_id: c for c, p in enumerate(p_all)}

        pairs: dict[int, int] = {}
        used_p: set[int] = set()
        if cfg.persistent:
            for r, g in enumerate(g_vis):
                c = p_col.get(last_match.get(g.track_id, -1))
                if c is not None and c not in used_p and iou[r, c] >= thr:
                    pairs[r] = c
                    used_p.add(c)
        rest_r = [r for r in range(len(g_vis)) if r not in pairs]
        rest_c = [c for c in range(len(p_all)) if c not in used_p]
        for a, b in _match_max_iou(iou[np.ix_(rest_r, rest_c)], thr):
            pairs[rest_r[a]] = rest_c[b]
            used_p.add(rest_c[b])

        ignored: set[int] = set()
        free_c = [c for c in range(len(p_all)) if c not in used_p]
        if g_hidden and free_c:
            hc = np.array([g.corners for g in g_hidden])
            hiou = iou_corners_array(hc[:, None], pc[free_c][None])
            ignored = {free_c[b] for _, b in _match_max_iou(hiou, thr)}

        for r, g in enumerate(g_vis):
            gid = g.track_id
            gt_ids.add(gid)
            gt_len[gid] += 1
            if r in pairs:
                pid = p_all[pairs[r]].track_id
                tp += 1
                gt_hit[gid] += 1
                iou_sum += float(iou[r, pairs[r]])
                if gid in last_match and last_match[gid] != pid:
                    ids += 1
                last_match[gid] = pid
                was_matched[gid] = True
            else:
                fn += 1
                if was_matched.get(gid):
                    fm += 1
                was_matched[gid] = False
        fp += len(p_all) - len(pairs) - len(ignored)

        n_gt += len(g_vis)
        kept = [c for c in range(len(p_all)) if c not in ignored]
        n_pred += len(kept)
        for c in kept:
            pred_ids.add(p_all[c].track_id)
        for r, g in enumerate(g_vis):
            for c in kept:
                if iou[r, c] >= thr:
                    overlap[(g.track_id, p_all[c].track_id)] += 1

    idtp = identity_true_positives(overlap, sorted(gt_ids), sorted(pred_ids))
    mt = pt = ml = 0
    for gid in gt_ids:
        ratio = gt_hit[gid] / gt_len[gid]
        if ratio >= MT_RATIO:
            mt += 1
        elif ratio <= ML_RATIO:
            ml += 1
        else:
            pt += 1
    return EvalResult.from_counts(
        gt=len(gt_ids), mt=mt, pt=pt, ml=ml, fp=fp, fn=fn, ids=ids, fm=fm,
        n_gt_boxes=n_gt, n_pred_boxes=n_pred, tp=tp, idtp=idtp, iou_sum=iou_sum,
    )


def identity_true_positives(overlap: Mapping[tuple[int, int], int], gt_ids: Sequence[int], pred_ids: Sequence[int]) -> int:
    """Largest total co-detection count over one-to-one gt/pred id matchings."""
    if not gt_ids or not pred_ids:
        return 0
    gi = {g: k for k, g in enumerate(gt_ids)}
    pi = {p: k for k, p in enumerate(pred_ids)}
    counts = np.zeros((len(gt_ids), len(pred_ids)))
    for (g, p), n in overlap.items():
        counts[gi[g], pi[p]] = n
    return int(sum(counts[r, c] for r, c in hungarian(-counts)))


def aggregate(results: Sequence[EvalResult]) -> EvalResult:
    totals = {k: 0 for k in EvalResult.COUNT_FIELDS}
    totals["iou_sum"] = 0.0
    for res in results:
        for k, v in res.counts().items():
            totals[k] += v
    return EvalResult.from_counts(**totals)


def evaluate_per_sequence(
    batch: Mapping[str, tuple[Iterable[TrackRecord], Iterable[TrackRecord]]],
    cfg: EvalConfig | None = None,
) -> list[tuple[str, EvalResult]]:
    """One row per sequence plus an ``Average`` row built from summed counts."""
    if not batch:
        return []
    rows = [(name, evaluate(g, p, cfg)) for name, (g, p) in batch.items()]
    for _, res in rows:
        res.check()
    avg = aggregate([r for _, r in rows])
    avg.check()
    return rows + [("Average", avg)]


TABLE_COLUMNS = (
    ("IDF1", "idf1"), ("IDP", "idp"), ("IDR", "idr"), ("Rcll", "recall"), ("Prcn", "precision"),
    ("GT", "gt"), ("MT", "mt"), ("PT", "pt"), ("ML", "ml"), ("FP", "fp"), ("FN", "fn"),
    ("IDs", "ids"), ("FM", "fm"), ("MOTA", "mota"), ("MOTP", "motp"),
)


def format_table(rows: Sequence[tuple[str, EvalResult]]) -> str:
    header = ["Sequence"] + [c for c, _ in TABLE_COLUMNS]
    lines = [header]
    for name, res in rows:
        line = [name]
        for _, key in TABLE_COLUMNS:
            v = getattr(res, key)
            line.append(f"{100 * v:.1f}%" if isinstance(v, float) else str(v))
        lines.append(line)
    widths = [max(len(l[k]) for l in lines) for k in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(l, widths)) for l in lines)


def format_key_values(res: EvalResult) -> str:
    return "".join(f"{k}={v!r}\n" for k, v in res.as_dict().items())
