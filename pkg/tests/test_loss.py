import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tubetrack import oracles
from tubetrack.anchors import MatchResult
from tubetrack.errors import ConfigError, ContractError
from tubetrack.loss import (
    EncodedTargets,
    LossWeights,
    PredictionWindow,
    classification_loss,
    motion_loss,
    select_hard_negatives,
    smooth_l1,
    total_loss,
    visibility_loss,
)
from tubetrack.motion import TimeBasis, eval_encoded_array

LN2 = math.log(2)


def _match(positive, best):
    positive = np.asarray(positive, dtype=bool)
    n_tracks = max([b for b in best if b >= 0], default=-1) + 1
    return MatchResult(np.asarray(best), np.zeros(len(positive)), positive, list(range(n_tracks)))


def _pred(n_t, n_c=2, n_f=1, motion=None):
    motion = np.zeros((n_t, 4, 3)) if motion is None else motion
    return PredictionWindow(motion, np.zeros((n_t, n_c)), np.zeros((n_f, n_t, 2)))


@pytest.mark.parametrize("x,expected", [(0.0, 0.0), (0.5, 0.125), (-0.5, 0.125), (2.0, 1.5), (1.0, 0.5)])
def test_smooth_l1_values(x, expected):
    assert smooth_l1(x) == expected
    assert oracles.smooth_l1(x) == expected


@given(st.floats(-100, 100))
def test_smooth_l1_is_continuous_nonnegative_and_even(x):
    assert smooth_l1(x) >= 0 and smooth_l1(x) == smooth_l1(-x)
    assert smooth_l1(x) <= abs(x)


def _targets(motion, basis, mask=None):
    values = eval_encoded_array(motion, basis.taus)
    mask = np.ones(values.shape[:2], dtype=bool) if mask is None else mask
    return EncodedTargets(values, mask)


def test_motion_loss_zero_at_truth():
    basis = TimeBasis(4)
    p = np.random.default_rng(0).normal(size=(3, 4, 3))
    pred = PredictionWindow(p, np.zeros((3, 2)), np.zeros((4, 3, 2)))
    assert motion_loss(pred, _targets(p, basis), _match([1, 1, 0], [0, 0, -1]), basis) == 0.0


def test_motion_loss_single_coordinate_off_by_half():
    basis = TimeBasis(3)
    gt = EncodedTargets(np.zeros((1, 3, 4)), np.array([[True, False, False]]))
    gt.values[0, 0, 1] = 0.5  # cy wrong by 0.5 in the only unmasked frame
    assert motion_loss(_pred(1, n_f=3), gt, _match([1], [0]), basis) == 0.125


def test_motion_loss_doubles_with_duplicated_positives():
    basis = TimeBasis(5)
    rng = np.random.default_rng(1)
    p = rng.normal(size=(1, 4, 3))
    gt = _targets(p + rng.normal(0, 0.3, p.shape), basis)
    one = motion_loss(_pred(1, n_f=5, motion=p), gt, _match([1], [0]), basis)
    gt2 = EncodedTargets(np.concatenate([gt.values] * 2), np.concatenate([gt.mask] * 2))
    two = motion_loss(_pred(2, n_f=5, motion=np.concatenate([p, p])), gt2, _match([1, 1], [0, 0]), basis)
    assert two == pytest.approx(2 * one, rel=1e-14)


def test_motion_loss_ignores_masked_frames_and_negatives():
    basis = TimeBasis(4)
    gt = EncodedTargets(np.full((2, 4, 4), 9.0), np.array([[True, False, False, False], [False] * 4]))
    gt.values[0, 0] = 0.0
    assert motion_loss(_pred(2, n_f=4), gt, _match([1, 0], [0, -1]), basis) == 0.0


def test_motion_loss_plain_l1_variant():
    basis = TimeBasis(3)
    gt = EncodedTargets(np.zeros((1, 3, 4)), np.ones((1, 3), bool))
    gt.values[0, :, 0] = 2.0
    assert motion_loss(_pred(1, n_f=3), gt, _match([1], [0]), basis, kind="l1") == 6.0
    assert motion_loss(_pred(1, n_f=3), gt, _match([1], [0]), basis) == 4.5
    with pytest.raises(ValueError):
        motion_loss(_pred(1, n_f=3), gt, _match([1], [0]), basis, kind="l2")


def test_motion_loss_requires_targets_for_positives():
    basis = TimeBasis(3)
    gt = EncodedTargets(np.zeros((1, 3, 4)), np.zeros((1, 3), bool))
    with pytest.raises(ContractError):
        motion_loss(_pred(1, n_f=3), gt, _match([1], [0]), basis)


def test_motion_loss_positive_under_any_single_perturbation():
    basis = TimeBasis(6)
    rng = np.random.default_rng(2)
    p = rng.normal(size=(2, 4, 3))
    gt = _targets(p, basis)
    m = _match([1, 1], [0, 1])
    for i in range(2):
        for r in range(4):
            for c in range(3):
                q = p.copy()
                q[i, r, c] += 1e-6
                assert motion_loss(_pred(2, n_f=6, motion=q), gt, m, basis) > 0


def test_motion_loss_invariant_to_anchor_permutation():
    basis = TimeBasis(5)
    rng = np.random.default_rng(3)
    p = rng.normal(size=(4, 4, 3))
    gt = _targets(rng.normal(size=(4, 4, 3)), basis)
    m = _match([1, 0, 1, 1], [0, -1, 1, 0])
    perm = np.array([2, 0, 3, 1])
    mp = MatchResult(m.best_track[perm], m.overlap[perm], m.positive[perm], m.track_ids)
    a = motion_loss(_pred(4, n_f=5, motion=p), gt, m, basis)
    b = motion_loss(_pred(4, n_f=5, motion=p[perm]), EncodedTargets(gt.values[perm], gt.mask[perm]), mp, basis)
    assert a == pytest.approx(b, rel=1e-14)


def test_classification_uniform_scores_example():
    n_f = 16
    pred = _pred(5, n_c=2, n_f=n_f)
    loss = classification_loss(pred, _match([1, 0, 0, 0, 0], [0, -1, -1, -1, -1]), [1], 3.0)
    assert loss == pytest.approx(4 * LN2 * n_f, rel=1e-14)


def test_classification_confident_positive_vanishes():
    pred = PredictionWindow(np.zeros((1, 4, 3)), np.array([[-50.0, 50.0]]), np.zeros((2, 1, 2)))
    assert classification_loss(pred, _match([1], [0]), [1], 3.0) < 1e-40


def test_classification_rejects_bad_class_ids():
    pred = _pred(2, n_c=3)
    with pytest.raises(ValueError):
        classification_loss(pred, _match([1, 0], [0, -1]), [3])
    with pytest.raises(ValueError):
        classification_loss(pred, _match([1, 0], [0, -1]), [0])


def test_hard_negative_selection_matches_full_sort():
    rng = np.random.default_rng(4)
    for _ in range(200):
        losses = np.round(rng.random(int(rng.integers(0, 12))), 1)
        n_pos = int(rng.integers(0, 5))
        ratio = float(rng.choice([0.5, 1.0, 3.0]))
        sel = select_hard_negatives(losses, n_pos, ratio)
        expected = sorted(range(len(losses)), key=lambda k: (-losses[k], k))
        assert len(sel) == min(math.floor(ratio * n_pos), len(losses))
        assert sel.tolist() == expected[: len(sel)]


def test_visibility_uniform_scores_example():
    pred = _pred(3, n_f=16)
    gt_vis = [np.linspace(0, 1, 16)]
    assert visibility_loss(pred, _match([0, 1, 0], [-1, 0, -1]), gt_vis) == pytest.approx(16 * LN2, rel=1e-14)


def test_visibility_margin_ten_is_small():
    vis_scores = np.zeros((1, 1, 2))
    vis_scores[0, 0] = (0.0, 10.0)
    pred = PredictionWindow(np.zeros((1, 4, 3)), np.zeros((1, 2)), vis_scores)
    loss = visibility_loss(pred, _match([1], [0]), [[1.0]])
    assert 0 < loss < 1e-4
    assert loss == pytest.approx(math.log1p(math.exp(-10)), rel=1e-12)


def test_visibility_ignores_negative_anchors():
    rng = np.random.default_rng(5)
    scores = rng.normal(size=(4, 3, 2))
    m = _match([1, 0, 0], [0, -1, -1])
    gt_vis = [rng.random(4)]
    base = visibility_loss(PredictionWindow(np.zeros((3, 4, 3)), np.zeros((3, 2)), scores), m, gt_vis)
    scores[:, 1:] = rng.normal(size=(4, 2, 2))
    again = visibility_loss(PredictionWindow(np.zeros((3, 4, 3)), np.zeros((3, 2)), scores), m, gt_vis)
    assert base == again


def test_visibility_rejects_wrong_length():
    with pytest.raises(ValueError):
        visibility_loss(_pred(1, n_f=4), _match([1], [0]), [[1.0, 1.0]])


def test_losses_match_direct_summation():
    rng = np.random.default_rng(6)
    for _ in range(100):
        n_t, n_c, n_f = int(rng.integers(1, 11)), int(rng.integers(2, 5)), int(rng.integers(1, 6))
        n_tracks = int(rng.integers(1, 4))
        positive = rng.random(n_t) < 0.4
        best = np.where(positive, rng.integers(0, n_tracks, n_t), -1)
        classes = rng.integers(1, n_c, n_tracks)
        gt_vis = rng.random((n_tracks, n_f))
        pred = PredictionWindow(rng.normal(size=(n_t, 4, 3)), rng.normal(0, 3, (n_t, n_c)), rng.normal(0, 3, (n_f, n_t, 2)))
        m = MatchResult(best, np.zeros(n_t), positive, list(range(n_tracks)))
        for ratio in (0.0, 1.0, 3.0):
            ref = oracles.classification_loss(pred.class_scores, positive, best, classes, ratio, n_f)
            assert classification_loss(pred, m, classes, ratio) == pytest.approx(ref, rel=1e-10, abs=1e-10)
        ref_v = oracles.visibility_loss(pred.vis_scores, positive, best, gt_vis)
        assert visibility_loss(pred, m, gt_vis) == pytest.approx(ref_v, rel=1e-10, abs=1e-10)


def test_total_loss_examples():
    assert total_loss(3, 3, 3, LossWeights(1, 1), 3).total == 3.0
    assert total_loss(1, 1, 1, LossWeights(2, 1), 1).total == 4.0
    empty = total_loss(0, 0, 0, LossWeights(), 0)
    assert empty.total == 0.0 and empty.empty


def test_total_loss_contract():
    with pytest.raises(ContractError):
        total_loss(-1.0, 0, 0, LossWeights(), 1)
    with pytest.raises(ConfigError, match="alpha"):
        LossWeights(0.0, 1.0)


def test_prediction_window_validation():
    with pytest.raises(ValueError):
        PredictionWindow(np.zeros((2, 4, 3)), np.zeros((3, 2)), np.zeros((1, 2, 2)))
    with pytest.raises(ValueError):
        PredictionWindow(np.zeros((1, 4, 3)), np.zeros((1, 1)), np.zeros((1, 1, 2)))
    with pytest.raises(ValueError):
        PredictionWindow(np.zeros((1, 4, 3)), np.full((1, 2), np.inf), np.zeros((1, 1, 2)))
