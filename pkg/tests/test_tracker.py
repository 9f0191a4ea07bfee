import numpy as np
import pytest

from tubetrack.anchors import AnchorConfig, generate_anchor_tubes
from tubetrack.assignment import hungarian
from tubetrack.errors import ConfigError, ContractError, SequenceError
from tubetrack.geometry import BoxSeq, tracklet_iou
from tubetrack.loss import PredictionWindow
from tubetrack.metrics import evaluate
from tubetrack.motion import TimeBasis
from tubetrack.records import by_track
from tubetrack.selftest import random_tube_set
from tubetrack import oracles
from tubetrack.simulator import (
    Occluder,
    OracleConfig,
    SceneConfig,
    ScriptedObject,
    oracle_predict,
    simulate,
)
from tubetrack.tracker import (
    Tracker,
    TrackerConfig,
    Tracklet,
    TrackSet,
    associate,
    filter_tubes,
    run,
    tnms,
    tracklets_from_predictions,
)

N = 16


def tube(cx, cy, conf=0.9, start=0, n=N, w=0.1, vx=0.0, class_id=1):
    t = np.arange(start, start + n)
    boxes = np.column_stack([cx + vx * t, np.full(n, cy), np.full(n, w), np.full(n, w)])
    return Tracklet(BoxSeq(boxes, np.ones(n)), class_id, conf, start)


def test_filter_keeps_confident_tubes_in_order():
    ts = [tube(0.2, 0.2, 0.9), tube(0.5, 0.5, 0.39), tube(0.8, 0.8, 0.41)]
    assert filter_tubes(ts, 0.4) == [ts[0], ts[2]]
    assert filter_tubes(ts, 0.0) == ts


def test_tracker_config_validation():
    with pytest.raises(ConfigError, match="delta_c"):
        TrackerConfig(delta_c=1.0 + 1e-9)
    with pytest.raises(ConfigError, match="window_stride"):
        TrackerConfig(window_stride=17)
    with pytest.raises(ConfigError, match="max_misses"):
        TrackerConfig(max_misses=-1)


def test_tracklet_rejects_background_and_bad_confidence():
    with pytest.raises(ValueError):
        tube(0.5, 0.5, class_id=0)
    with pytest.raises(ValueError):
        tube(0.5, 0.5, conf=1.2)


def test_tnms_identical_and_disjoint():
    a, b = tube(0.5, 0.5, 0.9), tube(0.5, 0.5, 0.8)
    assert tnms([b, a], 0.3) == [a]
    c = tube(0.1, 0.1, 0.5)
    assert tnms([a, c], 0.3) == [a, c]


def test_tnms_classes_are_independent():
    a, b = tube(0.5, 0.5, 0.9), tube(0.5, 0.5, 0.8, class_id=2)
    assert tnms([a, b], 0.3) == [a, b]


def _two_frame(boxes):
    return BoxSeq(np.array(boxes, dtype=float), np.ones(2))


def test_tnms_chain_keeps_first_and_last():
    d = 0.2 / 3  # two 0.2-wide boxes offset by d overlap with IOU 0.5
    far = [0.9, 0.9, 0.05, 0.05]
    a = Tracklet(_two_frame([[0.3, 0.5, 0.2, 0.2], [0.1, 0.1, 0.1, 0.1]]), 1, 0.9, 0)
    b = Tracklet(_two_frame([[0.3 + d, 0.5, 0.2, 0.2], [0.5, 0.5, 0.2, 0.2]]), 1, 0.8, 0)
    c = Tracklet(_two_frame([far, [0.5 + d, 0.5, 0.2, 0.2]]), 1, 0.7, 0)
    assert tracklet_iou(a.seq, b.seq) == pytest.approx(0.5)
    assert tracklet_iou(b.seq, c.seq) == pytest.approx(0.5)
    assert tracklet_iou(a.seq, c.seq) == 0.0
    assert tnms([c, b, a], 0.3) == [c, a]


def test_tnms_post_conditions_on_random_sets():
    rng = np.random.default_rng(0)
    for _ in range(100):
        tubes = random_tube_set(rng, int(rng.integers(1, 13)))
        kept = tnms(tubes, 0.3)
        idx = [next(i for i, t in enumerate(tubes) if t is s) for s in kept]
        plain = [(t.seq.boxes, t.seq.visibility, t.class_id, t.confidence) for t in tubes]
        assert oracles.tnms_violations(plain, idx, 0.3) == []


def test_association_example_matrix():
    psi = np.array([[0.8, 0.1], [0.2, 0.6]])
    assert hungarian(1 - psi) == [(0, 0), (1, 1)]


def test_first_window_spawns_ids_in_order():
    tracks = associate(TrackSet(), [tube(0.2, 0.2), tube(0.5, 0.5), tube(0.8, 0.8)], TrackerConfig())
    assert [t.track_id for t in tracks.active] == [0, 1, 2]
    assert tracks.frontier == N - 1


def test_overlapping_window_extends_the_same_ids():
    cfg = TrackerConfig()
    tracks = associate(TrackSet(), [tube(0.2, 0.3, vx=0.005), tube(0.6, 0.6, vx=-0.005)], cfg)
    nxt = [tube(0.6, 0.6, start=8, vx=-0.005), tube(0.2, 0.3, start=8, vx=0.005)]
    associate(tracks, nxt, cfg)
    assert tracks.next_id == 2
    assert sorted(tracks.active[0].records) == list(range(24))
    assert tracks.active[0].records[20][0] == pytest.approx(0.2 + 0.005 * 20)


def test_unmatched_trajectories_retire_after_max_misses():
    cfg = TrackerConfig(max_misses=1)
    tracks = associate(TrackSet(), [tube(0.2, 0.2)], cfg)
    associate(tracks, [tube(0.8, 0.8, start=8)], cfg)
    assert [t.track_id for t in tracks.active] == [0, 1]
    associate(tracks, [tube(0.8, 0.8, start=16)], cfg)
    assert [t.track_id for t in tracks.active] == [1]
    assert [t.track_id for t in tracks.retired] == [0]


def test_association_floor_blocks_weak_matches():
    cfg = TrackerConfig(delta_assoc=0.2)
    tracks = associate(TrackSet(), [tube(0.5, 0.5, w=0.1)], cfg)
    # shifted by 0.08: IOU 0.02/0.18 < 0.2
    associate(tracks, [tube(0.58, 0.5, start=8, w=0.1)], cfg)
    assert tracks.next_id == 2


def test_window_before_frontier_is_rejected():
    cfg = TrackerConfig()
    tracks = associate(TrackSet(), [tube(0.5, 0.5, start=32)], cfg)
    with pytest.raises(ContractError):
        associate(tracks, [tube(0.5, 0.5, start=0)], cfg)


def test_tracker_rejects_out_of_order_windows():
    tr = Tracker(TrackerConfig())
    tr.step_tracklets(8, [tube(0.5, 0.5, start=8)])
    with pytest.raises(SequenceError):
        tr.step_tracklets(0, [tube(0.5, 0.5, start=0)])
    with pytest.raises(ContractError):
        tr.step_tracklets(16, [tube(0.5, 0.5, start=9)])


def test_single_window_run_gives_tnms_survivors():
    ts = [tube(0.2, 0.2, 0.9), tube(0.2, 0.2, 0.8), tube(0.7, 0.7, 0.6)]
    tracks, records = run([(0, ts)], TrackerConfig())
    assert [t.track_id for t in tracks.all] == [0, 1]
    assert len(records) == 2 * N


def test_gap_between_windows_is_bridged_by_extrapolation():
    cfg = TrackerConfig(window_stride=16)
    basis = TimeBasis(N)
    anchors = generate_anchor_tubes()
    first, second = [], []
    motion = np.zeros((4, 3))
    motion[2, 1] = 1.5  # cx drifts 1.5 anchor widths per window
    a = anchors.boxes[anchors.boxes[:, 2] > 0.05][500]
    for start, out in ((0, first), (16, second)):
        n_t = len(anchors)
        m = np.zeros((n_t, 4, 3))
        cls = np.zeros((n_t, 2))
        cls[:, 0] = 10
        vis = np.zeros((N, n_t, 2))
        vis[..., 1] = 10
        idx = int(np.flatnonzero((anchors.boxes == a).all(axis=1))[0])
        m[idx] = motion
        if start == 16:
            m[idx, 2, 2] = 1.5 * 16 / 15  # continue from where the first window left off
        cls[idx] = (-10, 10)
        out.append(PredictionWindow(m, cls, vis))
    tracks, records = run([(0, first[0]), (16, second[0])], cfg, anchors, basis)
    assert tracks.next_id == 1
    assert {r.track_id for r in records} == {0}
    assert len(records) == 32


def test_confidence_and_visibility_from_scores():
    anchors = generate_anchor_tubes(AnchorConfig(grid_sizes=(1,), tubes_per_cell=(2,), scales=(0.3,), aspect_ratios=((1.0, 2.0),), n_frames=4))
    cls = np.array([[0.0, 0.0, 0.0], [5.0, -5.0, -5.0]])
    vis = np.zeros((4, 2, 2))
    vis[:2, 0, 1] = 20.0
    vis[2:, 0, 0] = 20.0
    pred = PredictionWindow(np.zeros((2, 4, 3)), cls, vis)
    ts = tracklets_from_predictions(pred, anchors, 0, TimeBasis(4), delta_c=0.1)
    assert len(ts) == 1
    assert ts[0].confidence == pytest.approx(1 / 3) and ts[0].class_id == 1
    assert ts[0].seq.visibility[:2] == pytest.approx([1, 1]) and ts[0].seq.visibility[2:] == pytest.approx([0, 0], abs=1e-8)


ANCHORS = generate_anchor_tubes()


def test_two_window_oracle_run_keeps_ids():
    objs = (
        ScriptedObject.constant_acceleration(0, 0, 24, 0.2, 0.3, 0.08, 0.06, vx=0.01),
        ScriptedObject.constant_acceleration(1, 0, 24, 0.7, 0.7, 0.06, 0.05, vy=-0.005, ax=1e-4),
    )
    scene = simulate(SceneConfig(n_frames=24, objects=objs, min_lifetime=16))
    windows = oracle_predict(scene.records, ANCHORS, n_total=24)
    assert [s for s, _ in windows] == [0, 8]
    tracks, records = run(windows, TrackerConfig(), ANCHORS)
    assert tracks.next_id == 2
    res = evaluate(scene.records, records)
    assert res.mota == 1.0 and res.ids == 0


def test_full_occlusion_mid_window_keeps_one_id():
    obj = ScriptedObject.constant_acceleration(0, 0, 48, 0.2, 0.5, 0.06, 0.05, vx=0.004, ax=2e-5)
    occ = Occluder(0.24, 0.45, 0.33, 0.55, start=20, end=24)
    scene = simulate(SceneConfig(n_frames=48, objects=(obj,), occluders=(occ,)))
    hidden = [r.frame for r in scene.records if r.visibility == 0]
    assert hidden == [20, 21, 22, 23]
    _, records = run(oracle_predict(scene.records, ANCHORS, n_total=48), TrackerConfig(), ANCHORS)
    assert {r.track_id for r in records} == {0}
    assert evaluate(scene.records, records).mota == 1.0


def test_run_is_deterministic_and_ids_monotone():
    scene = simulate(SceneConfig(n_objects=6, n_frames=64, seed=3))
    windows = oracle_predict(scene.records, ANCHORS, OracleConfig(), n_total=64)
    _, r1 = run(windows, TrackerConfig(), ANCHORS)
    tracks, r2 = run(windows, TrackerConfig(), ANCHORS)
    assert r1 == r2
    ids = [t.track_id for t in tracks.all]
    assert ids == sorted(set(ids)) == list(range(tracks.next_id))
    assert set(by_track(r2)) <= set(ids)
