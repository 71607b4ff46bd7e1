import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaysync.errors import InputError, SequencingError
from delaysync.fusion import (
    Detection, TrackStatus, Tracker, TrackerConfig, associate_and_fuse, fuse_anchor,
    fuse_cluster, motion_correct, read_detections, write_jsonl, write_track_csv,
)


def det(x, y, node=0, cls="car", conf=0.8, t=0.0, vel=None, yaw=0.0):
    return Detection((x, y), yaw, (4.5, 1.8, 1.5), cls, conf, node, t, vel)


def test_detection_validation():
    with pytest.raises(InputError):
        det(0, 0, conf=1.5)
    with pytest.raises(InputError):
        det(0, 0, cls="tram")
    with pytest.raises(InputError):
        Detection((0, 0), 0, (0, 1, 1), "car", 0.5)


def test_motion_correct_hand_case():
    d = det(1, 2, t=100.0, vel=(10.0, -4.0))
    c = motion_correct(d, 350.0)
    assert c.position == pytest.approx((3.5, 1.0))
    assert c.timestamp == 350.0
    assert motion_correct(det(1, 2), 500.0).position == (1.0, 2.0)


def test_fuse_cluster_weights_and_noisy_or():
    f = fuse_cluster([det(0, 0, 0, conf=0.75), det(4, 0, 1, conf=0.25)])
    assert f.position == pytest.approx((1.0, 0.0))
    assert f.fused_confidence == pytest.approx(1 - 0.25 * 0.75)
    assert f.contributing_nodes == frozenset({0, 1})


def test_fuse_cluster_circular_yaw_mean():
    f = fuse_cluster([det(0, 0, 0, yaw=math.pi - 0.1), det(0, 0, 1, yaw=-math.pi + 0.1)])
    assert abs(abs(f.yaw) - math.pi) < 1e-9


def test_association_respects_nodes_and_classes():
    dets = {0: [det(0, 0), det(0.5, 0)], 1: [det(0.2, 0, 1), det(0.1, 0, 1, cls="bus")]}
    fused = associate_and_fuse(dets, gate=2.0)
    sizes = sorted(len(f.contributing_nodes) for f in fused)
    assert sizes == [1, 1, 2]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.tuples(st.floats(-20, 20), st.floats(-20, 20),
                                   st.sampled_from(["car", "person"])), max_size=5),
                min_size=1, max_size=4))
def test_association_partitions_input(per_node):
    dets = {n: [det(x, y, n, cls) for x, y, cls in items] for n, items in enumerate(per_node)}
    total = sum(len(v) for v in dets.values())
    fused = associate_and_fuse(dets, gate=2.0)
    assert len(fused) <= total
    assert sum(len(f.contributing_nodes) for f in fused) == total


def test_tracker_confirms_and_follows():
    tr = Tracker()
    for k in range(10):
        t = 100.0 * k
        fuse_anchor(tr, t, [det(k * 1.0, 0, t=t, vel=(10.0, 0.0))])
    assert len(tr.tracks) == 1
    track = tr.tracks[0]
    assert track.status is TrackStatus.CONFIRMED and track.track_id == 0
    assert track.position == pytest.approx((9.0, 0.0), abs=1e-9)
    assert track.velocity == pytest.approx((10.0, 0.0), abs=1e-6)


def test_tracker_deletes_after_misses_and_never_reuses_ids():
    tr = Tracker(TrackerConfig(delete_threshold=2))
    tr.step([det(0, 0)], 0.0)
    tr.step([], 100.0)
    tr.step([], 200.0)
    assert tr.tracks == [] and tr.retired[0].status is TrackStatus.DEAD
    tr.step([det(0, 0)], 300.0)
    assert tr.tracks[0].track_id == 1


def test_tracker_rejects_non_increasing_time():
    tr = Tracker()
    tr.step([], 100.0)
    with pytest.raises(SequencingError):
        tr.step([], 100.0)


def test_late_data_refines_but_never_spawns():
    tr = Tracker()
    tr.step([det(0, 0)], 0.0)
    tr.post_fuse_late([det(1.0, 0, node=3, conf=1.0)], 0.0)
    # gain is alpha times the penalised confidence: 0.6 * 0.5
    assert tr.tracks[0].position == pytest.approx((0.3, 0.0))
    tr.post_fuse_late([det(30.0, 30.0, conf=1.0)], 0.0)
    assert len(tr.tracks) == 1


def test_jsonl_and_csv_round_trip(tmp_path):
    dets = [det(1, 2, vel=(1.0, 0.5)), det(3, 4, node="b", cls="person")]
    back = read_detections(write_jsonl(dets, tmp_path / "d.jsonl"))
    assert back == dets
    tr = Tracker()
    tr.step(dets, 0.0)
    text = write_track_csv(tr.csv_rows(), tmp_path / "t.csv").read_text()
    assert text.startswith("anchor_ms,track_id,class") and text.count("\n") == 3


def test_fused_rmse_beats_single_node():
    rng = np.random.default_rng(0)
    single, fused = [], []
    for _ in range(300):
        truth = rng.uniform(-10, 10, 2)
        obs = {n: [det(*(truth + rng.normal(0, 0.3, 2)), node=n)] for n in range(4)}
        single.append(np.sum((np.array(obs[0][0].position) - truth) ** 2))
        (f,) = associate_and_fuse(obs, gate=3.0)
        fused.append(np.sum((np.array(f.position) - truth) ** 2))
    assert math.sqrt(np.mean(fused)) < math.sqrt(np.mean(single))
