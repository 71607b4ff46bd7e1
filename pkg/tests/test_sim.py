import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from delaysync.errors import ConfigError
from delaysync.sim import (
    EventLog, NodeProfile, SimConfig, TriggerMode, naive_offset, node_stream,
    run_simulation, sample_acquisition, sample_latency, schedule_anchors,
)


def test_schedule_anchors_counts_endpoints():
    assert schedule_anchors(0, 1000, 100) == [100.0 * k for k in range(11)]
    assert schedule_anchors(50, 0, 100) == [50.0]


@pytest.mark.parametrize("interval,duration", [(0, 10), (-1, 10), (100, -1)])
def test_schedule_anchors_rejects_bad_input(interval, duration):
    with pytest.raises(ConfigError):
        schedule_anchors(0, duration, interval)


def test_simulation_is_bit_reproducible():
    cfg = SimConfig(num_nodes=5, duration=2000, seed=7)
    assert run_simulation(cfg) == run_simulation(cfg)
    assert not run_simulation(cfg) == run_simulation(cfg.with_(seed=8))


def test_log_is_arrival_ordered_and_complete():
    cfg = SimConfig(num_nodes=6, duration=3000, seed=1)
    log = run_simulation(cfg)
    assert len(log) == 6 * 31
    assert np.all(np.diff(log.arrival_ms) >= 0)
    assert np.all(log.latencies >= 0)
    pairs = set(zip(log.anchor_index.tolist(), log.node_id.tolist()))
    assert len(pairs) == len(log)


def test_loss_removes_messages_at_the_expected_rate():
    cfg = SimConfig(num_nodes=8, duration=100 * 9999, seed=3,
                    node_profiles=[NodeProfile(loss_prob=0.1)])
    log = run_simulation(cfg)
    kept = len(log) / (8 * 10000)
    assert abs(kept - 0.9) < 4 * math.sqrt(0.09 / 80000)


def test_synchronized_jitter_is_truncated_normal():
    rng = np.random.default_rng(0)
    err = sample_acquisition(np.zeros(200_000), NodeProfile(), TriggerMode.SYNCHRONIZED, rng)
    assert np.max(np.abs(err)) <= 10.0
    # truncation at about 5.9 sigma barely changes the variance
    assert abs(np.std(err) - 1.7) < 0.01


def test_naive_offset_matches_hand_cases():
    assert naive_offset(0.0, 30.0, 100.0) == pytest.approx(30.0)
    assert naive_offset(0.0, 70.0, 100.0) == pytest.approx(-30.0)
    assert naive_offset(200.0, 250.0, 100.0) == pytest.approx(50.0)


@given(st.floats(-1e4, 1e4), st.floats(0, 100, exclude_max=True))
def test_naive_offset_range_and_alignment(anchor, phase):
    off = float(naive_offset(anchor, phase, 100.0))
    assert -50.0 < off <= 50.0 + 1e-9
    # the acquisition instant is a tick of the free-running clock
    k = (anchor + off - phase) / 100.0
    assert abs(k - round(k)) < 1e-6


def test_latency_mixture_moments():
    node = NodeProfile(abnormal_prob=0.2)
    lat = sample_latency(node, np.random.default_rng(5), 400_000)
    # mixture mean; the clamp at zero is negligible at 5 sigma
    assert abs(lat.mean() - (0.8 * 50 + 0.2 * 200)) < 0.3
    frac_high = np.mean(lat > 125)
    assert abs(frac_high - 0.2) < 0.005


def test_latency_ks_against_normal_when_no_abnormal():
    lat = sample_latency(NodeProfile(), np.random.default_rng(9), 50_000)
    assert stats.kstest(lat, stats.norm(50, 10).cdf).statistic < 0.01


def test_node_streams_are_independent_of_node_count():
    a = run_simulation(SimConfig(num_nodes=3, duration=500, seed=11))
    b = run_simulation(SimConfig(num_nodes=5, duration=500, seed=11))
    for n in range(3):
        np.testing.assert_array_equal(
            np.sort(a.arrival_ms[a.node_id == n]), np.sort(b.arrival_ms[b.node_id == n])
        )


def test_node_stream_is_deterministic():
    assert node_stream(1, 2, 3).random() == node_stream(1, 2, 3).random()
    assert node_stream(1, 2, 3).random() != node_stream(1, 3, 2).random()


def test_csv_round_trip(tmp_path):
    log = run_simulation(SimConfig(num_nodes=3, duration=700, seed=2))
    path = tmp_path / "log.csv"
    log.to_csv(path)
    back = EventLog.from_csv(path, num_nodes=3)
    assert back.num_nodes == 3
    np.testing.assert_allclose(back.arrival_ms, log.arrival_ms, rtol=1e-11)
    np.testing.assert_array_equal(back.node_id, log.node_id)


def test_messages_round_trip():
    log = run_simulation(SimConfig(num_nodes=4, duration=900, seed=4))
    assert EventLog.from_messages(log.messages, num_nodes=4) == log


@pytest.mark.parametrize("bad", [
    dict(num_nodes=0), dict(anchor_interval=0), dict(trigger_jitter_sigma=-1),
    dict(node_profiles=[NodeProfile(abnormal_prob=1.5)]),
    dict(node_profiles=[NodeProfile(normal_sigma=-2)]),
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        SimConfig(**bad).validate()


def test_trigger_mode_parse():
    assert TriggerMode.parse("naiveasync") is TriggerMode.NAIVE_ASYNC
    with pytest.raises(ConfigError):
        TriggerMode.parse("sometimes")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 6))
def test_timing_errors_bounded_in_both_modes(seed, nodes):
    for mode in TriggerMode:
        log = run_simulation(SimConfig(num_nodes=nodes, duration=400, seed=seed, trigger_mode=mode))
        bound = 10.0 if mode is TriggerMode.SYNCHRONIZED else 50.0 + 1e-9
        assert np.all(np.abs(log.timing_errors) <= bound)
