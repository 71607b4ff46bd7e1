import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from delaysync.errors import ConfigError
from delaysync.latency import EstimatorConfig, LatencyEstimate
from delaysync.scheduler import (
    SchedulerConfig, SchedulerMode, classify_and_trigger, compute_deadline, full_match_rate,
    min_max_delay, oracle_estimates, reaction_time_stats, schedule_batches, schedule_log,
    timing_error_histogram,
)
from delaysync.sim import NodeProfile, SensorMessage, SimConfig, TriggerMode, run_simulation


def msg(node, arrival, anchor=0.0, acq=None):
    return SensorMessage(node, anchor, anchor if acq is None else acq, arrival)


def test_compute_deadline_takes_worst_node():
    est = [LatencyEstimate(50, 10, 100), LatencyEstimate(40, 20, 100)]
    assert compute_deadline(1000.0, est, 4) == 1000.0 + 120.0
    assert compute_deadline(0.0, {3: LatencyEstimate(10, 1, 5)}, 2) == 12.0
    with pytest.raises(ConfigError):
        compute_deadline(0.0, [], 4)


def test_adaptive_triggers_at_last_arrival_when_complete():
    b = classify_and_trigger(0.0, 90.0, [msg(0, 40), msg(1, 55)], [0, 1])
    assert b.trigger_time == 55 and b.full_match and len(b.normal_messages) == 2


def test_adaptive_triggers_at_deadline_and_marks_late():
    b = classify_and_trigger(0.0, 90.0, [msg(0, 40), msg(1, 120)], [0, 1])
    assert b.trigger_time == 90 and not b.full_match
    assert [m.node_id for m in b.late_messages] == [1]
    assert b.reaction_time == 90


def test_naive_waits_for_everyone():
    b = classify_and_trigger(0.0, 90.0, [msg(0, 40), msg(1, 220)], [0, 1],
                             SchedulerConfig(mode="NaiveWaitAll"))
    assert b.trigger_time == 220 and b.full_match


def test_missing_node_triggers_at_deadline():
    b = classify_and_trigger(0.0, 90.0, [msg(0, 40)], [0, 1])
    assert b.trigger_time == 90 and not b.full_match


def test_duplicates_keep_first_arrival():
    b = classify_and_trigger(0.0, 90.0, [msg(0, 40), msg(0, 45), msg(1, 50)], [0, 1])
    assert len(b.duplicates) == 1 and b.duplicates[0].arrival_time == 45
    assert b.full_match


def test_out_of_order_input_is_rejected():
    with pytest.raises(ConfigError):
        classify_and_trigger(0.0, 90.0, [msg(0, 50), msg(1, 40)], [0, 1])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 6), st.floats(0, 0.2), st.floats(0, 0.2),
       st.sampled_from([1.5, 3.0, 4.0]), st.sampled_from(list(SchedulerMode)),
       st.booleans())
def test_vectorized_matches_message_by_message(seed, nodes, p_ab, p_loss, n_sigma, mode, live):
    cfg = SimConfig(num_nodes=nodes, duration=2000, seed=seed,
                    node_profiles=[NodeProfile(abnormal_prob=p_ab, loss_prob=p_loss)])
    log = run_simulation(cfg)
    sc = SchedulerConfig(n_sigma, mode)
    est = None if live else oracle_estimates(cfg)
    table = schedule_log(log, sc, est, EstimatorConfig(bootstrap_min=3))
    batches = schedule_batches(log, sc, est, EstimatorConfig(bootstrap_min=3))
    assert len(batches) == len(table)
    for k, b in enumerate(batches):
        assert b.trigger_time == pytest.approx(table.trigger_ms[k])
        assert b.full_match == bool(table.full_match[k])
        assert len(b.normal_messages) == table.n_normal[k]
        assert len(b.late_messages) == table.n_late[k]


def test_full_match_rate_against_normal_cdf():
    # oracle sigma folds in the trigger jitter, so the per-node pass
    # probability is exactly Phi(n)
    cfg = SimConfig(num_nodes=4, duration=100 * 29_999, seed=21)
    log = run_simulation(cfg)
    table = schedule_log(log, SchedulerConfig(2.0), oracle_estimates(cfg))
    p = stats.norm.cdf(2.0) ** 4
    se = math.sqrt(p * (1 - p) / len(table))
    assert abs(full_match_rate(table) - p) < 4 * se


def test_reaction_never_exceeds_deadline_in_adaptive_mode():
    cfg = SimConfig(num_nodes=8, duration=100 * 4999, seed=5,
                    node_profiles=[NodeProfile(abnormal_prob=0.05)])
    log = run_simulation(cfg)
    table = schedule_log(log, SchedulerConfig(3.0))
    assert np.all(table.trigger_ms <= table.deadline_ms + 1e-9)
    naive = schedule_log(log, SchedulerConfig(3.0, "NaiveWaitAll"))
    assert reaction_time_stats(naive).mean > reaction_time_stats(table).mean


def test_live_estimator_learns_the_latency():
    cfg = SimConfig(num_nodes=3, duration=100 * 2000, seed=8)
    table = schedule_log(run_simulation(cfg), SchedulerConfig(4.0))
    for e in table.estimates:
        assert abs(e.mu - 50) < 4 and abs(e.sigma - 10) < 3


def test_reaction_stats_hand_case():
    batches = [
        classify_and_trigger(0.0, 100.0, [msg(0, 10)], [0]),
        classify_and_trigger(100.0, 200.0, [msg(0, 130, 100.0)], [0]),
        classify_and_trigger(200.0, 300.0, [msg(0, 260, 200.0)], [0]),
    ]
    rs = reaction_time_stats(batches)
    assert rs.mean == pytest.approx(100 / 3)
    assert rs.max == 60 and rs.p50 == 30 and rs.count == 3


def test_min_max_delay_equals_acquisition_spread():
    b = classify_and_trigger(0.0, 100.0, [msg(0, 10, acq=-2.0), msg(1, 20, acq=3.5),
                                          msg(2, 500, acq=1.0)], [0, 1, 2])
    assert min_max_delay([b]).tolist() == [5.5]


def test_naive_minmax_matches_order_statistic():
    # spread of n uniforms on a width-100 interval averages (n-1)/(n+1) * 100
    spreads = []
    for seed in range(600):
        cfg = SimConfig(num_nodes=8, duration=100, seed=seed, trigger_mode=TriggerMode.NAIVE_ASYNC)
        log = run_simulation(cfg)
        spreads.append(min_max_delay(schedule_log(log, SchedulerConfig(), oracle_estimates(cfg)))[0])
    sd = 100 * math.sqrt(2 * 8 / ((8 + 1) ** 2 * (8 + 2)))
    assert abs(np.mean(spreads) - 700 / 9) < 4 * sd / math.sqrt(600)


def test_histogram_counts_sum():
    log = run_simulation(SimConfig(num_nodes=4, duration=10_000, seed=1))
    rows = timing_error_histogram(log, 1.0, -50, 50)
    assert len(rows) == 100
    assert sum(r[2] for r in rows) == len(log)


def test_naive_with_lost_messages_never_fires():
    cfg = SimConfig(num_nodes=4, duration=2000, seed=1, node_profiles=[NodeProfile(loss_prob=0.2)])
    table = schedule_log(run_simulation(cfg), SchedulerConfig(4, "NaiveWaitAll"))
    incomplete = np.array([n < 4 for n in table.n_normal + table.n_late])
    assert incomplete.any()
    assert np.all(np.isinf(table.trigger_ms[incomplete]))
    rs = reaction_time_stats(table)
    assert math.isinf(rs.mean) and not math.isnan(rs.p50) and not math.isnan(rs.p99)
