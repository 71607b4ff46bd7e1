"""Per-anchor message collection, adaptive fusion deadlines and sync metrics.

Two equivalent routes exist.  ``classify_and_trigger`` closes a single
anchor from a message stream and returns an :class:`AnchorBatch`.
``schedule_log`` processes a whole :class:`~delaysync.sim.EventLog` column-wise
into a :class:`BatchTable`, which is what the experiments use at 10^5 anchors.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import stats

from .csvio import emit_csv, histogram_rows, HISTOGRAM_SCHEMA
from .errors import ConfigError
from .latency import EstimatorConfig, LatencyEstimate, LatencyEstimator
from .sim import JITTER_TRUNCATION_MS, EventLog, SensorMessage, SimConfig, TriggerMode
from .sim import resolve_phase_offsets, naive_offset

log = logging.getLogger(__name__)

BATCH_SCHEMA = ("anchor_ms", "trigger_ms", "deadline_ms", "full_match", "n_normal", "n_late")
ESTIMATE_SCHEMA = ("node_id", "mu_ms", "sigma_ms")


class SchedulerMode(str, enum.Enum):
    ADAPTIVE = "Adaptive"
    NAIVE_WAIT_ALL = "NaiveWaitAll"

    @classmethod
    def parse(cls, value: "SchedulerMode | str") -> "SchedulerMode":
        if isinstance(value, cls):
            return value
        for member in cls:
            if str(value).lower() in (member.value.lower(), member.name.lower()):
                return member
        raise ConfigError(f"unknown scheduler mode {value!r}")


@dataclass
class SchedulerConfig:
    n_sigma: float = 4.0
    mode: SchedulerMode = SchedulerMode.ADAPTIVE

    def __post_init__(self) -> None:
        self.mode = SchedulerMode.parse(self.mode)
        if self.n_sigma <= 0:
            raise ConfigError("n_sigma must be > 0")


@dataclass
class AnchorBatch:
    anchor_time: float
    deadline: float
    trigger_time: float
    full_match: bool
    normal_messages: list[SensorMessage] = field(default_factory=list)
    late_messages: list[SensorMessage] = field(default_factory=list)
    duplicates: list[SensorMessage] = field(default_factory=list)

    @property
    def reaction_time(self) -> float:
        return self.trigger_time - self.anchor_time

    @property
    def acquisitions(self) -> list[float]:
        return [m.acquisition_time for m in self.normal_messages + self.late_messages]


def compute_deadline(
    anchor: float, estimates: Iterable[LatencyEstimate] | Mapping, n_sigma: float
) -> float:
    """``anchor + max_i(mu_i + n_sigma * sigma_i)`` over participating nodes."""
    if isinstance(estimates, Mapping):
        estimates = estimates.values()
    window = [e.mu + n_sigma * e.sigma for e in estimates]
    if not window:
        raise ConfigError("compute_deadline needs at least one node estimate")
    return anchor + max(window)


def classify_and_trigger(
    anchor_time: float,
    deadline: float,
    messages: Iterable[SensorMessage],
    node_ids: Sequence[int],
    config: SchedulerConfig | None = None,
) -> AnchorBatch:
    """Close one anchor.

    ``messages`` must be in arrival order.  Adaptive mode fires as soon as
    every node in ``node_ids`` has reported, and at ``deadline`` otherwise;
    NaiveWaitAll waits for the last node.  Repeated ``(anchor, node)``
    messages keep the earliest arrival and are listed in ``duplicates``.
    """
    config = config or SchedulerConfig()
    expected = set(node_ids)
    first: dict[int, SensorMessage] = {}
    dups: list[SensorMessage] = []
    last_arrival = -math.inf
    for m in messages:
        if m.arrival_time < last_arrival:
            raise ConfigError("messages must be supplied in arrival order")
        last_arrival = m.arrival_time
        if m.node_id in first:
            dups.append(m)
            continue
        first[m.node_id] = m
    if dups:
        log.debug("anchor %s: %d duplicate message(s) dropped", anchor_time, len(dups))

    complete = expected.issubset(first)
    all_in = max((first[n].arrival_time for n in expected), default=anchor_time) if complete else math.inf
    if config.mode is SchedulerMode.ADAPTIVE:
        trigger = min(all_in, deadline)
    else:
        trigger = all_in

    normal = [m for m in first.values() if m.arrival_time <= trigger]
    late = [m for m in first.values() if m.arrival_time > trigger]
    full = expected.issubset({m.node_id for m in normal})
    return AnchorBatch(anchor_time, deadline, trigger, full, normal, late, dups)


@dataclass(eq=False)
class BatchTable:
    """Column-wise record of every closed anchor of one log."""

    anchor_ms: np.ndarray
    deadline_ms: np.ndarray
    trigger_ms: np.ndarray
    full_match: np.ndarray
    n_normal: np.ndarray
    n_late: np.ndarray
    acq_min_ms: np.ndarray
    acq_max_ms: np.ndarray
    n_acq: np.ndarray
    duplicates: int = 0
    estimates: list[LatencyEstimate] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.anchor_ms)

    @property
    def reaction_ms(self) -> np.ndarray:
        return self.trigger_ms - self.anchor_ms

    def rows(self):
        return zip(
            self.anchor_ms, self.trigger_ms, self.deadline_ms,
            self.full_match, self.n_normal, self.n_late,
        )

    def to_csv(self, path: str | Path) -> Path:
        return emit_csv(self.rows(), BATCH_SCHEMA, path, precision=10)


def oracle_estimates(config: SimConfig) -> list[LatencyEstimate]:
    """Exact normal-traffic delay from anchor to arrival, per node.

    The deadline is measured from the anchor, so the trigger offset is
    folded in: Synchronized mode adds the truncated jitter variance,
    NaiveAsync shifts the mean by the node's fixed phase error.
    """
    out = []
    phases = resolve_phase_offsets(config)
    jitter_var = 0.0
    if config.trigger_mode is TriggerMode.SYNCHRONIZED and config.trigger_jitter_sigma > 0:
        b = JITTER_TRUNCATION_MS / config.trigger_jitter_sigma
        jitter_var = float(stats.truncnorm.var(-b, b, scale=config.trigger_jitter_sigma))
    for node_id in range(config.num_nodes):
        prof = config.profile(node_id)
        mu = prof.normal_mu
        if config.trigger_mode is TriggerMode.NAIVE_ASYNC:
            mu += naive_offset(config.start, phases[node_id], config.anchor_interval)
        sigma = math.sqrt(prof.normal_sigma**2 + jitter_var)
        out.append(LatencyEstimate(mu, sigma, 0))
    return out


def _arrival_matrix(log_: EventLog):
    n_anchor, n_node = len(log_.anchors), log_.num_nodes
    arrival = np.full((n_anchor, n_node), np.inf)
    acq = np.full((n_anchor, n_node), np.nan)
    # log is arrival-sorted: write in reverse so the earliest copy wins
    rev = slice(None, None, -1)
    arrival[log_.anchor_index[rev], log_.node_id[rev]] = log_.arrival_ms[rev]
    acq[log_.anchor_index[rev], log_.node_id[rev]] = log_.acquisition_ms[rev]
    present = np.isfinite(arrival)
    duplicates = len(log_) - int(present.sum())
    return arrival, acq, present, duplicates


def _live_deadlines(
    log_: EventLog, n_sigma: float, est_config: EstimatorConfig
) -> tuple[np.ndarray, list[LatencyEstimate]]:
    """Deadlines from online estimators fed causally.

    Before closing anchor ``k`` each estimator has seen exactly the messages
    that reached the cloud by the anchor instant.
    """
    estimators = [LatencyEstimator(est_config) for _ in range(log_.num_nodes)]
    arrivals = log_.arrival_ms.tolist()
    latencies = (log_.arrival_ms - log_.acquisition_ms).tolist()
    nodes = log_.node_id.tolist()
    deadlines = np.empty(len(log_.anchors))
    ptr, total = 0, len(arrivals)
    for k, anchor in enumerate(log_.anchors.tolist()):
        while ptr < total and arrivals[ptr] <= anchor:
            estimators[nodes[ptr]].observe(max(latencies[ptr], 0.0))
            ptr += 1
        deadlines[k] = compute_deadline(anchor, [e.estimate() for e in estimators], n_sigma)
    return deadlines, [e.estimate() for e in estimators]


def schedule_log(
    log_: EventLog,
    config: SchedulerConfig | None = None,
    estimates: Sequence[LatencyEstimate] | None = None,
    estimator_config: EstimatorConfig | None = None,
) -> BatchTable:
    """Close every anchor of ``log_``.

    With ``estimates`` given the estimators are frozen at those values
    (oracle mode); otherwise each node gets a live sliding-window estimator.
    """
    config = config or SchedulerConfig()
    if estimates is not None:
        if len(estimates) != log_.num_nodes:
            raise ConfigError("need one estimate per node")
        span = compute_deadline(0.0, estimates, config.n_sigma)
        deadlines = log_.anchors + span
        final = list(estimates)
    else:
        deadlines, final = _live_deadlines(
            log_, config.n_sigma, estimator_config or EstimatorConfig()
        )

    arrival, acq, present, duplicates = _arrival_matrix(log_)
    all_in = arrival.max(axis=1)
    if config.mode is SchedulerMode.ADAPTIVE:
        trigger = np.minimum(all_in, deadlines)
    else:
        trigger = all_in
    normal = present & (arrival <= trigger[:, None])
    n_normal = normal.sum(axis=1)
    n_present = present.sum(axis=1)
    with np.errstate(invalid="ignore"):
        acq_min = np.where(n_present > 0, np.nanmin(np.where(present, acq, np.inf), axis=1), np.nan)
        acq_max = np.where(n_present > 0, np.nanmax(np.where(present, acq, -np.inf), axis=1), np.nan)
    if duplicates:
        log.info("%d duplicate message(s) ignored (earliest arrival kept)", duplicates)
    return BatchTable(
        anchor_ms=log_.anchors.copy(),
        deadline_ms=np.asarray(deadlines, dtype=float),
        trigger_ms=trigger,
        full_match=n_normal == log_.num_nodes,
        n_normal=n_normal,
        n_late=n_present - n_normal,
        acq_min_ms=acq_min,
        acq_max_ms=acq_max,
        n_acq=n_present,
        duplicates=duplicates,
        estimates=final,
    )


def schedule_batches(
    log_: EventLog,
    config: SchedulerConfig | None = None,
    estimates: Sequence[LatencyEstimate] | None = None,
    estimator_config: EstimatorConfig | None = None,
) -> list[AnchorBatch]:
    """Message-by-message route producing one :class:`AnchorBatch` per anchor.

    Slow; intended for small logs, post-fusion hooks and cross-checks of
    :func:`schedule_log`.
    """
    config = config or SchedulerConfig()
    table = schedule_log(log_, config, estimates, estimator_config)
    per_anchor: list[list[SensorMessage]] = [[] for _ in log_.anchors]
    for k, msg in zip(log_.anchor_index.tolist(), log_):
        per_anchor[k].append(msg)
    nodes = range(log_.num_nodes)
    return [
        classify_and_trigger(float(a), float(d), msgs, nodes, config)
        for a, d, msgs in zip(log_.anchors, table.deadline_ms, per_anchor)
    ]


# -- metrics ---------------------------------------------------------------


class ReactionStats(NamedTuple):
    mean: float
    p50: float
    p99: float
    max: float
    count: int


def _column(batches, table_attr: str, batch_fn) -> np.ndarray:
    if isinstance(batches, BatchTable):
        return np.asarray(getattr(batches, table_attr))
    return np.asarray([batch_fn(b) for b in batches])


def full_match_rate(batches: BatchTable | Sequence[AnchorBatch]) -> float:
    fm = _column(batches, "full_match", lambda b: b.full_match)
    if len(fm) == 0:
        raise ConfigError("full_match_rate needs at least one batch")
    return float(fm.mean())


def reaction_times(batches: BatchTable | Sequence[AnchorBatch]) -> np.ndarray:
    return _column(batches, "reaction_ms", lambda b: b.reaction_time).astype(float)


def reaction_time_stats(batches: BatchTable | Sequence[AnchorBatch]) -> ReactionStats:
    rt = reaction_times(batches)
    if len(rt) == 0:
        raise ConfigError("reaction_time_stats needs at least one batch")
    # a NaiveWaitAll anchor with a lost message never fires (inf); interpolating
    # across inf gives nan, so fall back to an order-statistic quantile
    method = "linear" if np.all(np.isfinite(rt)) else "inverted_cdf"
    p50, p99 = np.percentile(rt, [50, 99], method=method)
    return ReactionStats(float(rt.mean()), float(p50), float(p99), float(rt.max()), len(rt))


def min_max_delay(batches: BatchTable | Sequence[AnchorBatch]) -> np.ndarray:
    """Spread of acquisition times per anchor; anchors with < 2 frames skipped."""
    if isinstance(batches, BatchTable):
        ok = batches.n_acq >= 2
        spread = (batches.acq_max_ms - batches.acq_min_ms)[ok]
    else:
        acqs = [b.acquisitions for b in batches]
        ok = np.array([len(a) >= 2 for a in acqs], dtype=bool)
        spread = np.array([max(a) - min(a) for a in acqs if len(a) >= 2], dtype=float)
    skipped = int((~ok).sum())
    if skipped:
        log.warning("min_max_delay: %d anchor(s) with fewer than 2 acquisitions skipped", skipped)
    return spread


def timing_errors(log_: EventLog) -> np.ndarray:
    return log_.timing_errors


def timing_error_histogram(log_: EventLog | np.ndarray, bin_width: float = 1.0, lo=None, hi=None):
    """Histogram rows ``(bin_low_ms, bin_high_ms, count)`` of acquisition - anchor."""
    errors = log_.timing_errors if isinstance(log_, EventLog) else np.asarray(log_)
    return histogram_rows(errors, bin_width, lo, hi)


@dataclass
class SyncMetrics:
    full_match_rate: float
    reaction: ReactionStats
    min_max_delays: np.ndarray
    timing_errors: np.ndarray


def sync_metrics(log_: EventLog, table: BatchTable) -> SyncMetrics:
    return SyncMetrics(
        full_match_rate(table),
        reaction_time_stats(table),
        min_max_delay(table),
        timing_errors(log_),
    )


def estimates_rows(estimates: Sequence[LatencyEstimate]):
    return [(i, e.mu, e.sigma) for i, e in enumerate(estimates)]


__all__ = [
    "AnchorBatch", "BatchTable", "SchedulerConfig", "SchedulerMode", "ReactionStats",
    "SyncMetrics", "compute_deadline", "classify_and_trigger", "schedule_log",
    "schedule_batches", "oracle_estimates", "full_match_rate", "reaction_time_stats",
    "reaction_times", "min_max_delay", "timing_errors", "timing_error_histogram",
    "sync_metrics", "estimates_rows", "BATCH_SCHEMA", "ESTIMATE_SCHEMA", "HISTOGRAM_SCHEMA",
]
