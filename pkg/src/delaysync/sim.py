"""Deterministic discrete-event kernel for anchor-triggered sensor nodes.

Every node is triggered at globally agreed time anchors, timestamps its
frame, and ships a message to the cloud after a random end-to-end latency
drawn from a normal/abnormal Gaussian mixture.  All randomness comes from
per-node substreams keyed on ``(seed, node_id)``, so adding a node never
perturbs the draws of the others.

Times are float milliseconds on the global (NTP-disciplined) clock.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np

from .errors import ConfigError

JITTER_TRUNCATION_MS = 10.0

# per-node stream slots; each keys its own SeedSequence
_PHASE, _TRIGGER, _LATENCY, _LOSS = range(4)


class TriggerMode(str, enum.Enum):
    SYNCHRONIZED = "Synchronized"
    NAIVE_ASYNC = "NaiveAsync"

    @classmethod
    def parse(cls, value: "TriggerMode | str") -> "TriggerMode":
        if isinstance(value, cls):
            return value
        for member in cls:
            if str(value).lower() in (member.value.lower(), member.name.lower()):
                return member
        raise ConfigError(f"unknown trigger_mode {value!r}")


@dataclass(frozen=True)
class NodeProfile:
    """Statistical latency model of one sensor node.

    ``phase_offset`` only matters in NaiveAsync mode.  ``None`` means it is
    drawn once per run, uniform on ``[0, anchor_interval)``.  ``loss_prob``
    is true message loss (the message never arrives); abnormal latency is
    the normal way to model "drops".
    """

    normal_mu: float = 50.0
    normal_sigma: float = 10.0
    abnormal_mu: float = 200.0
    abnormal_sigma: float = 20.0
    abnormal_prob: float = 0.0
    phase_offset: float | None = None
    loss_prob: float = 0.0

    def validate(self, anchor_interval: float | None = None) -> None:
        for name in ("normal_sigma", "abnormal_sigma"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("abnormal_prob", "loss_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {p}")
        if self.phase_offset is not None:
            if self.phase_offset < 0 or (
                anchor_interval is not None and self.phase_offset >= anchor_interval
            ):
                raise ConfigError("phase_offset must lie in [0, anchor_interval)")


@dataclass
class SimConfig:
    num_nodes: int = 8
    anchor_interval: float = 100.0
    duration: float = 1000.0
    trigger_mode: TriggerMode = TriggerMode.SYNCHRONIZED
    trigger_jitter_sigma: float = 1.7
    node_profiles: list[NodeProfile] = field(default_factory=list)
    seed: int = 0
    start: float = 0.0

    def __post_init__(self) -> None:
        self.trigger_mode = TriggerMode.parse(self.trigger_mode)
        self.node_profiles = [
            p if isinstance(p, NodeProfile) else NodeProfile(**p) for p in self.node_profiles
        ]

    def validate(self) -> None:
        if self.num_nodes < 1:
            raise ConfigError("num_nodes must be >= 1")
        if self.anchor_interval <= 0:
            raise ConfigError("anchor_interval must be > 0")
        if self.trigger_jitter_sigma < 0:
            raise ConfigError("trigger_jitter_sigma must be >= 0")
        if self.duration < self.anchor_interval:
            raise ConfigError("duration must be >= anchor_interval")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.node_profiles and len(self.node_profiles) not in (1, self.num_nodes):
            raise ConfigError(
                f"expected 1 or {self.num_nodes} node_profiles, got {len(self.node_profiles)}"
            )
        for p in self.node_profiles:
            p.validate(self.anchor_interval)

    def profile(self, node_id: int) -> NodeProfile:
        if not self.node_profiles:
            return NodeProfile()
        if len(self.node_profiles) == 1:
            return self.node_profiles[0]
        return self.node_profiles[node_id]

    def with_(self, **changes: Any) -> "SimConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class SensorMessage:
    node_id: int
    anchor_time: float
    acquisition_time: float
    arrival_time: float
    payload: tuple = ()


def schedule_anchors(start: float, duration: float, interval: float) -> list[float]:
    """Uniformly spaced anchors from ``start`` to ``start + duration`` inclusive."""
    if interval <= 0:
        raise ConfigError("anchor interval must be > 0")
    if duration < 0:
        raise ConfigError("duration must be >= 0")
    count = int(math.floor(duration / interval + 1e-9)) + 1
    return [start + k * interval for k in range(count)]


def node_stream(seed: int, node_id: int, slot: int) -> np.random.Generator:
    """Generator for one purpose (phase, trigger, latency, loss) of one node."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(node_id), slot)))


def _truncated_normal(rng: np.random.Generator, sigma: float, size, bound: float):
    if sigma == 0:
        return np.zeros(size) if size is not None else 0.0
    out = rng.normal(0.0, sigma, size)
    if size is None:
        while abs(out) > bound:
            out = rng.normal(0.0, sigma)
        return float(out)
    bad = np.abs(out) > bound
    while bad.any():
        out[bad] = rng.normal(0.0, sigma, int(bad.sum()))
        bad = np.abs(out) > bound
    return out


def naive_offset(anchor, phase_offset: float, interval: float):
    """Signed offset from ``anchor`` to the nearest free-running tick.

    Ticks sit at ``phase_offset + m * interval``; the result lies in
    ``(-interval/2, interval/2]``.
    """
    err = np.mod(phase_offset - np.asarray(anchor, dtype=float), interval)
    err = np.where(err > interval / 2, err - interval, err)
    return err if np.ndim(err) else float(err)


def sample_acquisition(
    anchor,
    node: NodeProfile,
    mode: TriggerMode | str,
    rng: np.random.Generator,
    *,
    interval: float = 100.0,
    jitter_sigma: float = 1.7,
):
    """Acquisition time of the frame a node associates with ``anchor``.

    ``anchor`` may be a scalar or an array of anchors.  NaiveAsync needs a
    fixed ``node.phase_offset``.
    """
    mode = TriggerMode.parse(mode)
    if mode is TriggerMode.SYNCHRONIZED:
        size = None if np.ndim(anchor) == 0 else np.shape(anchor)
        return anchor + _truncated_normal(rng, jitter_sigma, size, JITTER_TRUNCATION_MS)
    if node.phase_offset is None:
        raise ConfigError("NaiveAsync sampling needs a fixed phase_offset")
    return anchor + naive_offset(anchor, node.phase_offset, interval)


def sample_latency(node: NodeProfile, rng: np.random.Generator, size=None):
    """End-to-end latency from the normal/abnormal mixture, clamped at 0."""
    abnormal = rng.random(size) < node.abnormal_prob
    z = rng.standard_normal(size)
    lat = np.where(
        abnormal,
        node.abnormal_mu + node.abnormal_sigma * z,
        node.normal_mu + node.normal_sigma * z,
    )
    lat = np.maximum(lat, 0.0)
    return float(lat) if size is None else lat


@dataclass(eq=False)
class EventLog:
    """All delivered messages of one run, ordered by arrival time.

    Stored column-wise; ``messages`` materialises ``SensorMessage`` objects.
    ``anchor_index`` points into ``anchors``.
    """

    anchors: np.ndarray
    anchor_index: np.ndarray
    node_id: np.ndarray
    acquisition_ms: np.ndarray
    arrival_ms: np.ndarray
    num_nodes: int

    @property
    def anchor_ms(self) -> np.ndarray:
        return self.anchors[self.anchor_index]

    def __len__(self) -> int:
        return len(self.arrival_ms)

    def __iter__(self) -> Iterator[SensorMessage]:
        anchor_ms = self.anchor_ms
        for k in range(len(self)):
            yield SensorMessage(
                int(self.node_id[k]),
                float(anchor_ms[k]),
                float(self.acquisition_ms[k]),
                float(self.arrival_ms[k]),
            )

    @property
    def messages(self) -> list[SensorMessage]:
        return list(self)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventLog):
            return NotImplemented
        return self.num_nodes == other.num_nodes and all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("anchors", "anchor_index", "node_id", "acquisition_ms", "arrival_ms")
        )

    @property
    def latencies(self) -> np.ndarray:
        return self.arrival_ms - self.acquisition_ms

    @property
    def timing_errors(self) -> np.ndarray:
        return self.acquisition_ms - self.anchor_ms

    @classmethod
    def from_messages(
        cls, messages: Sequence[SensorMessage], num_nodes: int | None = None
    ) -> "EventLog":
        anchors = np.unique(np.array([m.anchor_time for m in messages], dtype=float))
        anchor_ms = np.array([m.anchor_time for m in messages], dtype=float)
        node = np.array([m.node_id for m in messages], dtype=np.int64)
        acq = np.array([m.acquisition_time for m in messages], dtype=float)
        arr = np.array([m.arrival_time for m in messages], dtype=float)
        order = np.argsort(arr, kind="stable")
        if num_nodes is None:
            num_nodes = int(node.max()) + 1 if len(node) else 0
        return cls(
            anchors=anchors,
            anchor_index=np.searchsorted(anchors, anchor_ms)[order],
            node_id=node[order],
            acquisition_ms=acq[order],
            arrival_ms=arr[order],
            num_nodes=num_nodes,
        )

    def to_csv(self, path: str | Path) -> None:
        from .csvio import emit_csv

        rows = zip(self.anchor_ms, self.node_id, self.acquisition_ms, self.arrival_ms)
        emit_csv(rows, LOG_SCHEMA, path, precision=12)

    @classmethod
    def from_csv(cls, path: str | Path, num_nodes: int | None = None) -> "EventLog":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            msgs = [
                SensorMessage(
                    int(r["node_id"]),
                    float(r["anchor_ms"]),
                    float(r["acquisition_ms"]),
                    float(r["arrival_ms"]),
                )
                for r in reader
            ]
        return cls.from_messages(msgs, num_nodes)


LOG_SCHEMA = ("anchor_ms", "node_id", "acquisition_ms", "arrival_ms")


def resolve_phase_offsets(config: SimConfig) -> list[float]:
    """Per-node phase offsets for this run (drawn where not fixed)."""
    out = []
    for node_id in range(config.num_nodes):
        prof = config.profile(node_id)
        if prof.phase_offset is not None:
            out.append(prof.phase_offset)
        else:
            rng = node_stream(config.seed, node_id, _PHASE)
            out.append(float(rng.uniform(0.0, config.anchor_interval)))
    return out


def run_simulation(config: SimConfig) -> EventLog:
    """Emit one message per (anchor, node) and deliver them to the cloud.

    Pure function of ``config``: the same seed gives a bit-identical log.
    """
    config.validate()
    anchors = np.asarray(
        schedule_anchors(config.start, config.duration, config.anchor_interval), dtype=float
    )
    n_anchor = len(anchors)
    idx_cols, node_cols, acq_cols, arr_cols = [], [], [], []
    naive = config.trigger_mode is TriggerMode.NAIVE_ASYNC
    phases = resolve_phase_offsets(config) if naive else [None] * config.num_nodes
    for node_id in range(config.num_nodes):
        prof = config.profile(node_id)
        if naive:
            prof = replace(prof, phase_offset=phases[node_id])
        trig_rng = None
        if not naive and config.trigger_jitter_sigma > 0:
            trig_rng = node_stream(config.seed, node_id, _TRIGGER)
        acq = sample_acquisition(
            anchors,
            prof,
            config.trigger_mode,
            trig_rng,
            interval=config.anchor_interval,
            jitter_sigma=config.trigger_jitter_sigma,
        )
        arr = acq + sample_latency(prof, node_stream(config.seed, node_id, _LATENCY), n_anchor)
        keep = np.ones(n_anchor, dtype=bool)
        if prof.loss_prob > 0:
            keep = node_stream(config.seed, node_id, _LOSS).random(n_anchor) >= prof.loss_prob
        idx_cols.append(np.arange(n_anchor)[keep])
        node_cols.append(np.full(int(keep.sum()), node_id, dtype=np.int64))
        acq_cols.append(acq[keep])
        arr_cols.append(arr[keep])

    anchor_index = np.concatenate(idx_cols)
    node_id = np.concatenate(node_cols)
    acq = np.concatenate(acq_cols)
    arr = np.concatenate(arr_cols)
    # anchor-major, node-minor before the stable arrival sort fixes tie order
    base = np.lexsort((node_id, anchor_index))
    order = base[np.argsort(arr[base], kind="stable")]
    return EventLog(
        anchors=anchors,
        anchor_index=anchor_index[order],
        node_id=node_id[order],
        acquisition_ms=acq[order],
        arrival_ms=arr[order],
        num_nodes=config.num_nodes,
    )
