"""Cloud-side fusion: delay correction, cross-node association, tracking.

Detections from the nodes that made an anchor's window are moved to the
anchor time with a constant-velocity model, clustered greedily across
nodes and merged by confidence-weighted averaging.  Fused objects feed a
nearest-neighbour tracker; messages that missed the window are folded into
existing tracks afterwards with reduced confidence.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .csvio import emit_csv
from .errors import InputError, SequencingError
from .geometry import OrientedBox, normalize_angle

CLASSES = ("car", "bus", "truck", "person", "bicycle")

TRACK_SCHEMA = (
    "anchor_ms", "track_id", "class", "x_m", "y_m", "yaw_rad", "vx_mps", "vy_mps", "status",
)


@dataclass(frozen=True)
class Detection:
    position: tuple[float, float]
    yaw: float
    size: tuple[float, float, float]
    class_label: str
    confidence: float
    node_id: int | str = 0
    timestamp: float = 0.0
    velocity: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        object.__setattr__(self, "size", tuple(float(s) for s in self.size))
        object.__setattr__(self, "yaw", normalize_angle(float(self.yaw)))
        if self.velocity is not None:
            object.__setattr__(self, "velocity", (float(self.velocity[0]), float(self.velocity[1])))
        if len(self.size) != 3 or min(self.size) <= 0:
            raise InputError(f"size components must be > 0, got {self.size}")
        if not 0.0 <= self.confidence <= 1.0:
            raise InputError(f"confidence must lie in [0, 1], got {self.confidence}")
        if self.class_label not in CLASSES:
            raise InputError(f"unknown class {self.class_label!r}")

    @property
    def box(self) -> OrientedBox:
        return OrientedBox(self.position[0], self.position[1], self.size[0], self.size[1], self.yaw)

    def to_record(self) -> dict:
        return asdict(self)

    @classmethod
    def from_record(cls, rec: Mapping) -> "Detection":
        rec = dict(rec)
        vel = rec.get("velocity")
        return cls(
            position=tuple(rec["position"]),
            yaw=rec["yaw"],
            size=tuple(rec["size"]),
            class_label=rec["class_label"],
            confidence=rec["confidence"],
            node_id=rec.get("node_id", 0),
            timestamp=rec.get("timestamp", 0.0),
            velocity=tuple(vel) if vel is not None else None,
        )


@dataclass(frozen=True)
class FusedObject:
    position: tuple[float, float]
    yaw: float
    size: tuple[float, float, float]
    class_label: str
    fused_confidence: float
    contributing_nodes: frozenset
    timestamp: float = 0.0
    velocity: tuple[float, float] | None = None

    @property
    def confidence(self) -> float:
        return self.fused_confidence

    @property
    def box(self) -> OrientedBox:
        return OrientedBox(self.position[0], self.position[1], self.size[0], self.size[1], self.yaw)

    def to_detection(self, node_id="fused") -> Detection:
        return Detection(
            self.position, self.yaw, self.size, self.class_label,
            min(1.0, self.fused_confidence), node_id, self.timestamp, self.velocity,
        )


def motion_correct(det: Detection, target_time: float) -> Detection:
    """Extrapolate ``det`` to ``target_time`` (ms) at constant velocity."""
    if det.velocity is None or target_time == det.timestamp:
        return replace(det, timestamp=target_time)
    dt = (target_time - det.timestamp) / 1000.0
    x, y = det.position
    vx, vy = det.velocity
    return replace(det, position=(x + vx * dt, y + vy * dt), timestamp=target_time)


def _dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _flatten(detections) -> list[tuple[tuple, Detection]]:
    """``((node_id, index), det)`` pairs sorted by that key."""
    if isinstance(detections, Mapping):
        groups = detections.items()
    else:
        by_node: dict = {}
        for d in detections:
            if isinstance(d, Detection):
                by_node.setdefault(d.node_id, []).append(d)
            else:  # a per-node list
                for dd in d:
                    by_node.setdefault(dd.node_id, []).append(dd)
        groups = by_node.items()
    items = [((str(node), i), d) for node, dets in groups for i, d in enumerate(dets)]
    items.sort(key=lambda t: t[0])
    return items


def fuse_cluster(members: Sequence[Detection]) -> FusedObject:
    w = [d.confidence for d in members]
    if sum(w) <= 0:
        w = [1.0] * len(members)
    tot = sum(w)
    x = sum(wi * d.position[0] for wi, d in zip(w, members)) / tot
    y = sum(wi * d.position[1] for wi, d in zip(w, members)) / tot
    size = tuple(sum(wi * d.size[k] for wi, d in zip(w, members)) / tot for k in range(3))
    sx = sum(wi * math.sin(d.yaw) for wi, d in zip(w, members))
    cx = sum(wi * math.cos(d.yaw) for wi, d in zip(w, members))
    if math.hypot(sx, cx) > 1e-12:
        yaw = math.atan2(sx, cx)
    else:
        yaw = max(members, key=lambda d: d.confidence).yaw
    moving = [(wi, d.velocity) for wi, d in zip(w, members) if d.velocity is not None]
    velocity = None
    if moving:
        if sum(wi for wi, _ in moving) <= 0:
            moving = [(1.0, v) for _, v in moving]
        wt = sum(wi for wi, _ in moving)
        velocity = (
            sum(wi * v[0] for wi, v in moving) / wt,
            sum(wi * v[1] for wi, v in moving) / wt,
        )
    miss = 1.0
    for d in members:
        miss *= 1.0 - d.confidence
    return FusedObject(
        position=(x, y),
        yaw=normalize_angle(yaw),
        size=size,
        class_label=members[0].class_label,
        fused_confidence=min(1.0, 1.0 - miss),
        contributing_nodes=frozenset(d.node_id for d in members),
        timestamp=max(d.timestamp for d in members),
        velocity=velocity,
    )


def associate_and_fuse(detections, gate: float = 2.0) -> list[FusedObject]:
    """Cluster detections across nodes and merge each cluster.

    ``detections`` is a mapping ``node_id -> list`` or an iterable of
    per-node lists / detections.  Clusters hold at most one detection per
    node, share a class, and have every member pair within ``gate`` metres;
    candidate pairs are merged in ascending distance with ties broken by
    ``(node_id, index)``.
    """
    items = _flatten(detections)
    n = len(items)
    cluster = list(range(n))
    members: dict[int, list[int]] = {i: [i] for i in range(n)}

    pairs = []
    for i, j in itertools.combinations(range(n), 2):
        (ki, di), (kj, dj) = items[i], items[j]
        if ki[0] == kj[0] or di.class_label != dj.class_label:
            continue
        d = _dist(di.position, dj.position)
        if d <= gate:
            pairs.append((d, ki, kj, i, j))
    pairs.sort()

    for _, _, _, i, j in pairs:
        ci, cj = cluster[i], cluster[j]
        if ci == cj:
            continue
        a, b = members[ci], members[cj]
        if {items[m][0][0] for m in a} & {items[m][0][0] for m in b}:
            continue
        if any(_dist(items[p][1].position, items[q][1].position) > gate for p in a for q in b):
            continue
        keep, drop = (ci, cj) if ci < cj else (cj, ci)
        members[keep] = sorted(members[keep] + members[drop])
        for m in members[drop]:
            cluster[m] = keep
        del members[drop]

    return [fuse_cluster([items[m][1] for m in members[c]]) for c in sorted(members)]


# -- tracking ------------------------------------------------------------------


class TrackStatus(str, enum.Enum):
    TENTATIVE = "Tentative"
    CONFIRMED = "Confirmed"
    DEAD = "Dead"


@dataclass
class TrackerConfig:
    gate: float = 2.0
    alpha: float = 0.6
    confirm_threshold: int = 3
    delete_threshold: int = 5
    late_penalty: float = 0.5


@dataclass
class Track:
    track_id: int
    position: tuple[float, float]
    velocity: tuple[float, float]
    class_label: str
    last_update: float
    hits: int = 1
    misses: int = 0
    status: TrackStatus = TrackStatus.TENTATIVE
    yaw: float = 0.0
    size: tuple[float, float, float] = (1.0, 1.0, 1.0)

    @property
    def state(self) -> tuple[float, float, float, float]:
        return (*self.position, *self.velocity)

    def predict(self, t: float) -> tuple[float, float]:
        dt = (t - self.last_update) / 1000.0
        return (self.position[0] + self.velocity[0] * dt, self.position[1] + self.velocity[1] * dt)

    def to_record(self) -> dict:
        return {
            "track_id": self.track_id,
            "state": {"position": list(self.position), "velocity": list(self.velocity)},
            "class_label": self.class_label,
            "hits": self.hits,
            "misses": self.misses,
            "status": self.status.value,
            "last_update": self.last_update,
        }

    def csv_row(self, anchor_ms: float):
        return (
            anchor_ms, self.track_id, self.class_label, self.position[0], self.position[1],
            self.yaw, self.velocity[0], self.velocity[1], self.status.value,
        )


def _greedy_pairs(tracks: Sequence[Track], objects: Sequence, t: float, gate: float):
    cands = []
    for ti, tr in enumerate(tracks):
        pred = tr.predict(t)
        for oi, ob in enumerate(objects):
            if ob.class_label != tr.class_label:
                continue
            d = _dist(pred, ob.position)
            if d <= gate:
                cands.append((d, tr.track_id, oi, ti))
    cands.sort()
    used_t, used_o, out = set(), set(), []
    for _, _, oi, ti in cands:
        if ti in used_t or oi in used_o:
            continue
        used_t.add(ti)
        used_o.add(oi)
        out.append((ti, oi))
    return out


class Tracker:
    """Global multi-object tracker on a constant-velocity model.

    Anchors must be processed in strictly increasing time.  Track ids are
    never reused; dead tracks move to ``retired``.
    """

    def __init__(self, config: TrackerConfig | None = None):
        self.config = config or TrackerConfig()
        self.tracks: list[Track] = []
        self.retired: list[Track] = []
        self.time: float | None = None
        self._ids = itertools.count()

    def _spawn(self, ob, t: float) -> Track:
        vel = ob.velocity if ob.velocity is not None else (0.0, 0.0)
        tr = Track(next(self._ids), tuple(ob.position), tuple(vel), ob.class_label, t,
                   yaw=ob.yaw, size=tuple(ob.size))
        self._refresh(tr)
        return tr

    def _refresh(self, tr: Track) -> None:
        cfg = self.config
        if tr.misses >= cfg.delete_threshold:
            tr.status = TrackStatus.DEAD
        elif tr.hits >= cfg.confirm_threshold:
            tr.status = TrackStatus.CONFIRMED

    def step(self, fused_objects: Sequence, anchor_time: float) -> list[Track]:
        if self.time is not None and anchor_time <= self.time:
            raise SequencingError(f"anchor {anchor_time} not after {self.time}")
        cfg = self.config
        matches = _greedy_pairs(self.tracks, fused_objects, anchor_time, cfg.gate)
        matched_t = {ti for ti, _ in matches}
        matched_o = {oi for _, oi in matches}
        for ti, oi in matches:
            tr, ob = self.tracks[ti], fused_objects[oi]
            dt = (anchor_time - tr.last_update) / 1000.0
            px, py = tr.predict(anchor_time)
            nx = px + cfg.alpha * (ob.position[0] - px)
            ny = py + cfg.alpha * (ob.position[1] - py)
            if dt > 0:
                tr.velocity = ((nx - tr.position[0]) / dt, (ny - tr.position[1]) / dt)
            tr.position = (nx, ny)
            tr.yaw, tr.size = ob.yaw, tuple(ob.size)
            tr.last_update = anchor_time
            tr.hits += 1
            tr.misses = 0
            self._refresh(tr)
        for ti, tr in enumerate(self.tracks):
            if ti not in matched_t:
                tr.misses += 1
                self._refresh(tr)
        alive = [tr for tr in self.tracks if tr.status is not TrackStatus.DEAD]
        self.retired.extend(tr for tr in self.tracks if tr.status is TrackStatus.DEAD)
        for oi, ob in enumerate(fused_objects):
            if oi not in matched_o:
                alive.append(self._spawn(ob, anchor_time))
        self.tracks = alive
        self.time = anchor_time
        return self.tracks

    def post_fuse_late(self, late_dets: Iterable[Detection], fusion_time: float) -> list[Track]:
        """Fold late detections into existing tracks; they never spawn tracks."""
        if self.time is not None and fusion_time < self.time:
            raise SequencingError(f"post-fusion at {fusion_time} precedes tracker time {self.time}")
        cfg = self.config
        corrected = [
            replace(motion_correct(d, fusion_time), confidence=d.confidence * cfg.late_penalty)
            for d in late_dets
        ]
        for ti, oi in _greedy_pairs(self.tracks, corrected, fusion_time, cfg.gate):
            tr, det = self.tracks[ti], corrected[oi]
            gain = cfg.alpha * det.confidence
            px, py = tr.predict(fusion_time)
            tr.position = (px + gain * (det.position[0] - px), py + gain * (det.position[1] - py))
            tr.last_update = fusion_time
        self.time = fusion_time if self.time is None else max(self.time, fusion_time)
        return self.tracks

    def csv_rows(self, anchor_ms: float | None = None):
        t = self.time if anchor_ms is None else anchor_ms
        return [tr.csv_row(t) for tr in self.tracks]


def track_step(tracker: Tracker, fused_objects: Sequence, anchor_time: float) -> list[Track]:
    return tracker.step(fused_objects, anchor_time)


def post_fuse_late(tracker: Tracker, late_dets: Iterable[Detection], fusion_time: float) -> list[Track]:
    return tracker.post_fuse_late(late_dets, fusion_time)


def fuse_anchor(
    tracker: Tracker,
    anchor_time: float,
    normal: Iterable[Detection],
    late: Iterable[Detection] = (),
    gate: float | None = None,
) -> list[FusedObject]:
    """One cloud cycle: correct, fuse and track normal data, then post-fuse late data.

    ``late`` holds detections from earlier anchors that arrived after their
    own window closed.
    """
    gate = tracker.config.gate if gate is None else gate
    corrected = [motion_correct(d, anchor_time) for d in normal]
    fused = associate_and_fuse(corrected, gate)
    tracker.step(fused, anchor_time)
    late = list(late)
    if late:
        tracker.post_fuse_late(late, anchor_time)
    return fused


# -- line-delimited interchange -------------------------------------------------


def write_jsonl(records: Iterable, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for r in records:
            rec = r.to_record() if hasattr(r, "to_record") else r
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def read_detections(path: str | Path) -> list[Detection]:
    with open(path) as fh:
        return [Detection.from_record(json.loads(line)) for line in fh if line.strip()]


def write_track_csv(rows, path: str | Path) -> Path:
    return emit_csv(rows, TRACK_SCHEMA, path)
