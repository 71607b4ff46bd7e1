"""Synthetic cooperative-perception scenes and early/late fusion pipelines.

Detection is modelled at the LiDAR point-budget level: each class has a
point count at a 10 m reference range that falls off with the inverse
square of range, and a detector fires once enough points are visible.
Early fusion pools points across nodes before detecting; late fusion
detects per node and merges the boxes with NMS.

Randomness for frame ``f`` seen by node ``n`` comes from its own substream
keyed on ``(seed, f, n)``.  Early and late fusion consume the same
per-node draws, so the two pipelines see the same sensor noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .fusion import CLASSES, Detection
from .geometry import (
    DrivableMap,
    OrientedBox,
    bandwidth_early,
    bandwidth_late,
    in_drivable_area,
    nms,
    normalize_angle,
)

REF_RANGE_M = 10.0

BASE_POINTS = {"car": 390, "truck": 635, "bus": 1880, "person": 21, "bicycle": 67}

# length, width, height in metres
CLASS_DIMS = {
    "car": (4.5, 1.8, 1.5),
    "truck": (8.0, 2.5, 3.2),
    "bus": (12.0, 2.6, 3.2),
    "person": (0.7, 0.7, 1.7),
    "bicycle": (1.8, 0.6, 1.3),
}

FP_CONFIDENCE = (0.3, 0.8)


@dataclass
class SceneObject:
    """An object moving along a polyline at constant speed.

    A single waypoint makes the object static (heading ``yaw``).  With
    ``loop`` the path is closed and the object circulates.  ``phase`` is
    the arc length travelled at time 0; ``None`` draws it from the scene
    seed.
    """

    object_id: int
    class_label: str
    waypoints: list[tuple[float, float]]
    speed: float = 0.0
    yaw: float = 0.0
    loop: bool = False
    phase: float | None = 0.0
    size: tuple[float, float, float] | None = None
    base_points: float | None = None

    def __post_init__(self) -> None:
        if self.class_label not in CLASSES:
            raise ConfigError(f"unknown class {self.class_label!r}")
        self.waypoints = [tuple(map(float, w)) for w in self.waypoints]
        if not self.waypoints:
            raise ConfigError("object needs at least one waypoint")
        if self.size is None:
            self.size = CLASS_DIMS[self.class_label]
        self.size = tuple(float(s) for s in self.size)
        if self.base_points is None:
            self.base_points = BASE_POINTS[self.class_label]

    def _segments(self):
        pts = list(self.waypoints)
        if self.loop and len(pts) > 1:
            pts.append(pts[0])
        segs = []
        for a, b in zip(pts[:-1], pts[1:]):
            length = math.hypot(b[0] - a[0], b[1] - a[1])
            if length > 0:
                segs.append((a, b, length))
        return segs

    def path_length(self) -> float:
        return sum(s[2] for s in self._segments())

    def state_at(self, t_ms: float, phase: float = 0.0):
        """``(x, y, yaw, vx, vy)`` at time ``t_ms``."""
        segs = self._segments()
        if not segs or self.speed == 0:
            x, y = self.waypoints[0]
            yaw = self.yaw
            if segs and self.speed == 0:
                s = phase % self.path_length() if self.loop else min(phase, self.path_length())
                return self._locate(segs, s, moving=False)
            return (x, y, normalize_angle(yaw), 0.0, 0.0)
        s = phase + self.speed * t_ms / 1000.0
        total = sum(seg[2] for seg in segs)
        if self.loop:
            s = s % total
            return self._locate(segs, s, moving=True)
        if s >= total:
            return self._locate(segs, total, moving=False)
        return self._locate(segs, max(s, 0.0), moving=True)

    def _locate(self, segs, s, moving):
        for a, b, length in segs:
            if s <= length:
                break
            s -= length
        f = min(max(s / length, 0.0), 1.0)
        x = a[0] + f * (b[0] - a[0])
        y = a[1] + f * (b[1] - a[1])
        yaw = math.atan2(b[1] - a[1], b[0] - a[0])
        v = self.speed if moving else 0.0
        return (x, y, normalize_angle(yaw), v * math.cos(yaw), v * math.sin(yaw))


@dataclass
class NodeModel:
    node_id: int
    position: tuple[float, float]
    fov_center: float = 0.0
    fov_width: float = 2 * math.pi
    max_range: float = 60.0
    pos_noise_sigma: float = 0.05
    miss_rate_base: float = 0.0
    fp_rate: float = 0.0
    fp_outside_map_fraction: float = 0.5

    def __post_init__(self) -> None:
        self.position = (float(self.position[0]), float(self.position[1]))
        if self.max_range <= 0:
            raise ConfigError("max_range must be > 0")
        for name in ("miss_rate_base", "fp_outside_map_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.fp_rate < 0 or self.pos_noise_sigma < 0:
            raise ConfigError("fp_rate and pos_noise_sigma must be >= 0")

    def sees_direction(self, x: float, y: float) -> bool:
        if self.fov_width >= 2 * math.pi:
            return True
        bearing = math.atan2(y - self.position[1], x - self.position[0])
        return abs(normalize_angle(bearing - self.fov_center)) <= self.fov_width / 2


@dataclass(frozen=True)
class TruthObject:
    object_id: int
    box: OrientedBox
    class_label: str
    velocity: tuple[float, float]
    height: float
    base_points: float


@dataclass(frozen=True)
class FrameTruth:
    anchor_time: float
    objects: tuple[TruthObject, ...]
    index: int = 0


@dataclass
class ScenarioConfig:
    name: str = "custom"
    objects: list[SceneObject] = field(default_factory=list)
    nodes: list[NodeModel] = field(default_factory=list)
    num_frames: int = 10
    anchor_interval: float = 100.0
    start: float = 0.0
    detect_threshold: float = 15.0
    occluders: list[OrientedBox] = field(default_factory=list)
    drivable_map: DrivableMap | None = None
    fp_region: tuple[float, float, float, float] | None = None

    def __post_init__(self) -> None:
        self.objects = [o if isinstance(o, SceneObject) else SceneObject(**o) for o in self.objects]
        self.nodes = [n if isinstance(n, NodeModel) else NodeModel(**n) for n in self.nodes]
        self.occluders = [b if isinstance(b, OrientedBox) else OrientedBox(**b) for b in self.occluders]
        if isinstance(self.drivable_map, Mapping):
            self.drivable_map = DrivableMap.from_dict(self.drivable_map)
        if self.num_frames < 1:
            raise ConfigError("num_frames must be >= 1")
        if self.detect_threshold <= 0:
            raise ConfigError("detect_threshold must be > 0")

    def region(self) -> tuple[float, float, float, float]:
        if self.fp_region is not None:
            return tuple(self.fp_region)
        if self.drivable_map is not None:
            pts = np.vstack(self.drivable_map.polygons)
            x0, y0 = pts.min(axis=0)
            x1, y1 = pts.max(axis=0)
            return (x0 - 15, y0 - 15, x1 + 15, y1 + 15)
        return (-50.0, -50.0, 50.0, 50.0)


# -- scene generation ----------------------------------------------------------


def generate_scene(config: ScenarioConfig, seed: int = 0) -> list[FrameTruth]:
    """Ground truth at every anchor; objects with ``phase=None`` start at a seeded arc length."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0xA5,)))
    phases = []
    for obj in config.objects:
        draw = float(rng.uniform(0.0, max(obj.path_length(), 1e-9)))
        phases.append(draw if obj.phase is None else obj.phase)
    frames = []
    for k in range(config.num_frames):
        t = config.start + k * config.anchor_interval
        objs = []
        for obj, ph in zip(config.objects, phases):
            x, y, yaw, vx, vy = obj.state_at(t - config.start, ph)
            l, w, h = obj.size
            objs.append(
                TruthObject(obj.object_id, OrientedBox(x, y, l, w, yaw), obj.class_label,
                            (vx, vy), h, float(obj.base_points))
            )
        frames.append(FrameTruth(t, tuple(objs), k))
    return frames


# -- observation model ---------------------------------------------------------


def _segment_hits_box(p0, p1, box: OrientedBox) -> bool:
    """Liang-Barsky clip of segment p0->p1 against ``box`` in its own frame."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)

    def local(p):
        dx, dy = p[0] - box.x, p[1] - box.y
        return (dx * c + dy * s, -dx * s + dy * c)

    (x0, y0), (x1, y1) = local(p0), local(p1)
    dx, dy = x1 - x0, y1 - y0
    t0, t1 = 0.0, 1.0
    for p, q in (
        (-dx, x0 + box.length / 2),
        (dx, box.length / 2 - x0),
        (-dy, y0 + box.width / 2),
        (dy, box.width / 2 - y0),
    ):
        if p == 0:
            if q < 0:
                return False
        else:
            t = q / p
            if p < 0:
                t0 = max(t0, t)
            else:
                t1 = min(t1, t)
            if t0 > t1:
                return False
    return True


def visible_fraction(obj: TruthObject, node: NodeModel, occluders: Sequence[OrientedBox]) -> float:
    """Share of a 3x3 footprint sample grid with clear line of sight."""
    if not occluders:
        return 1.0
    box = obj.box
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    clear = 0
    samples = [(u, v) for u in (-1 / 3, 0.0, 1 / 3) for v in (-1 / 3, 0.0, 1 / 3)]
    for u, v in samples:
        lx, ly = u * box.length, v * box.width
        p = (box.x + lx * c - ly * s, box.y + lx * s + ly * c)
        if not any(_segment_hits_box(node.position, p, occ) for occ in occluders):
            clear += 1
    return clear / len(samples)


def visible_points(
    obj: TruthObject, node: NodeModel, occluders: Sequence[OrientedBox] = ()
) -> float:
    """Expected LiDAR returns on ``obj`` at ``node``; 0 outside FOV or range."""
    x, y = obj.box.center
    r = math.hypot(x - node.position[0], y - node.position[1])
    if r > node.max_range or not node.sees_direction(x, y):
        return 0.0
    pts = obj.base_points * (REF_RANGE_M / max(r, REF_RANGE_M)) ** 2
    return pts * visible_fraction(obj, node, occluders)


def frame_rng(seed: int, frame_index: int, node_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(frame_index), int(node_id))))


@dataclass
class NodeView:
    """Everything one node draws for one frame.

    Per object: visible points, a uniform miss draw and a standard-normal
    position offset pair.  False positives carry a uniform ``keep`` draw
    that early fusion uses to thin them.
    """

    node: NodeModel
    points: np.ndarray
    miss_u: np.ndarray
    noise: np.ndarray
    false_positives: list[tuple[Detection, float]]


def _sample_fp_position(rng, region, drivable: DrivableMap | None, outside: bool):
    x0, y0, x1, y1 = region
    x = y = 0.0
    for _ in range(1000):
        x, y = rng.uniform(x0, x1), rng.uniform(y0, y1)
        if drivable is None or in_drivable_area((x, y), drivable) != outside:
            break
    return float(x), float(y)


def node_view(
    frame: FrameTruth, node: NodeModel, rng: np.random.Generator, config: ScenarioConfig
) -> NodeView:
    n = len(frame.objects)
    points = np.array([visible_points(o, node, config.occluders) for o in frame.objects], dtype=float)
    miss_u = rng.random(n)
    noise = rng.standard_normal((n, 2))
    fps = []
    region = config.region()
    for _ in range(int(rng.poisson(node.fp_rate)) if node.fp_rate > 0 else 0):
        outside = bool(rng.random() < node.fp_outside_map_fraction)
        cls = CLASSES[int(rng.integers(len(CLASSES)))]
        x, y = _sample_fp_position(rng, region, config.drivable_map, outside)
        yaw = float(rng.uniform(-math.pi, math.pi))
        conf = float(rng.uniform(*FP_CONFIDENCE))
        keep = float(rng.random())
        det = Detection((x, y), yaw, CLASS_DIMS[cls], cls, conf, node.node_id, frame.anchor_time)
        fps.append((det, keep))
    return NodeView(node, points, miss_u, noise, fps)


def _confidence(points: float, threshold: float) -> float:
    return min(1.0, points / (2.0 * threshold))


def _detection(obj: TruthObject, offset, conf: float, node_id, t: float) -> Detection:
    b = obj.box
    return Detection(
        (b.x + offset[0], b.y + offset[1]), b.yaw, (b.length, b.width, obj.height),
        obj.class_label, conf, node_id, t, obj.velocity,
    )


def detections_from_view(frame: FrameTruth, view: NodeView, threshold: float) -> list[Detection]:
    node = view.node
    out = []
    for j, obj in enumerate(frame.objects):
        pts = view.points[j]
        if pts >= threshold and view.miss_u[j] >= node.miss_rate_base:
            offset = node.pos_noise_sigma * view.noise[j]
            out.append(_detection(obj, offset, _confidence(pts, threshold), node.node_id, frame.anchor_time))
    out.extend(det for det, _ in view.false_positives)
    return out


def observe(
    frame: FrameTruth,
    node: NodeModel,
    rng: np.random.Generator | None = None,
    config: ScenarioConfig | None = None,
    seed: int = 0,
) -> list[Detection]:
    """Single-node detections for ``frame`` (true positives, then false positives)."""
    config = config or ScenarioConfig()
    rng = rng if rng is not None else frame_rng(seed, frame.index, node.node_id)
    return detections_from_view(frame, node_view(frame, node, rng, config), config.detect_threshold)


def _views(frame, nodes, config, seed):
    return [node_view(frame, n, frame_rng(seed, frame.index, n.node_id), config) for n in nodes]


def early_from_views(frame: FrameTruth, views: Sequence[NodeView], threshold: float) -> list[Detection]:
    if not views:
        return []
    out = []
    for j, obj in enumerate(frame.objects):
        contrib = [v for v in views if v.points[j] > 0]
        if not contrib:
            continue
        total = float(sum(v.points[j] for v in contrib))
        all_missed = all(v.miss_u[j] < v.node.miss_rate_base for v in contrib)
        if total < threshold or all_missed:
            continue
        offset = np.mean([v.node.pos_noise_sigma * v.noise[j] for v in contrib], axis=0)
        node_id = contrib[0].node.node_id if len(views) == 1 else "early"
        out.append(_detection(obj, offset, _confidence(total, threshold), node_id, frame.anchor_time))
    keep_p = 1.0 / len(views)
    for v in views:
        out.extend(det for det, keep in v.false_positives if keep < keep_p)
    return out


def early_fusion_detect(
    frame: FrameTruth, nodes: Sequence[NodeModel], config: ScenarioConfig | None = None, seed: int = 0
) -> list[Detection]:
    """Detect once on the pooled point budget of every node.

    Offsets are the mean of the contributing nodes' offsets, so equal-noise
    nodes give a sigma / sqrt(k) error.  The object is lost only if every
    contributing node would have missed it.  Each node's false positives
    survive with probability 1 / len(nodes).
    """
    config = config or ScenarioConfig()
    return early_from_views(frame, _views(frame, nodes, config, seed), config.detect_threshold)


def late_from_views(
    frame: FrameTruth, views: Sequence[NodeView], threshold: float, iou_threshold: float = 0.3
) -> list[Detection]:
    dets = [d for v in views for d in detections_from_view(frame, v, threshold)]
    keep = nms([(d.box, d.confidence, d.class_label) for d in dets], iou_threshold)
    return [dets[i] for i in sorted(keep)]


def late_fusion_detect(
    frame: FrameTruth,
    nodes: Sequence[NodeModel],
    iou_threshold: float = 0.3,
    config: ScenarioConfig | None = None,
    seed: int = 0,
) -> list[Detection]:
    """Per-node detection followed by per-class NMS over the pooled boxes."""
    config = config or ScenarioConfig()
    return late_from_views(frame, _views(frame, nodes, config, seed), config.detect_threshold, iou_threshold)


@dataclass
class PipelineOutput:
    early: dict[float, list[Detection]]
    late: dict[float, list[Detection]]
    early_bytes: list[int]
    late_bytes: list[int]


def run_pipelines(
    config: ScenarioConfig, frames: Sequence[FrameTruth], seed: int = 0, iou_threshold: float = 0.3
) -> PipelineOutput:
    """Both fusion pipelines over ``frames`` on shared node draws, plus per-frame bytes."""
    early, late, eb, lb = {}, {}, [], []
    thr = config.detect_threshold
    for frame in frames:
        views = _views(frame, config.nodes, config, seed)
        early[frame.anchor_time] = early_from_views(frame, views, thr)
        late[frame.anchor_time] = late_from_views(frame, views, thr, iou_threshold)
        eb.append(bandwidth_early(int(sum(int(math.floor(p)) for v in views for p in v.points))))
        lb.append(bandwidth_late(sum(len(detections_from_view(frame, v, thr)) for v in views)))
    return PipelineOutput(early, late, eb, lb)


# -- canned scenarios ----------------------------------------------------------


def _circle(cx, cy, r, n=48):
    return [(cx + r * math.cos(2 * math.pi * k / n), cy + r * math.sin(2 * math.pi * k / n)) for k in range(n)]


def _roundabout(rng, noise: dict) -> dict:
    # ring road between r=10 and r=20 plus four straight arms
    outer, island = _circle(0, 0, 20), _circle(0, 0, 10)
    arms = [
        [(18, -5), (55, -5), (55, 5), (18, 5)],
        [(-55, -5), (-18, -5), (-18, 5), (-55, 5)],
        [(-5, 18), (5, 18), (5, 55), (-5, 55)],
        [(-5, -55), (5, -55), (5, -18), (-5, -18)],
    ]
    drivable = {"polygons": [{"name": "ring", "vertices": outer}]
                + [{"name": f"arm{i}", "vertices": a} for i, a in enumerate(arms)],
                "holes": [{"name": "island", "vertices": island}]}
    ring_path = _circle(0, 0, 15, n=64)
    objects, oid = [], 0
    for cls in ("car", "car", "car", "bicycle"):
        objects.append(dict(object_id=oid, class_label=cls, waypoints=ring_path, loop=True,
                            speed=float(rng.uniform(4, 8)) if cls == "car" else 3.0, phase=None))
        oid += 1
    for cls, path in (("truck", [(50, 2.5), (22, 2.5)]), ("bus", [(-2.5, 50), (-2.5, 22)]),
                      ("car", [(-22, -2.5), (-50, -2.5)])):
        objects.append(dict(object_id=oid, class_label=cls, waypoints=path,
                            speed=float(rng.uniform(3, 6)), phase=float(rng.uniform(0, 6))))
        oid += 1
    for path in ([(30, -3.5), (30, 3.5)], [(-3.5, -30), (3.5, -30)], [(-30, 3.5), (-30, -3.5)]):
        objects.append(dict(object_id=oid, class_label="person", waypoints=path, loop=True,
                            speed=1.2, phase=None))
        oid += 1
    objects.append(dict(object_id=oid, class_label="bicycle", waypoints=[(3, 25), (3, 50)],
                        speed=4.0, phase=float(rng.uniform(0, 10))))
    corners = [(25, 25), (-25, 25), (-25, -25), (25, -25), (35, 9), (-9, 35), (-35, -9), (9, -35)]
    nodes = [dict(node_id=i, position=p, max_range=60.0, **noise) for i, p in enumerate(corners)]
    return dict(objects=objects, nodes=nodes, drivable_map=drivable)


def _crossing(rng, noise: dict) -> dict:
    drivable = {"polygons": [
        {"name": "east_west", "vertices": [(-40, -6), (40, -6), (40, 6), (-40, 6)]},
        {"name": "north_south", "vertices": [(-6, -40), (6, -40), (6, 40), (-6, 40)]},
    ]}
    objects = [
        dict(object_id=0, class_label="car", waypoints=[(-38, -3), (38, -3)], speed=float(rng.uniform(6, 10)), phase=float(rng.uniform(10, 30))),
        dict(object_id=1, class_label="car", waypoints=[(38, 3), (-38, 3)], speed=float(rng.uniform(6, 10)), phase=float(rng.uniform(10, 30))),
        dict(object_id=2, class_label="truck", waypoints=[(3, -38), (3, 38)], speed=float(rng.uniform(4, 7)), phase=float(rng.uniform(5, 20))),
        dict(object_id=3, class_label="bus", waypoints=[(-3, 38), (-3, -38)], speed=float(rng.uniform(3, 6)), phase=float(rng.uniform(5, 20))),
        dict(object_id=4, class_label="person", waypoints=[(-9, -5), (-9, 5)], speed=1.3, loop=True, phase=None),
        dict(object_id=5, class_label="person", waypoints=[(9, 5), (9, -5)], speed=1.3, loop=True, phase=None),
        dict(object_id=6, class_label="person", waypoints=[(-5, 12), (5, 12)], speed=1.1, loop=True, phase=None),
        dict(object_id=7, class_label="bicycle", waypoints=[(-38, -5), (38, -5)], speed=4.5, phase=float(rng.uniform(20, 40))),
    ]
    pts = [(12, 12), (-12, 12), (-12, -12), (12, -12), (0, 20), (0, -20), (20, 0), (-20, 0)]
    nodes = [dict(node_id=i, position=p, max_range=60.0, **noise) for i, p in enumerate(pts)]
    return dict(objects=objects, nodes=nodes, drivable_map=drivable)


def split_distances(points_a: float, points_b: float, base: float = BASE_POINTS["person"]):
    """Ranges at which an object with ``base`` reference points shows the given counts."""
    return (REF_RANGE_M * math.sqrt(base / points_a), REF_RANGE_M * math.sqrt(base / points_b))


def _occlusion_split(rng, noise: dict, threshold: float) -> dict:
    # one pedestrian no single node can resolve, a third node behind a wall,
    # and background traffic every node sees well
    pa = float(rng.uniform(0.5, 0.95)) * threshold
    pb = float(rng.uniform(max(threshold - pa, 0.5 * threshold) + 0.2, 0.97 * threshold))
    ra, rb = split_distances(pa, pb)
    px = float(rng.uniform(-2, 2))
    drivable = {"polygons": [{"name": "road", "vertices": [(-40, -7), (40, -7), (40, 7), (-40, 7)]}]}
    objects = [
        dict(object_id=0, class_label="person", waypoints=[(px, 0.0)], yaw=float(rng.uniform(-3, 3))),
        dict(object_id=1, class_label="car", waypoints=[(-30, -3.5), (30, -3.5)], speed=float(rng.uniform(5, 9)), phase=float(rng.uniform(5, 15))),
        dict(object_id=2, class_label="bus", waypoints=[(30, 3.5), (-30, 3.5)], speed=float(rng.uniform(3, 6)), phase=float(rng.uniform(5, 15))),
    ]
    nodes = [
        dict(node_id=0, position=(px - ra, 0.0), max_range=60.0, **noise),
        dict(node_id=1, position=(px + rb, 0.0), max_range=60.0, **noise),
        dict(node_id=2, position=(px, -10.0), max_range=60.0, **noise),
    ]
    occluders = [dict(x=px, y=-8.5, length=4.0, width=0.4, yaw=0.0)]
    return dict(objects=objects, nodes=nodes, drivable_map=drivable, occluders=occluders)


def _full_view(rng, noise: dict) -> dict:
    # every object sits within reference range of a dedicated node
    classes = ["car", "truck", "bus", "person", "bicycle"]
    objects, nodes = [], []
    for i, cls in enumerate(classes):
        x = 30.0 * i
        objects.append(dict(object_id=i, class_label=cls, waypoints=[(x, 0.0)], yaw=float(rng.uniform(-3, 3))))
        nodes.append(dict(node_id=i, position=(x, 8.0), max_range=60.0, **noise))
    drivable = {"polygons": [{"name": "lot", "vertices": [(-15, -15), (135, -15), (135, 15), (-15, 15)]}]}
    return dict(objects=objects, nodes=nodes, drivable_map=drivable)


CANNED = ("roundabout", "crossing", "occlusion_split", "full_view")


def scenario_config(name: str, seed: int = 0, noiseless: bool = False, **overrides: Any) -> ScenarioConfig:
    """Build a canned scenario with a seeded layout.

    Overrides may set any :class:`ScenarioConfig` field or any per-node
    noise field (``pos_noise_sigma``, ``miss_rate_base``, ``fp_rate``,
    ``fp_outside_map_fraction``).
    """
    node_keys = ("pos_noise_sigma", "miss_rate_base", "fp_rate", "fp_outside_map_fraction")
    noise = dict(pos_noise_sigma=0.05, miss_rate_base=0.02, fp_rate=0.3, fp_outside_map_fraction=0.5)
    if noiseless:
        noise = dict(pos_noise_sigma=0.0, miss_rate_base=0.0, fp_rate=0.0, fp_outside_map_fraction=0.0)
    noise.update({k: overrides.pop(k) for k in node_keys if k in overrides})
    threshold = float(overrides.get("detect_threshold", 15.0))
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0x5CE,)))
    if name == "roundabout":
        parts = _roundabout(rng, noise)
    elif name == "crossing":
        parts = _crossing(rng, noise)
    elif name == "occlusion_split":
        parts = _occlusion_split(rng, noise, threshold)
    elif name == "full_view":
        parts = _full_view(rng, noise)
    else:
        raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(CANNED)}")
    parts.update(overrides)
    return ScenarioConfig(name=name, **parts)


def scenario_from_dict(data: Mapping) -> ScenarioConfig:
    """Scenario from a parsed config file.

    A canned ``name`` with no ``objects`` expands the canned layout (using
    ``seed`` and ``noiseless`` if present); otherwise every field is taken
    literally.
    """
    data = dict(data)
    name = data.get("name", "custom")
    if name in CANNED and not data.get("objects"):
        seed = int(data.pop("seed", 0))
        noiseless = bool(data.pop("noiseless", False))
        data.pop("name")
        return scenario_config(name, seed, noiseless, **data)
    data.pop("seed", None)
    data.pop("noiseless", None)
    return ScenarioConfig(**data)


def with_noise(config: ScenarioConfig, **node_fields: Any) -> ScenarioConfig:
    return replace(config, nodes=[replace(n, **node_fields) for n in config.nodes])
