"""Oriented boxes in the global BEV plane, drivable-area tests, bandwidth.

IoU is computed exactly by clipping one box's corner polygon against the
other (Sutherland-Hodgman); both polygons are convex, so the clip is the
intersection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Sequence

import numpy as np
import yaml

from .errors import ConfigError, InputError

BYTES_PER_FLOAT = 4
POINT_FLOATS = 3
BOX_FLOATS = 7
BOX_TAG_BYTES = 2  # class label + object id


@dataclass(frozen=True)
class OrientedBox:
    x: float
    y: float
    length: float
    width: float
    yaw: float = 0.0

    @property
    def center(self) -> tuple[float, float]:
        return (self.x, self.y)

    @property
    def area(self) -> float:
        return self.length * self.width

    def corners(self) -> np.ndarray:
        """Counter-clockwise corners, shape (4, 2)."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        hl, hw = self.length / 2, self.width / 2
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.x, self.y])

    def contains(self, px, py) -> np.ndarray:
        """Vectorised closed-box membership test."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        dx, dy = np.asarray(px) - self.x, np.asarray(py) - self.y
        u = dx * c + dy * s
        v = -dx * s + dy * c
        return (np.abs(u) <= self.length / 2) & (np.abs(v) <= self.width / 2)

    def transformed(self, angle: float, tx: float = 0.0, ty: float = 0.0) -> "OrientedBox":
        """Rotate about the origin by ``angle`` then translate."""
        c, s = math.cos(angle), math.sin(angle)
        return OrientedBox(
            c * self.x - s * self.y + tx,
            s * self.x + c * self.y + ty,
            self.length,
            self.width,
            normalize_angle(self.yaw + angle),
        )


def normalize_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2 * math.pi)
    if a <= 0:
        a += 2 * math.pi
    return a - math.pi


def polygon_area(poly) -> float:
    """Signed shoelace area (positive for counter-clockwise rings)."""
    p = np.asarray(poly, dtype=float)
    if len(p) < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_polygon(subject, clipper) -> list[tuple[float, float]]:
    """Sutherland-Hodgman clip of ``subject`` by a convex CCW ``clipper``."""
    output = [tuple(map(float, p)) for p in subject]
    clip = [tuple(map(float, p)) for p in clipper]
    n = len(clip)
    for i in range(n):
        if not output:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay

        def side(p):
            return ex * (p[1] - ay) - ey * (p[0] - ax)

        inp, output = output, []
        prev = inp[-1]
        s_prev = side(prev)
        for cur in inp:
            s_cur = side(cur)
            if s_cur >= 0:
                if s_prev < 0:
                    output.append(_intersect(prev, cur, s_prev, s_cur))
                output.append(cur)
            elif s_prev >= 0:
                output.append(_intersect(prev, cur, s_prev, s_cur))
            prev, s_prev = cur, s_cur
    return output


def _intersect(p, q, sp, sq):
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def oriented_iou(a: OrientedBox, b: OrientedBox) -> float:
    if a.length <= 0 or a.width <= 0 or b.length <= 0 or b.width <= 0:
        raise InputError("oriented_iou needs boxes with positive length and width")
    # cheap reject on circumscribed circles
    ra = math.hypot(a.length, a.width) / 2
    rb = math.hypot(b.length, b.width) / 2
    if math.hypot(a.x - b.x, a.y - b.y) > ra + rb:
        return 0.0
    inter = abs(polygon_area(clip_polygon(a.corners(), b.corners())))
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def nms(
    boxes: Sequence[tuple[OrientedBox, float, Hashable]], iou_threshold: float = 0.3
) -> list[int]:
    """Greedy per-class non-maximum suppression.

    ``boxes`` holds ``(box, confidence, class)`` triples.  Returns the
    indices of kept entries in descending confidence, ties resolved by input
    position.
    """
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i][1], i))
    kept: list[int] = []
    for i in order:
        box, _, cls = boxes[i]
        if all(
            boxes[k][2] != cls or oriented_iou(box, boxes[k][0]) < iou_threshold for k in kept
        ):
            kept.append(i)
    return kept


# -- drivable map ------------------------------------------------------------


def _ring(vertices) -> np.ndarray:
    ring = np.asarray(vertices, dtype=float)
    if ring.ndim != 2 or ring.shape[1] != 2 or len(ring) < 3:
        raise ConfigError("a ring needs at least 3 (x, y) vertices")
    if np.allclose(ring[0], ring[-1]) and len(ring) > 3:
        ring = ring[:-1]
    if abs(polygon_area(ring)) == 0:
        raise ConfigError("ring has zero area")
    return ring


@dataclass
class DrivableMap:
    polygons: list[np.ndarray]
    holes: list[np.ndarray] = field(default_factory=list)
    names: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.polygons = [_ring(p) for p in self.polygons]
        self.holes = [_ring(h) for h in self.holes]

    @classmethod
    def from_dict(cls, data: dict) -> "DrivableMap":
        def rings(key):
            out, names = [], []
            for i, item in enumerate(data.get(key) or []):
                if isinstance(item, dict):
                    out.append(item["vertices"])
                    names.append(str(item.get("name", f"{key}{i}")))
                else:
                    out.append(item)
                    names.append(f"{key}{i}")
            return out, names

        polys, names = rings("polygons")
        holes, _ = rings("holes")
        if not polys:
            raise ConfigError("drivable map needs at least one polygon")
        return cls(polys, holes, names)

    @classmethod
    def load(cls, path: str | Path) -> "DrivableMap":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def to_dict(self) -> dict:
        names = self.names or [f"polygons{i}" for i in range(len(self.polygons))]
        return {
            "polygons": [
                {"name": n, "vertices": p.tolist()} for n, p in zip(names, self.polygons)
            ],
            "holes": [{"name": f"hole{i}", "vertices": h.tolist()} for i, h in enumerate(self.holes)],
        }

    @classmethod
    def rectangle(cls, x0: float, y0: float, x1: float, y1: float) -> "DrivableMap":
        return cls([[(x0, y0), (x1, y0), (x1, y1), (x0, y1)]])


def on_ring_boundary(x: float, y: float, ring, eps: float = 1e-12) -> bool:
    n = len(ring)
    for i in range(n):
        ax, ay = ring[i]
        bx, by = ring[(i + 1) % n]
        cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax)
        scale = max(1.0, abs(bx - ax) + abs(by - ay))
        if abs(cross) <= eps * scale * scale and (
            min(ax, bx) - eps <= x <= max(ax, bx) + eps and min(ay, by) - eps <= y <= max(ay, by) + eps
        ):
            return True
    return False


def ray_cast(x: float, y: float, ring) -> bool:
    """Even-odd test by a ray towards +x; boundary points count as inside."""
    if on_ring_boundary(x, y, ring):
        return True
    inside = False
    n = len(ring)
    for i in range(n):
        xi, yi = ring[i]
        xj, yj = ring[i - 1]
        if (yi > y) != (yj > y):
            x_cross = xi + (y - yi) * (xj - xi) / (yj - yi)
            if x < x_cross:
                inside = not inside
    return inside


def in_drivable_area(point: Sequence[float], drivable: DrivableMap) -> bool:
    """Inside some outer ring and not strictly inside any hole."""
    x, y = float(point[0]), float(point[1])
    if not any(ray_cast(x, y, ring) for ring in drivable.polygons):
        return False
    for hole in drivable.holes:
        if ray_cast(x, y, hole) and not on_ring_boundary(x, y, hole):
            return False
    return True


# -- bandwidth -----------------------------------------------------------------


def bandwidth_early(num_points: int) -> int:
    """Bytes to ship raw (x, y, z) float32 points."""
    if num_points < 0:
        raise InputError("num_points must be >= 0")
    return BYTES_PER_FLOAT * POINT_FLOATS * int(num_points)


def bandwidth_late(num_objects: int) -> int:
    """Bytes to ship boxes: 7 float32 plus class and id bytes each."""
    if num_objects < 0:
        raise InputError("num_objects must be >= 0")
    return (BYTES_PER_FLOAT * BOX_FLOATS + BOX_TAG_BYTES) * int(num_objects)
