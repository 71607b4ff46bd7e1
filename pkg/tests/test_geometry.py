import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaysync.errors import ConfigError, InputError
from delaysync.geometry import (
    DrivableMap, OrientedBox, bandwidth_early, bandwidth_late, clip_polygon, in_drivable_area,
    nms, normalize_angle, oriented_iou, polygon_area, ray_cast,
)

from oracles import grid_iou, winding_number

boxes = st.builds(
    OrientedBox,
    st.floats(-5, 5), st.floats(-5, 5), st.floats(0.3, 6), st.floats(0.3, 6),
    st.floats(-math.pi, math.pi),
)


def test_identical_boxes_have_unit_iou():
    b = OrientedBox(1, 2, 4, 2, 0.3)
    assert oriented_iou(b, b) == pytest.approx(1.0)


def test_axis_aligned_hand_case():
    # two 2x2 squares overlapping in a 1x2 strip: 2 / (4 + 4 - 2)
    a, b = OrientedBox(0, 0, 2, 2, 0), OrientedBox(1, 0, 2, 2, 0)
    assert oriented_iou(a, b) == pytest.approx(1 / 3)


def test_rotated_square_hand_case():
    # unit square against itself turned 45 degrees: octagon of area 2(sqrt2 - 1)
    a, b = OrientedBox(0, 0, 1, 1, 0), OrientedBox(0, 0, 1, 1, math.pi / 4)
    inter = 2 * (math.sqrt(2) - 1)
    assert oriented_iou(a, b) == pytest.approx(inter / (2 - inter))


def test_disjoint_is_zero():
    assert oriented_iou(OrientedBox(0, 0, 1, 1, 0), OrientedBox(5, 5, 1, 1, 0.4)) == 0.0


def test_degenerate_box_raises():
    with pytest.raises(InputError):
        oriented_iou(OrientedBox(0, 0, 0, 1, 0), OrientedBox(0, 0, 1, 1, 0))


@settings(max_examples=40, deadline=None)
@given(boxes, boxes)
def test_iou_matches_grid_oracle(a, b):
    assert abs(oriented_iou(a, b) - grid_iou(a, b, 600)) < 5e-3


@settings(max_examples=200)
@given(boxes, boxes, st.floats(-math.pi, math.pi), st.floats(-50, 50), st.floats(-50, 50))
def test_iou_symmetric_and_rigid_invariant(a, b, ang, tx, ty):
    v = oriented_iou(a, b)
    assert 0.0 <= v <= 1.0
    assert abs(v - oriented_iou(b, a)) < 1e-9
    assert abs(v - oriented_iou(a.transformed(ang, tx, ty), b.transformed(ang, tx, ty))) < 1e-9


def test_yaw_period_pi():
    a = OrientedBox(0, 0, 4, 1.5, 0.2)
    flipped = OrientedBox(0, 0, 4, 1.5, 0.2 + math.pi)
    assert oriented_iou(a, flipped) == pytest.approx(1.0)


def test_polygon_area_and_clip():
    sq = [(0, 0), (2, 0), (2, 2), (0, 2)]
    assert polygon_area(sq) == 4
    inter = clip_polygon(sq, [(1, 1), (3, 1), (3, 3), (1, 3)])
    assert abs(polygon_area(inter)) == pytest.approx(1.0)


@given(st.floats(-100, 100))
def test_normalize_angle_range(a):
    r = normalize_angle(a)
    assert -math.pi < r <= math.pi
    assert math.isclose(math.cos(r), math.cos(a), abs_tol=1e-9)


def test_nms_hand_case():
    b = [
        (OrientedBox(0, 0, 4, 2, 0), 0.9, "car"),
        (OrientedBox(0.2, 0, 4, 2, 0), 0.8, "car"),
        (OrientedBox(0.2, 0, 4, 2, 0), 0.95, "bus"),
        (OrientedBox(10, 0, 4, 2, 0), 0.5, "car"),
    ]
    assert nms(b, 0.3) == [2, 0, 3]


def test_nms_tie_break_by_index():
    same = OrientedBox(0, 0, 2, 2, 0)
    assert nms([(same, 0.5, "car"), (same, 0.5, "car")]) == [0]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(boxes, st.floats(0, 1), st.sampled_from(["car", "bus"])), max_size=12),
       st.randoms(use_true_random=False))
def test_nms_properties(items, shuffler):
    keep = nms(items, 0.3)
    assert len(set(keep)) == len(keep) and all(0 <= i < len(items) for i in keep)
    for i in keep:
        for j in keep:
            if i < j and items[i][2] == items[j][2]:
                assert oriented_iou(items[i][0], items[j][0]) < 0.3
    # permutation with distinct confidences gives the same kept set
    if len({c for _, c, _ in items}) == len(items):
        perm = list(range(len(items)))
        shuffler.shuffle(perm)
        kept_perm = nms([items[p] for p in perm], 0.3)
        assert {perm[k] for k in kept_perm} == set(keep)


def test_point_in_polygon_boundary_and_holes():
    m = DrivableMap([[(0, 0), (10, 0), (10, 10), (0, 10)]], [[(4, 4), (6, 4), (6, 6), (4, 6)]])
    assert in_drivable_area((1, 1), m)
    assert in_drivable_area((10, 5), m)        # outer edge counts as inside
    assert in_drivable_area((4, 5), m)         # hole edge is still drivable
    assert not in_drivable_area((5, 5), m)     # strictly inside the hole
    assert not in_drivable_area((11, 5), m)


def test_ray_cast_agrees_with_winding_number(rng):
    # a concave star with 10 vertices
    ang = np.linspace(0, 2 * np.pi, 10, endpoint=False)
    rad = np.where(np.arange(10) % 2 == 0, 10.0, 4.0)
    ring = np.c_[rad * np.cos(ang), rad * np.sin(ang)]
    q = rng.uniform(-11, 11, (2000, 2))
    assert all(ray_cast(x, y, ring) == winding_number(x, y, ring) for x, y in q)


def test_map_round_trip_and_errors(tmp_path):
    m = DrivableMap.rectangle(0, 0, 5, 3)
    back = DrivableMap.from_dict(m.to_dict())
    np.testing.assert_array_equal(back.polygons[0], m.polygons[0])
    path = tmp_path / "map.yaml"
    path.write_text("polygons:\n  - [[0, 0], [4, 0], [4, 4], [0, 4]]\n")
    assert in_drivable_area((2, 2), DrivableMap.load(path))
    with pytest.raises(ConfigError):
        DrivableMap([[(0, 0), (1, 1)]])


def test_bandwidth_arithmetic():
    assert bandwidth_early(1) == 12 and bandwidth_late(1) == 30
    assert bandwidth_early(0) == bandwidth_late(0) == 0
    with pytest.raises(InputError):
        bandwidth_late(-1)
