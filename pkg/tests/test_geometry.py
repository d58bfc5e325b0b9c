import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ocbfnav.geometry import (Box, Circle, Environment, LidarScan, Pose, Transform, apply,
                              apply_inverse_batch, clearance, compose, empty_environment, inverse,
                              min_range, raycast, signed_distance, wrap_angle)

finite = st.floats(-10, 10, allow_nan=False)
angles = st.floats(-math.pi, math.pi, allow_nan=False)
transforms = st.builds(Transform, finite, finite, angles)


def test_wrap_angle_range():
    a = np.linspace(-20, 20, 1001)
    w = wrap_angle(a)
    assert np.all(w > -math.pi) and np.all(w <= math.pi)
    assert np.allclose(np.cos(w), np.cos(a)) and np.allclose(np.sin(w), np.sin(a))
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)


@given(transforms, st.tuples(finite, finite))
def test_inverse_undoes_apply(t, p):
    back = apply(inverse(t), apply(t, np.array(p)))
    assert np.allclose(back, p, atol=1e-9)


@given(transforms, transforms, st.tuples(finite, finite))
def test_compose_matches_sequential_apply(a, b, p):
    assert np.allclose(apply(compose(a, b), np.array(p)), apply(a, apply(b, np.array(p))), atol=1e-9)


@given(st.lists(transforms, min_size=1, max_size=5), st.tuples(finite, finite))
def test_batch_inverse_matches_scalar(ts, p):
    arr = np.array([t.as_array() for t in ts])
    batch = apply_inverse_batch(arr, np.array(p))
    for k, t in enumerate(ts):
        assert np.allclose(batch[k], apply(inverse(t), np.array(p)), atol=1e-9)


def test_forward_ray_hits_circle_at_analytic_point():
    env = Environment((Circle((3.0, 0.0), 1.0),), Box((-10, -10), (10, 10)), Pose(0, 0, 0), (5, 5),
                      walls=False)
    scan = raycast(env, Pose(0.0, 0.0, 0.0), n_rays=32, d_o=3.0)
    assert np.allclose(scan.points[0], [2.0, 0.0], atol=1e-12)
    assert not scan.saturated[0]


def test_out_of_range_circle_saturates():
    env = Environment((Circle((3.0 + 5.0, 0.0), 1.0),), Box((-10, -10), (20, 10)), Pose(0, 0, 0),
                      (5, 5), walls=False)
    scan = raycast(env, Pose(0.0, 0.0, 0.0), n_rays=32, d_o=3.0)
    assert np.allclose(scan.points[0], [3.0, 0.0])
    assert scan.saturated[0]


def test_empty_environment_all_saturated():
    scan = raycast(empty_environment(), Pose(1.0, 1.0, 0.3), n_rays=16, d_o=3.0)
    assert scan.saturated.all()
    assert np.allclose(scan.ranges(), 3.0)
    assert min_range(scan) == pytest.approx(3.0)


def test_ray_bearings_in_robot_frame():
    scan = raycast(empty_environment(), Pose(0.0, 0.0, 1.0), n_rays=8, d_o=2.0)
    bearings = np.arctan2(scan.points[:, 1], scan.points[:, 0])
    assert np.allclose(np.cos(bearings), np.cos(2 * np.pi * np.arange(8) / 8))


def test_box_hit_from_inside_is_zero():
    env = Environment((Box((-1, -1), (1, 1)),), Box((-5, -5), (5, 5)), Pose(0, 0, 0), (3, 3),
                      walls=False)
    assert np.allclose(raycast(env, Pose(0, 0, 0), 8, 3.0).ranges(), 0.0)


def test_signed_distance_oracles():
    obs = (Circle((0.0, 0.0), 1.0), Box((3.0, -1.0), (5.0, 1.0)))
    pts = np.array([[0.0, 2.0], [0.0, 0.5], [2.0, 0.0], [4.0, 0.0], [6.0, 2.0]])
    # nearest obstacle per point, computed by hand
    expected = [1.0, -0.5, 1.0, -1.0, math.hypot(1.0, 1.0)]
    assert np.allclose(signed_distance(obs, pts), expected)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.5, 5.5), st.floats(0.5, 5.5), angles)
def test_hit_points_lie_on_obstacle_boundary(x, y, th):
    env = Environment((Circle((3.0, 3.0), 0.7), Box((0.8, 0.8), (1.6, 1.4))), Box((0, 0), (6, 6)),
                      Pose(1, 1, 0), (5, 5), walls=True)
    pose = Pose(x, y, th)
    if clearance(env, (x, y)) <= 0:
        return
    scan = raycast(env, pose, 32, 3.0)
    world = apply(pose.as_transform(), scan.points[~scan.saturated])
    if len(world):
        assert np.all(np.abs(signed_distance(env.solid_obstacles(), world)) < 1e-6)


def test_walls_enclose_workspace():
    env = empty_environment(size=4.0, walls=True)
    scan = raycast(env, Pose(2.0, 2.0, 0.0), 4, 3.0)
    assert np.allclose(scan.ranges(), 2.0)


def test_environment_json_round_trip(tmp_path):
    env = Environment((Circle((1.0, 2.0), 0.3), Box((2.0, 2.0), (3.0, 2.5))), Box((0, 0), (4, 4)),
                      Pose(0.5, 0.5, 0.1), (3.5, 3.5))
    env.save(tmp_path / "e.json")
    assert Environment.load(tmp_path / "e.json") == env


def test_raycast_rejects_bad_arguments():
    with pytest.raises(ValueError):
        raycast(empty_environment(), Pose(0, 0, 0), n_rays=0)


def test_lidar_scan_defaults_unsaturated():
    s = LidarScan(np.ones((4, 2)))
    assert s.n_rays == 4 and not s.saturated.any()
