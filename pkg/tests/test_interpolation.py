import numpy as np
import pytest
from hypothesis import given, strategies as st

from forcediff.core import IDENTITY_QUAT, Pose, TrajectoryPoint, angular_distance, quat_from_axis_angle
from forcediff.errors import InterpolationError
from forcediff.interpolation import densify

from helpers import random_quats


def wp(pos, t, q=IDENTITY_QUAT, f=(0, 0, 0), fingers=(0, 0, 0, 0)):
    return TrajectoryPoint(Pose(q, pos), np.array(fingers, float), np.array(f, float), t)


def test_identical_waypoints():
    d = densify([wp([1, 2, 3], 0.0), wp([1, 2, 3], 0.1)], 100)
    assert len(d) == 11
    np.testing.assert_array_equal(d.positions, np.tile([1, 2, 3], (11, 1)))
    np.testing.assert_array_equal(d.velocities, 0.0)


def test_linear_ramp():
    d = densify([wp([0, 0, 0], 0.0, f=(0, 0, 0)), wp([0.1, 0, 0], 0.1, f=(-4.5, 0, 0))], 100)
    k = np.arange(11)
    np.testing.assert_allclose(d.positions[:, 0], 0.01 * k, atol=1e-15)
    np.testing.assert_allclose(d.forces[:, 0], -0.45 * k, atol=1e-14)
    np.testing.assert_allclose(d.times, 0.01 * k, atol=1e-15)


def test_rotation_midpoint():
    z90 = quat_from_axis_angle([0, 0, 1], np.pi / 2)
    d = densify([wp([0, 0, 0], 0.0), wp([0, 0, 0], 0.1, q=z90)], 100)
    np.testing.assert_allclose(d.rotations[5], quat_from_axis_angle([0, 0, 1], np.pi / 4), atol=1e-9)


def test_forward_difference_velocity():
    d = densify([wp([0, 0, 0], 0.0), wp([0.1, 0.2, 0], 0.1), wp([0.1, 0.2, 0.05], 0.2)], 100)
    v = np.diff(d.positions, axis=0) / d.dt
    np.testing.assert_allclose(d.velocities[:-1], v, atol=1e-12)


def test_downsample_identity_1000(rng):
    """Sampling the dense trajectory at the waypoint times returns the waypoints."""
    for case in range(1000):
        n = int(rng.integers(2, 6))
        qs = random_quats(rng, n)
        pts = [wp(rng.normal(size=3), 0.1 * i + 0.0, q=qs[i], f=rng.normal(size=3),
                  fingers=rng.uniform(0, 1.6, 4)) for i in range(n)]
        d = densify(pts, 100)
        idx = np.arange(n) * 10
        P = np.array([p.pose.position for p in pts])
        np.testing.assert_allclose(d.positions[idx], P, atol=1e-12)
        np.testing.assert_allclose(d.forces[idx], [p.desired_force for p in pts], atol=1e-12)
        np.testing.assert_allclose(d.finger_joints[idx], [p.finger_joints for p in pts], atol=1e-12)
        for i in range(n):
            assert angular_distance(d.rotations[idx[i]], qs[i]) < 1e-9


@given(st.integers(1, 10))
def test_sample_count(mult):
    rate = 10.0 * mult
    d = densify([wp([0, 0, 0], 0.0), wp([1, 0, 0], 0.1), wp([2, 0, 0], 0.2)], rate)
    assert len(d) == 2 * mult + 1


@pytest.mark.parametrize("rate", [0.0, 15.0])
def test_bad_rate(rate):
    with pytest.raises(InterpolationError):
        densify([wp([0, 0, 0], 0.0), wp([1, 0, 0], 0.1)], rate)


def test_needs_increasing_times():
    with pytest.raises(InterpolationError):
        densify([wp([0, 0, 0], 0.1), wp([1, 0, 0], 0.1)], 100)
    with pytest.raises(InterpolationError):
        densify([wp([0, 0, 0], 0.0)], 100)
