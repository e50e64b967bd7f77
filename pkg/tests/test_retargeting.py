import numpy as np
import pytest
from hypothesis import given, strategies as st

from forcediff.core import quat_from_axis_angle, quat_to_matrix
from forcediff.retargeting import (Chain, HandModel, RetargetConfig, forward_keypoints,
                                   keypoint_jacobians, retarget, retarget_cost, toy_hand)

from helpers import nondegenerate_posture

Z = (0.0, 0.0, 1.0)


def planar():
    return HandModel((Chain((0.04, 0.03), (Z, Z)),), np.zeros(2), np.full(2, 1.6))


def homogeneous_fk(chain, q):
    """Oracle: compose 4x4 joint and link transforms; rotations via quaternions."""
    T = np.eye(4)
    for axis, length, angle in zip(chain.axes, chain.lengths, q):
        J = np.eye(4)
        J[:3, :3] = quat_to_matrix(quat_from_axis_angle(axis, angle))
        L = np.eye(4)
        L[0, 3] = length
        T = T @ J @ L
    return T[:3, 3]


def test_straight_chain():
    np.testing.assert_allclose(forward_keypoints(planar(), [0, 0])[0], [0.07, 0, 0], atol=1e-15)


def test_rotated_chain():
    np.testing.assert_allclose(forward_keypoints(planar(), [np.pi / 2, 0])[0], [0, 0.07, 0],
                               atol=1e-15)


def test_fk_matches_homogeneous_oracle(rng):
    axes = ((0, 0, 1), (0, 1, 0), (1 / np.sqrt(2), 0, 1 / np.sqrt(2)))
    chain = Chain((0.05, 0.03, 0.02), axes)
    model = HandModel((chain,), np.full(3, -3.0), np.full(3, 3.0))
    for _ in range(200):
        q = rng.uniform(-3, 3, 3)
        np.testing.assert_allclose(forward_keypoints(model, q)[0], homogeneous_fk(chain, q), atol=1e-12)


def test_jacobian_matches_difference(rng):
    hand = toy_hand()
    q = rng.uniform(0.1, 1.5, 4)
    _, J = keypoint_jacobians(hand, q)
    h = 1e-7
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        fd = (forward_keypoints(hand, q + e) - forward_keypoints(hand, q - e)) / (2 * h)
        np.testing.assert_allclose(J[:, :, j], fd, atol=1e-9)


def test_optimum_at_start(rng):
    hand = toy_hand()
    cfg = RetargetConfig(alpha=1.3, beta=0.05)
    q_prev = rng.uniform(0.2, 1.4, 4)
    res = retarget(hand, forward_keypoints(hand, q_prev) / cfg.alpha, q_prev, cfg)
    np.testing.assert_allclose(res.q, q_prev, atol=1e-12)


def test_recovery_200_cases(rng):
    hand = toy_hand()
    cfg = RetargetConfig(alpha=1.0, beta=0.0)
    ok = 0
    for _ in range(200):
        q_star = nondegenerate_posture(rng, hand)
        q_prev = rng.uniform(hand.q_lower, hand.q_upper)
        res = retarget(hand, forward_keypoints(hand, q_star), q_prev, cfg)
        ok += np.abs(res.q - q_star).max() <= 1e-3
        assert np.all(np.diff(res.cost_history) <= 0.0)
    assert ok >= 190


def test_solution_respects_limits(rng):
    hand = toy_hand()
    for _ in range(50):
        v = forward_keypoints(hand, rng.uniform(-1, 3, 4))
        res = retarget(hand, v, rng.uniform(0, 1.6, 4), RetargetConfig(beta=0.0))
        assert np.all(res.q >= hand.q_lower) and np.all(res.q <= hand.q_upper)


def test_clamped_solution_matches_grid_search():
    model = planar()
    cfg = RetargetConfig(alpha=1.0, beta=0.0)
    v = forward_keypoints(model, [0.5, 2.1])  # elbow beyond its upper limit
    res = retarget(model, v, np.array([0.3, 0.3]), cfg)
    # dense grid oracle with the closed-form planar tip position
    g = np.linspace(0.0, 1.6, 1601)
    a, b = np.meshgrid(g, g, indexing="ij")
    x = 0.04 * np.cos(a) + 0.03 * np.cos(a + b)
    y = 0.04 * np.sin(a) + 0.03 * np.sin(a + b)
    cost = (x - v[0, 0]) ** 2 + (y - v[0, 1]) ** 2
    i, j = np.unravel_index(np.argmin(cost), cost.shape)
    assert res.q[1] == pytest.approx(1.6, abs=1e-12)
    assert abs(res.q[0] - g[i]) <= 1.5e-3 and abs(res.q[1] - g[j]) <= 1.5e-3
    assert res.cost <= cost.min() + 1e-12
    _, J = keypoint_jacobians(model, res.q)
    r = v - forward_keypoints(model, res.q)
    grad = -2 * np.einsum("ni,nij->j", r, J)
    assert grad[1] < 0          # descent direction points past the active upper bound
    assert abs(grad[0]) < 1e-8  # free joint is stationary


@given(st.floats(0.0, 0.5), st.floats(0.5, 2.0))
def test_cost_never_increases(beta, alpha):
    hand = toy_hand()
    rng = np.random.default_rng(int(beta * 1e6) + int(alpha * 1e3))
    v = forward_keypoints(hand, rng.uniform(0, 1.6, 4))
    q_prev = rng.uniform(0, 1.6, 4)
    res = retarget(hand, v, q_prev, RetargetConfig(alpha=alpha, beta=beta))
    assert np.all(np.diff(res.cost_history) <= 0.0)
    assert res.cost <= retarget_cost(hand, v, np.clip(q_prev, 0, 1.6), q_prev,
                                     RetargetConfig(alpha=alpha, beta=beta))


@pytest.mark.parametrize("kw", [{"alpha": 0.0}, {"beta": -1.0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        RetargetConfig(**kw)
