"""Kinematic hand retargeting by box-constrained projected gradient descent.

Cost minimised per frame::

    C(q) = sum_i |alpha * v_i - f_i(q)|^2 + beta * |q - q_prev|^2,   q_l <= q <= q_u

where ``f_i`` are keypoint vectors of the robot hand computed by forward
kinematics of serial revolute chains.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import RetargetError

log = logging.getLogger(__name__)


def axis_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix."""
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    C = 1.0 - c
    return np.array(
        [
            [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
            [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
            [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
        ]
    )


@dataclass(frozen=True)
class Chain:
    """Serial chain of revolute joints; each link extends along its local x axis."""

    lengths: tuple[float, ...]
    axes: tuple[tuple[float, float, float], ...]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.lengths) != len(self.axes):
            raise ValueError("one axis per link required")
        if any(l <= 0 for l in self.lengths):
            raise ValueError("link lengths must be positive")

    @property
    def dof(self) -> int:
        return len(self.lengths)


@dataclass(frozen=True)
class HandModel:
    chains: tuple[Chain, ...]
    q_lower: np.ndarray
    q_upper: np.ndarray
    # (chain index, link index): vector from chain origin to the end of that link
    keypoint_pairs: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        ql = np.asarray(self.q_lower, dtype=float)
        qu = np.asarray(self.q_upper, dtype=float)
        if ql.shape != (self.dof,) or qu.shape != (self.dof,):
            raise ValueError("joint limit vectors must match total dof")
        if np.any(ql >= qu):
            raise ValueError("q_lower must be strictly below q_upper")
        object.__setattr__(self, "q_lower", ql)
        object.__setattr__(self, "q_upper", qu)
        if not self.keypoint_pairs:
            pairs = tuple((c, ch.dof - 1) for c, ch in enumerate(self.chains))
            object.__setattr__(self, "keypoint_pairs", pairs)

    @property
    def dof(self) -> int:
        return sum(c.dof for c in self.chains)

    def joint_slices(self) -> list[slice]:
        out, i = [], 0
        for c in self.chains:
            out.append(slice(i, i + c.dof))
            i += c.dof
        return out


def toy_hand() -> HandModel:
    """Two planar 2-link chains (thumb-like and finger) flexing about z."""
    z = (0.0, 0.0, 1.0)
    return HandModel(
        chains=(
            Chain((0.04, 0.03), (z, z), origin=(0.0, -0.02, 0.0)),
            Chain((0.045, 0.035), (z, z), origin=(0.0, 0.02, 0.0)),
        ),
        q_lower=np.zeros(4),
        q_upper=np.full(4, 1.6),
    )


def _chain_fk(chain: Chain, q: np.ndarray):
    """Joint positions (relative to chain origin), world axes and link ends."""
    R = np.eye(3)
    p = np.zeros(3)
    joint_pos, joint_axes, ends = [], [], []
    for j in range(chain.dof):
        axis = np.asarray(chain.axes[j], dtype=float)
        w = R @ axis
        joint_pos.append(p.copy())
        joint_axes.append(w)
        R = R @ axis_rotation(axis, q[j])
        p = p + R @ np.array([chain.lengths[j], 0.0, 0.0])
        ends.append(p.copy())
    return joint_pos, joint_axes, ends


def forward_keypoints(model: HandModel, q) -> np.ndarray:
    """Keypoint vectors ``(N, 3)`` for joint vector ``q``."""
    q = np.asarray(q, dtype=float)
    sl = model.joint_slices()
    fk = [_chain_fk(ch, q[s]) for ch, s in zip(model.chains, sl)]
    return np.array([fk[c][2][link] for c, link in model.keypoint_pairs])


def keypoint_jacobians(model: HandModel, q) -> tuple[np.ndarray, np.ndarray]:
    """Keypoint vectors and their Jacobians ``(N, 3, dof)``."""
    q = np.asarray(q, dtype=float)
    sl = model.joint_slices()
    fk = [_chain_fk(ch, q[s]) for ch, s in zip(model.chains, sl)]
    n = len(model.keypoint_pairs)
    V = np.empty((n, 3))
    Jac = np.zeros((n, 3, model.dof))
    for i, (c, link) in enumerate(model.keypoint_pairs):
        joint_pos, joint_axes, ends = fk[c]
        tip = ends[link]
        V[i] = tip
        base = sl[c].start
        for j in range(link + 1):
            Jac[i, :, base + j] = np.cross(joint_axes[j], tip - joint_pos[j])
    return V, Jac


@dataclass(frozen=True)
class RetargetConfig:
    alpha: float = 1.0
    beta: float = 0.05
    max_iters: int = 200
    step_tol: float = 1e-8
    cost_tol: float = 1e-16
    armijo_c: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 30

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.beta >= 0:
            raise ValueError("beta must be non-negative")


def retarget_cost(model: HandModel, v, q, q_prev, cfg: RetargetConfig) -> float:
    r = cfg.alpha * np.asarray(v) - forward_keypoints(model, q)
    d = np.asarray(q) - np.asarray(q_prev)
    return float(np.sum(r * r) + cfg.beta * np.dot(d, d))


def retarget_cost_and_grad(model: HandModel, v, q, q_prev, cfg: RetargetConfig):
    V, Jac = keypoint_jacobians(model, q)
    r = cfg.alpha * np.asarray(v) - V
    d = np.asarray(q) - np.asarray(q_prev)
    cost = float(np.sum(r * r) + cfg.beta * np.dot(d, d))
    grad = -2.0 * np.einsum("ni,nij->j", r, Jac) + 2.0 * cfg.beta * d
    return cost, grad


@dataclass
class RetargetResult:
    q: np.ndarray
    cost: float
    iterations: int
    converged: bool
    cost_history: list[float] = field(default_factory=list)


def retarget(model: HandModel, v_t, q_prev, cfg: RetargetConfig | None = None,
             q_init=None) -> RetargetResult:
    """Projected gradient descent with Armijo backtracking and BB trial steps."""
    cfg = cfg or RetargetConfig()
    v_t = np.asarray(v_t, dtype=float)
    q_prev = np.asarray(q_prev, dtype=float)
    lo, hi = model.q_lower, model.q_upper
    q = np.clip(q_prev if q_init is None else np.asarray(q_init, dtype=float), lo, hi)

    cost, g = retarget_cost_and_grad(model, v_t, q, q_prev, cfg)
    if not np.isfinite(cost):
        raise RetargetError("non-finite retargeting cost")
    history = [cost]
    eta = 1.0
    prev_q = prev_g = None
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        if prev_q is not None:
            s, y = q - prev_q, g - prev_g
            sy = float(np.dot(s, y))
            eta = float(np.dot(s, s)) / sy if sy > 1e-300 else eta * 2.0
        eta = min(max(eta, 1e-8), 1e8)
        accepted = False
        for _ in range(cfg.max_backtracks + 1):
            q_new = np.clip(q - eta * g, lo, hi)
            new_cost = retarget_cost(model, v_t, q_new, q_prev, cfg)
            if not np.isfinite(new_cost):
                raise RetargetError("non-finite retargeting cost during line search")
            if new_cost <= cost + cfg.armijo_c * float(np.dot(g, q_new - q)):
                accepted = True
                break
            eta *= cfg.shrink
        step_len = float(np.linalg.norm(q_new - q))
        if not accepted or new_cost > cost:
            converged = step_len < cfg.step_tol or not accepted
            break
        improvement = cost - new_cost
        prev_q, prev_g = q, g
        q = q_new
        cost, g = retarget_cost_and_grad(model, v_t, q, q_prev, cfg)
        history.append(cost)
        if step_len < cfg.step_tol or improvement < cfg.cost_tol:
            converged = True
            break
    if not converged:
        log.warning("retarget: iteration budget exhausted (cost %.3e)", cost)
    return RetargetResult(q=q, cost=cost, iterations=it, converged=converged,
                          cost_history=history)
