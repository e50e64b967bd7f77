"""Cartesian admittance controller acting on end-effector position.

The virtual dynamics are

    M (p'' - p_d'') + B (p' - p_d') + K (p - p_d) = F - F_d

integrated with explicit Euler. By default the damping term uses the
absolute velocity ``p'`` (the acceleration law the controller is usually
written with); ``damp_velocity_error=True`` switches to ``p' - p_d'``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import Pose
from .errors import ControllerError

MAX_DT = 0.05
DEFAULT_VELOCITY_LIMIT = 1.0
CONTROL_DT = 0.01


def _vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    return a


@dataclass(frozen=True)
class AdmittanceParams:
    M: np.ndarray
    B: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        for name in ("M", "B", "K"):
            d = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (3,)).copy()
            if not np.all(np.isfinite(d)) or np.any(d <= 0):
                raise ValueError(f"{name} diagonal must be finite and strictly positive, got {d}")
            d.setflags(write=False)
            object.__setattr__(self, name, d)

    @classmethod
    def scalar(cls, m: float, b: float, k: float) -> "AdmittanceParams":
        return cls(np.full(3, m), np.full(3, b), np.full(3, k))

    def matrices(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.diag(self.M), np.diag(self.B), np.diag(self.K)


PRESETS: dict[str, AdmittanceParams] = {
    "insertion": AdmittanceParams.scalar(3.0, 270.0, 1540.0),
    "door": AdmittanceParams.scalar(10.0, 900.0, 5000.0),
    "dragging": AdmittanceParams.scalar(6.0, 550.0, 3000.0),
    "wiping": AdmittanceParams.scalar(5.0, 300.0, 2000.0),
    "drawing": AdmittanceParams.scalar(3.0, 270.0, 1540.0),
}


@dataclass(frozen=True)
class AdmittanceState:
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    p_dot: np.ndarray = field(default_factory=lambda: np.zeros(3))
    p_ddot: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("p", "p_dot", "p_ddot"):
            v = _vec3(getattr(self, name))
            if not np.all(np.isfinite(v)):
                raise ControllerError(f"non-finite {name}: {v}")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class DesiredSetpoint:
    p_d: np.ndarray
    p_d_dot: np.ndarray
    F_d: np.ndarray

    def __post_init__(self):
        for name in ("p_d", "p_d_dot", "F_d"):
            v = _vec3(getattr(self, name))
            if not np.all(np.isfinite(v)):
                raise ValueError(f"non-finite {name}: {v}")
            object.__setattr__(self, name, v)


def compute_acceleration(state: AdmittanceState, setpoint: DesiredSetpoint, F,
                         params: AdmittanceParams, damp_velocity_error: bool = False) -> np.ndarray:
    F = _vec3(F)
    vel = state.p_dot - setpoint.p_d_dot if damp_velocity_error else state.p_dot
    rhs = F - setpoint.F_d - params.B * vel - params.K * (state.p - setpoint.p_d)
    return rhs / params.M


def step(state: AdmittanceState, accel, dt: float,
         velocity_limit: float = DEFAULT_VELOCITY_LIMIT) -> AdmittanceState:
    """One explicit Euler step; position advances with the pre-update velocity."""
    if not (0.0 < dt <= MAX_DT):
        raise ControllerError(f"dt={dt} outside (0, {MAX_DT}]")
    accel = _vec3(accel)
    new_v = state.p_dot + accel * dt
    new_p = state.p + state.p_dot * dt
    speed = float(np.linalg.norm(new_v))
    if not np.isfinite(speed) or speed > velocity_limit:
        raise ControllerError(f"velocity {speed:.3f} m/s exceeds safety limit {velocity_limit} m/s")
    return AdmittanceState(new_p, new_v, accel)


class AdmittanceController:
    """Stateful wrapper used inside the episode loop."""

    def __init__(self, params: AdmittanceParams, dt: float = CONTROL_DT,
                 damp_velocity_error: bool = False,
                 velocity_limit: float = DEFAULT_VELOCITY_LIMIT,
                 initial_position=None):
        self.params = params
        self.dt = dt
        self.damp_velocity_error = damp_velocity_error
        self.velocity_limit = velocity_limit
        p0 = np.zeros(3) if initial_position is None else initial_position
        self.state = AdmittanceState(p0)

    def update(self, setpoint: DesiredSetpoint, F) -> np.ndarray:
        a = compute_acceleration(self.state, setpoint, F, self.params, self.damp_velocity_error)
        self.state = step(self.state, a, self.dt, self.velocity_limit)
        return self.state.p


def run_controller(dense_trajectory: Sequence[tuple[DesiredSetpoint, Pose]] | Iterable,
                   force_source: Callable[[int, Pose | None], np.ndarray],
                   params: AdmittanceParams, dt: float = CONTROL_DT,
                   initial_state: AdmittanceState | None = None,
                   damp_velocity_error: bool = False,
                   velocity_limit: float = DEFAULT_VELOCITY_LIMIT) -> list[Pose]:
    """Drive the admittance law along a dense trajectory.

    ``force_source(tick, last_command)`` returns the measured force for this
    tick given the previously emitted command (``None`` on the first tick).
    Rotation is passed through from the desired pose.
    """
    traj = list(dense_trajectory)
    if not traj:
        return []
    if initial_state is None:
        initial_state = AdmittanceState(traj[0][0].p_d)
    state = initial_state
    out: list[Pose] = []
    last: Pose | None = None
    for k, (sp, desired_pose) in enumerate(traj):
        F = force_source(k, last)
        a = compute_acceleration(state, sp, F, params, damp_velocity_error)
        state = step(state, a, dt, velocity_limit)
        last = Pose(desired_pose.rotation, state.p)
        out.append(last)
    return out
