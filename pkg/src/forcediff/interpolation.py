"""Densify 10 Hz waypoints into a controller-rate desired trajectory."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .admittance import DesiredSetpoint
from .core import Pose, TrajectoryPoint, slerp
from .errors import InterpolationError


@dataclass(frozen=True)
class DenseTrajectory:
    times: np.ndarray          # (T,)
    positions: np.ndarray      # (T, 3)
    velocities: np.ndarray     # (T, 3)
    forces: np.ndarray         # (T, 3)
    rotations: np.ndarray      # (T, 4)
    finger_joints: np.ndarray  # (T, J)
    dt: float

    def __len__(self) -> int:
        return self.times.shape[0]

    def setpoint(self, k: int) -> DesiredSetpoint:
        return DesiredSetpoint(self.positions[k], self.velocities[k], self.forces[k])

    def pose(self, k: int) -> Pose:
        return Pose(self.rotations[k], self.positions[k])

    def items(self) -> list[tuple[DesiredSetpoint, Pose]]:
        return [(self.setpoint(k), self.pose(k)) for k in range(len(self))]


def densify(waypoints: Sequence[TrajectoryPoint], control_rate: float = 100.0) -> DenseTrajectory:
    """Linear interpolation of positions, forces and fingers; slerp for rotations.

    Every segment is subdivided into the same integer number of samples, so
    segment boundaries land exactly on the input waypoints.
    """
    if len(waypoints) < 2:
        raise InterpolationError("densify needs at least two waypoints")
    if control_rate <= 0:
        raise InterpolationError("control_rate must be positive")
    ts = np.array([w.timestamp for w in waypoints])
    seg = np.diff(ts)
    if np.any(seg <= 0):
        raise InterpolationError("waypoint timestamps must be strictly increasing")
    per_seg = seg * control_rate
    n_sub = np.rint(per_seg).astype(int)
    if np.any(n_sub < 1) or np.any(np.abs(per_seg - n_sub) > 1e-6):
        raise InterpolationError("control_rate must be a positive multiple of the waypoint rate")

    P = np.array([w.pose.position for w in waypoints])
    F = np.array([w.desired_force for w in waypoints])
    Jt = np.array([w.finger_joints for w in waypoints])
    Q = np.array([w.pose.rotation for w in waypoints])

    total = int(n_sub.sum()) + 1
    times = np.empty(total)
    pos = np.empty((total, 3))
    force = np.empty((total, 3))
    fing = np.empty((total, Jt.shape[1]))
    rot = np.empty((total, 4))
    k = 0
    for i, n in enumerate(n_sub):
        for j in range(n):
            s = j / n
            times[k] = ts[i] + s * seg[i]
            pos[k] = P[i] + s * (P[i + 1] - P[i])
            force[k] = F[i] + s * (F[i + 1] - F[i])
            fing[k] = Jt[i] + s * (Jt[i + 1] - Jt[i])
            rot[k] = Q[i] if j == 0 else slerp(Q[i], Q[i + 1], s)
            k += 1
    times[-1] = ts[-1]
    pos[-1] = P[-1]
    force[-1] = F[-1]
    fing[-1] = Jt[-1]
    rot[-1] = Q[-1]

    dt = 1.0 / control_rate
    vel = np.empty_like(pos)
    vel[:-1] = np.diff(pos, axis=0) / dt
    vel[-1] = vel[-2]
    return DenseTrajectory(times, pos, vel, force, rot, fing, dt)
