"""Rotations, poses, force vectors and signal filtering.

Quaternions are stored scalar-first ``(w, x, y, z)`` as float64 arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ForceLimitError, GeometryError

QUAT_UNIT_TOL = 1e-6
DEFAULT_FORCE_CAP = 100.0
DEFAULT_LPF_ALPHA = 0.2
DEFAULT_NUM_FINGER_JOINTS = 4
WAYPOINT_DT = 0.1

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def normalize_quat(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n < 1e-12:
        raise GeometryError(f"cannot normalize quaternion {q}")
    if abs(n - 1.0) <= 4 * np.finfo(float).eps:
        return q.copy()  # already unit; keeps normalization idempotent
    return q / n


def _check_unit(q: np.ndarray) -> None:
    n = np.linalg.norm(q)
    if not np.isfinite(n) or abs(n - 1.0) > QUAT_UNIT_TOL:
        raise GeometryError(f"quaternion norm {n} deviates from 1")


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def quat_mul(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R) -> np.ndarray:
    """Shepperd's method; returns the representative with w >= 0."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        )
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array(
            [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
        )
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array(
            [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        )
    q = q / np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def angular_distance(q0, q1) -> float:
    """Rotation angle between two unit quaternions, sign-agnostic."""
    q0, q1 = np.asarray(q0, dtype=float), np.asarray(q1, dtype=float)
    # chord form keeps full precision near zero, where arccos(|q0.q1|) does not
    chord = min(np.linalg.norm(q0 - q1), np.linalg.norm(q0 + q1))
    return 4.0 * np.arcsin(min(1.0, chord / 2.0))


def quat_to_6d(q) -> np.ndarray:
    """First two columns of the rotation matrix, column-major: (c1, c2)."""
    q = np.asarray(q, dtype=float)
    _check_unit(q)
    R = quat_to_matrix(q)
    return np.concatenate([R[:, 0], R[:, 1]])


def six_d_to_matrix(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    big = np.max(np.abs(r)) if r.size else 0.0
    if np.isfinite(big) and big > 1e100:
        r = r / big  # scale only matters for overflow
    a1, a2 = r[:3], r[3:6]
    n1 = np.linalg.norm(a1)
    if not np.isfinite(n1) or n1 <= 1e-9:
        raise GeometryError("first 6d column has (near) zero norm")
    b1 = a1 / n1
    u2 = a2 - np.dot(b1, a2) * b1
    n2 = np.linalg.norm(u2)
    if not np.isfinite(n2) or n2 <= 1e-9 * max(1.0, np.linalg.norm(a2)):
        raise GeometryError("6d columns are zero or parallel")
    b2 = u2 / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=1)


def six_d_to_quat(r) -> np.ndarray:
    """Gram-Schmidt decode of a 6d rotation to a unit quaternion."""
    return matrix_to_quat(six_d_to_matrix(r))


def slerp(q0, q1, t: float) -> np.ndarray:
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    dot = min(dot, 1.0)
    theta = np.arccos(dot)
    if theta < 1e-6:
        q = (1.0 - t) * q0 + t * q1
        return q / np.linalg.norm(q)
    s = np.sin(theta)
    q = (np.sin((1.0 - t) * theta) / s) * q0 + (np.sin(t * theta) / s) * q1
    return q / np.linalg.norm(q)


def low_pass_filter(signal, alpha: float = DEFAULT_LPF_ALPHA) -> np.ndarray:
    """First-order IIR smoothing, y_0 = x_0, y_k = a x_k + (1 - a) y_{k-1}."""
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    x = np.asarray(signal, dtype=float)
    if x.shape[0] == 0:
        raise ValueError("low_pass_filter needs a non-empty signal")
    y = np.empty_like(x)
    y[0] = x[0]
    for k in range(1, x.shape[0]):
        y[k] = alpha * x[k] + (1.0 - alpha) * y[k - 1]
    return y


class LowPassFilter:
    """Streaming form of :func:`low_pass_filter`."""

    def __init__(self, alpha: float = DEFAULT_LPF_ALPHA):
        if not (0.0 < alpha <= 1.0):
            raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
        self.alpha = alpha
        self.value: np.ndarray | None = None

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.value is None:
            self.value = x.copy()
        else:
            self.value = self.alpha * x + (1.0 - self.alpha) * self.value
        return self.value.copy()


def check_force(f, cap: float = DEFAULT_FORCE_CAP) -> np.ndarray:
    f = np.asarray(f, dtype=float).reshape(3)
    if not np.all(np.isfinite(f)):
        raise ForceLimitError(f"non-finite force {f}")
    mag = float(np.linalg.norm(f))
    if mag >= cap:
        raise ForceLimitError(f"force magnitude {mag:.2f} N exceeds cap {cap} N")
    return f


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = normalize_quat(self.rotation)
        p = np.asarray(self.position, dtype=float).reshape(3)
        if not np.all(np.isfinite(p)):
            raise GeometryError(f"non-finite position {p}")
        object.__setattr__(self, "rotation", _frozen(q))
        object.__setattr__(self, "position", _frozen(p))

    def with_position(self, position) -> "Pose":
        return Pose(self.rotation, position)


@dataclass(frozen=True)
class TrajectoryPoint:
    pose: Pose
    finger_joints: np.ndarray
    desired_force: np.ndarray
    timestamp: float

    def __post_init__(self):
        object.__setattr__(self, "finger_joints", _frozen(self.finger_joints))
        object.__setattr__(self, "desired_force", _frozen(check_force(self.desired_force)))
        object.__setattr__(self, "timestamp", float(self.timestamp))


def check_timestamps(points: Sequence[TrajectoryPoint], nominal_dt: float | None = None,
                     tol: float = 1e-6) -> None:
    """Raise ValueError unless timestamps strictly increase (optionally at a fixed spacing)."""
    ts = np.array([p.timestamp for p in points])
    d = np.diff(ts)
    if np.any(d <= 0):
        raise ValueError("timestamps must be strictly increasing")
    if nominal_dt is not None and np.any(np.abs(d - nominal_dt) > tol):
        raise ValueError(f"timestamps deviate from nominal spacing {nominal_dt}")
