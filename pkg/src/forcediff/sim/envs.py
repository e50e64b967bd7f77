"""Analytic contact environments.

The robot is kinematic: every commanded position is reached instantly and
the returned force is the environment's reaction on the end-effector, in
world coordinates. All states are frozen dataclasses, so ``env_step`` is a
pure function of ``(state, command, fingers, dt)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from ..core import Pose
from ..errors import EnvironmentFault

MAX_PENETRATION = 0.05
V_REG = 1e-3  # m/s, regularises the friction direction near zero velocity


def _velocity(last, x, dt):
    if last is None:
        return (0.0, 0.0, 0.0)
    return ((x[0] - last[0]) / dt, (x[1] - last[1]) / dt, (x[2] - last[2]) / dt)


@dataclass(frozen=True)
class Hole:
    """Round hole through a wall plate, entered along +x."""

    y: float
    z: float
    clearance: float = 0.003
    depth: float = 0.02
    k_lateral: float = 20000.0


@dataclass(frozen=True)
class WallContact:
    x_wall: float
    k_e: float = 2000.0
    b_e: float = 0.0
    hole: Hole | None = None
    inserted: bool = False
    last_pos: tuple | None = None

    def __post_init__(self):
        if self.k_e < 0 or self.b_e < 0:
            raise ValueError("wall stiffness/damping must be non-negative")

    def lateral_offset(self, p) -> float:
        if self.hole is None:
            return math.inf
        return math.hypot(p[1] - self.hole.y, p[2] - self.hole.z)

    def step(self, p, fingers, dt):
        vx, _, _ = _velocity(self.last_pos, p, dt)
        pen = p[0] - self.x_wall
        fx = fy = fz = 0.0
        inserted = self.inserted
        if self.hole is not None:
            h = self.hole
            dy, dz = p[1] - h.y, p[2] - h.z
            r = math.hypot(dy, dz)
            if pen <= 0.0:
                inserted = False
            elif not inserted and r <= h.clearance and (self.last_pos is None
                                                        or self.last_pos[0] <= self.x_wall):
                inserted = True
            if inserted:
                bottom = pen - h.depth
                if bottom > 0.0:
                    if bottom > MAX_PENETRATION:
                        raise EnvironmentFault(f"plug driven {bottom:.3f} m past hole bottom")
                    fx = -self.k_e * bottom - self.b_e * vx
                if r > h.clearance:
                    excess = r - h.clearance
                    if excess > MAX_PENETRATION:
                        raise EnvironmentFault(f"plug forced {excess:.3f} m into hole wall")
                    fy = -h.k_lateral * excess * dy / r
                    fz = -h.k_lateral * excess * dz / r
                return replace(self, inserted=True, last_pos=tuple(p)), (fx, fy, fz)
        if pen > 0.0:
            if pen > MAX_PENETRATION:
                raise EnvironmentFault(f"wall penetration {pen:.3f} m")
            fx = -self.k_e * pen - self.b_e * vx
        return replace(self, inserted=inserted, last_pos=tuple(p)), (fx, fy, fz)


@dataclass(frozen=True)
class Drawer:
    """Drawer sliding along +x behind a horizontal bar handle.

    The hand engages when it is within ``capture_radius`` of the bar and the
    fingers are flexed. While engaged the grasp couples to the handle through
    an axial spring (anchored where the grasp closed) and a vertical spring.
    The drawer is a massless Coulomb slider: it stays put until the axial
    pull exceeds ``level + stiction`` and then slides so the pull equals
    ``level``.
    """

    handle: tuple  # bar centre at zero displacement
    travel: float = 0.2
    level: float = 4.5
    stiction: float = 1.0
    k_grip: float = 5000.0
    k_vertical: float = 10000.0
    capture_radius: float = 0.015
    handle_half_width: float = 0.06
    flex_threshold: float = 0.8
    slip_force: float = 40.0
    displacement: float = 0.0
    moving: bool = False
    engaged: bool = False
    anchor: tuple = (0.0, 0.0)  # (x, z) offset of the hand from the bar at engagement

    def __post_init__(self):
        for name in ("travel", "level", "stiction", "k_grip", "k_vertical", "capture_radius"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not (0.0 <= self.displacement <= self.travel + 1e-12):
            raise ValueError("drawer displacement outside travel limits")

    def handle_position(self) -> np.ndarray:
        return np.array([self.handle[0] + self.displacement, self.handle[1], self.handle[2]])

    def step(self, p, fingers, dt):
        flex = float(np.mean(fingers))
        hx = self.handle[0] + self.displacement
        dx, dy, dz = p[0] - hx, p[1] - self.handle[1], p[2] - self.handle[2]
        engaged, anchor = self.engaged, self.anchor
        if engaged and (flex < self.flex_threshold or abs(dy) > self.handle_half_width):
            engaged = False
        if not engaged and flex >= self.flex_threshold:
            ey = max(0.0, abs(dy) - self.handle_half_width)
            if math.sqrt(dx * dx + dz * dz + ey * ey) <= self.capture_radius:
                engaged, anchor = True, (dx, dz)
        if not engaged:
            return replace(self, engaged=False, moving=False), (0.0, 0.0, 0.0)

        d = self.displacement
        moving = False
        stretch = dx - anchor[0]
        pull = self.k_grip * stretch
        breakaway = self.level + self.stiction
        if abs(pull) > breakaway or (self.moving and abs(pull) > self.level):
            target = self.level if pull > 0 else -self.level
            d_new = d + stretch - target / self.k_grip
            d_new = min(max(d_new, 0.0), self.travel)
            moving = d_new != d
            d = d_new
            pull = self.k_grip * (p[0] - self.handle[0] - d - anchor[0])
            if abs(pull) > breakaway:
                return replace(self, displacement=d, engaged=False, moving=False), (0.0, 0.0, 0.0)
        fz = -self.k_vertical * (dz - anchor[1])
        if abs(fz) > self.slip_force:
            return replace(self, displacement=d, engaged=False, moving=False), (0.0, 0.0, 0.0)
        return (replace(self, displacement=d, moving=moving, engaged=True, anchor=anchor),
                (-pull, 0.0, fz))


@dataclass(frozen=True)
class Door:
    """Hinged door opened by pressing a lever handle and pushing along +x.

    The hinge axis is vertical at ``hinge``; at angle 0 the handle sits at
    ``hinge + (0, radius)``. The lever is a spring with an end stop. The door
    is latched until the lever is pressed past ``unlatch_depth``; a latched,
    closed door behaves like a stiff wall. An open door is quasi-static with a
    closer torque ``tau0 + k_closer * angle + b_closer * angle_rate``.
    """

    hinge: tuple  # (x, y)
    handle_z: float
    radius: float = 0.5
    k_handle: float = 1500.0
    unlatch_depth: float = 0.006
    stop_depth: float = 0.014
    k_stop: float = 20000.0
    tau0: float = 8.0
    k_closer: float = 10.0
    b_closer: float = 2.0
    k_grip: float = 20000.0
    capture_radius: float = 0.02
    flex_threshold: float = 0.8
    slip_force: float = 80.0
    angle: float = 0.0
    handle_pressed: bool = False
    engaged: bool = False
    radial_anchor: float = 0.0

    def __post_init__(self):
        for name in ("radius", "k_handle", "k_stop", "tau0", "k_closer", "b_closer", "k_grip"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not (0.0 <= self.angle <= math.pi / 2):
            raise ValueError("door angle outside travel limits")

    def handle_position(self, angle: float | None = None) -> np.ndarray:
        a = self.angle if angle is None else angle
        return np.array([self.hinge[0] + self.radius * math.sin(a),
                         self.hinge[1] + self.radius * math.cos(a), self.handle_z])

    def step(self, p, fingers, dt):
        flex = float(np.mean(fingers))
        rx, ry = p[0] - self.hinge[0], p[1] - self.hinge[1]
        rho = math.hypot(rx, ry)
        phi = math.atan2(rx, ry)
        engaged, anchor = self.engaged, self.radial_anchor
        h = self.handle_position()
        if engaged and flex < self.flex_threshold:
            engaged = False
        if not engaged and flex >= self.flex_threshold:
            if np.linalg.norm(np.asarray(p) - h) <= self.capture_radius:
                engaged, anchor = True, rho - self.radius
        if not engaged:
            return replace(self, engaged=False, handle_pressed=False), (0.0, 0.0, 0.0)

        depth = self.handle_z - p[2]
        if depth >= 0.0:
            fz = self.k_handle * depth
            if depth > self.stop_depth:
                fz += self.k_stop * (depth - self.stop_depth)
                if depth - self.stop_depth > MAX_PENETRATION:
                    raise EnvironmentFault("lever driven through its end stop")
        else:
            fz = self.k_stop * depth
        pressed = depth >= self.unlatch_depth

        theta = self.angle
        latched = theta <= 0.0 and not pressed
        if latched:
            theta_new = 0.0
        else:
            c = self.radius * dt
            num = self.k_grip * rho * phi - self.tau0 / self.radius + self.b_closer * theta / c
            den = self.k_grip * rho + self.k_closer / self.radius + self.b_closer / c
            theta_new = min(max(num / den, 0.0), math.pi / 2)
        along = rho * (phi - theta_new)
        if latched and along > MAX_PENETRATION:
            raise EnvironmentFault(f"pushed {along:.3f} m into a latched door")
        f_t = -self.k_grip * along
        f_r = -self.k_grip * (rho - self.radius - anchor)
        tx, ty = math.cos(phi), -math.sin(phi)
        nx, ny = math.sin(phi), math.cos(phi)
        fx = f_t * tx + f_r * nx
        fy = f_t * ty + f_r * ny
        if math.sqrt(fx * fx + fy * fy + fz * fz) > self.slip_force:
            return (replace(self, angle=theta_new, engaged=False, handle_pressed=False),
                    (0.0, 0.0, 0.0))
        return (replace(self, angle=theta_new, engaged=True, handle_pressed=pressed,
                        radial_anchor=anchor), (fx, fy, fz))


@dataclass(frozen=True)
class WipeSurface:
    """Horizontal surface at height ``z_s`` with normal spring and kinetic friction."""

    z_s: float
    k_n: float = 10000.0
    b_n: float = 0.0
    mu: float = 0.4
    last_pos: tuple | None = None

    def __post_init__(self):
        if self.k_n < 0 or self.b_n < 0 or self.mu < 0:
            raise ValueError("surface parameters must be non-negative")

    def step(self, p, fingers, dt):
        vx, vy, vz = _velocity(self.last_pos, p, dt)
        pen = self.z_s - p[2]
        if pen <= 0.0:
            return replace(self, last_pos=tuple(p)), (0.0, 0.0, 0.0)
        if pen > MAX_PENETRATION:
            raise EnvironmentFault(f"surface penetration {pen:.3f} m")
        fn = max(0.0, self.k_n * pen - self.b_n * vz)
        speed = math.hypot(vx, vy)
        scale = self.mu * fn / max(speed, V_REG)
        return replace(self, last_pos=tuple(p)), (-scale * vx, -scale * vy, fn)


EnvState = Union[WallContact, Drawer, Door, WipeSurface]


def env_step(state: EnvState, commanded: Pose | np.ndarray, finger_joints, dt: float):
    """Advance the environment one tick; returns ``(new_state, force)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    pos = commanded.position if isinstance(commanded, Pose) else np.asarray(commanded, float)
    new_state, f = state.step((float(pos[0]), float(pos[1]), float(pos[2])),
                              np.asarray(finger_joints, dtype=float), dt)
    return new_state, np.array(f, dtype=float)


def force_to_vibration(F, full_scale: float = 20.0) -> float:
    """Vibration duty cycle: force magnitude mapped linearly from 0..20 N onto 0..1."""
    return float(min(max(np.linalg.norm(F) / full_scale, 0.0), 1.0))
