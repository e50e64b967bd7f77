"""Task definitions: scene randomisation, scene features, scripted phase
machines and success monitors for the five desk-scale tasks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Callable

import numpy as np

from ..core import IDENTITY_QUAT, quat_from_axis_angle, slerp, angular_distance
from ..errors import DemoTimeout
from ..retargeting import HandModel, RetargetConfig, forward_keypoints, retarget, toy_hand
from .envs import Door, Drawer, EnvState, Hole, WallContact, WipeSurface

TASK_NAMES = ("insertion", "door", "dragging", "wiping", "drawing")
AXES = {"x": 0, "y": 1, "z": 2}

Q_OPEN = np.array([0.2, 0.3, 0.2, 0.3])
Q_CLOSED = np.array([1.1, 1.2, 1.1, 1.2])


@dataclass(frozen=True)
class TaskParams:
    """Tunable task constants; every field is overridable from the config file."""

    # perception and demonstration noise
    perception_bias_std: float = 0.002
    demo_pos_noise: float = 0.002
    demo_force_noise: float = 0.2
    start_jitter: float = 0.02
    phase_timeout: float = 10.0
    # drawer
    drawer_travel: float = 0.2
    drawer_level: float = 4.5
    drawer_stiction: float = 1.0
    drawer_k_grip: float = 5000.0
    drawer_k_vertical: float = 10000.0
    drawer_pull_speed: float = 0.08
    drawer_pull_fraction: float = 0.9
    drawer_success_fraction: float = 0.8
    # door
    door_radius: float = 0.5
    door_k_handle: float = 1500.0
    door_press_depth: float = 0.010
    door_tau0: float = 8.0
    door_k_closer: float = 10.0
    door_k_grip: float = 20000.0
    door_open_angle: float = 0.62
    door_success_angle: float = math.radians(30.0)
    door_angular_speed: float = 0.4
    # wiping
    wipe_k_n: float = 10000.0
    wipe_mu: float = 0.4
    wipe_force: float = 8.0
    wipe_length: float = 0.15
    wipe_speed: float = 0.06
    wipe_band_low: float = 2.0
    wipe_band_high: float = 15.0
    wipe_band_fraction: float = 0.9
    # insertion
    insert_k_e: float = 20000.0
    insert_clearance: float = 0.003
    insert_depth: float = 0.02
    insert_force: float = 3.0
    insert_tolerance: float = 0.003
    # drawing
    draw_k_n: float = 5000.0
    draw_mu: float = 0.2
    draw_force: float = 5.0
    draw_length: float = 0.12
    draw_amplitude: float = 0.015
    draw_speed: float = 0.04
    draw_rms_tolerance: float = 0.003
    draw_contact_gap: float = 0.05
    draw_press_depth: float = 0.003
    # hand
    demo_retarget_beta: float = 1e-3
    contact_threshold: float = 0.5

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}


@dataclass
class Reference:
    """Nominal (noise-free) operator command at one 10 Hz tick."""

    position: np.ndarray
    rotation: np.ndarray
    posture: np.ndarray  # human-hand target posture expressed as robot joints
    force: np.ndarray


@dataclass
class StepContext:
    t: float
    env: EnvState
    position: np.ndarray  # actual end-effector position
    force: np.ndarray     # filtered measured force
    monitor: "Monitor"


def _toward(p, target, max_step):
    d = target - p
    n = float(np.linalg.norm(d))
    if n <= max_step:
        return target.copy(), True
    return p + d * (max_step / n), False


def _ramp(v, target, max_step):
    return _toward(np.asarray(v, float), np.asarray(target, float), max_step)


def _rot_toward(q, target, max_angle):
    ang = angular_distance(q, target)
    if ang <= max_angle:
        return target.copy()
    return slerp(q, target, max_angle / ang)


# ---------------------------------------------------------------- monitors

class Monitor:
    """Tracks task progress tick by tick; ``status`` is None while running."""

    def __init__(self, task: "Task", scene):
        self.task = task
        self.scene = scene
        self.status: str | None = None
        self.reason = ""

    def update(self, env, pos, force, t) -> None:  # pragma: no cover - abstract
        raise NotImplementedError

    def progress(self) -> float:
        return 0.0

    def _finish(self, ok: bool, reason: str):
        if self.status is None:
            self.status = "success" if ok else "failure"
            self.reason = reason


class DrawerMonitor(Monitor):
    def update(self, env, pos, force, t):
        p = self.task.params
        if env.displacement >= p.drawer_success_fraction * p.drawer_travel:
            self._finish(True, "drawer opened")


class DoorMonitor(Monitor):
    def update(self, env, pos, force, t):
        if env.angle >= self.task.params.door_success_angle:
            self._finish(True, "door opened")


class WipeMonitor(Monitor):
    def __init__(self, task, scene):
        super().__init__(task, scene)
        self.contact_ticks = 0
        self.band_ticks = 0
        self.min_x = math.inf
        self.max_x = -math.inf

    def update(self, env, pos, force, t):
        p = self.task.params
        fz = force[2]
        if fz > p.contact_threshold:
            self.contact_ticks += 1
            if p.wipe_band_low <= abs(fz) <= p.wipe_band_high:
                self.band_ticks += 1
            if abs(pos[1] - self.scene.y) <= 0.02:
                self.min_x = min(self.min_x, pos[0])
                self.max_x = max(self.max_x, pos[0])
        if self.covered():
            frac = self.band_fraction()
            self._finish(frac >= p.wipe_band_fraction,
                         f"strip covered, force in band {frac:.0%} of contact time")

    def covered(self) -> bool:
        s = self.scene
        return self.min_x <= s.x + 0.005 and self.max_x >= s.x + self.task.params.wipe_length - 0.005

    def band_fraction(self) -> float:
        return self.band_ticks / self.contact_ticks if self.contact_ticks else 0.0

    def progress(self) -> float:
        if self.max_x == -math.inf:
            return 0.0
        return float(np.clip((self.max_x - self.scene.x) / self.task.params.wipe_length, 0.0, 1.0))


class InsertionMonitor(Monitor):
    def update(self, env, pos, force, t):
        p = self.task.params
        s = self.scene
        lateral = math.hypot(pos[1] - s.y, pos[2] - s.z)
        if env.inserted and pos[0] - s.x >= p.insert_depth - 0.001 and lateral <= p.insert_tolerance:
            self._finish(True, "plug seated")


class DrawMonitor(Monitor):
    def __init__(self, task, scene):
        super().__init__(task, scene)
        self.path = task.draw_path(scene, 400)
        self.started = False
        self.u_max = 0.0
        self.sq_dev = 0.0
        self.n = 0
        self.gap = 0.0

    def update(self, env, pos, force, t):
        p = self.task.params
        contact = force[2] > p.contact_threshold
        d = np.linalg.norm(self.path[:, :2] - np.asarray(pos[:2]), axis=1)
        i = int(np.argmin(d))
        if not self.started:
            if contact and i <= 8 and d[i] < 0.01:
                self.started = True
            else:
                return
        if not contact:
            self.gap += 0.01
            if self.u_max >= 0.95:
                self._complete()
            elif self.gap > p.draw_contact_gap + 1e-9:
                self._finish(False, "lost contact while drawing")
            return
        self.gap = 0.0
        self.sq_dev += float(d[i]) ** 2
        self.n += 1
        self.u_max = max(self.u_max, i / (len(self.path) - 1))
        if self.u_max >= 0.995:
            self._complete()

    def _complete(self):
        rms = math.sqrt(self.sq_dev / self.n)
        self._finish(rms <= self.task.params.draw_rms_tolerance,
                     f"path RMS deviation {rms * 1000:.2f} mm")

    def progress(self) -> float:
        return self.u_max


# ---------------------------------------------------------------- tasks

@dataclass(frozen=True)
class DrawerScene:
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class DoorScene:
    hinge_x: float
    hinge_y: float
    z: float


@dataclass(frozen=True)
class SurfaceScene:
    x: float
    y: float
    z: float


class Task:
    name = ""
    preset = ""
    tracking_axis = 0
    scene_dim = 4
    ranges: dict[str, tuple[float, float]] = {}
    monitor_cls: type[Monitor] = Monitor

    def __init__(self, params: TaskParams | None = None, hand: HandModel | None = None):
        self.params = params or TaskParams()
        self.hand = hand or toy_hand()

    # scene / env -----------------------------------------------------
    def sample_scene(self, rng: np.random.Generator):
        vals = {k: rng.uniform(lo, hi) for k, (lo, hi) in self.ranges.items()}
        return self.scene_cls(**vals)

    def make_env(self, scene) -> EnvState:
        raise NotImplementedError

    def object_point(self, env, scene) -> np.ndarray:
        raise NotImplementedError

    def scene_features(self, env, scene, pos, bias, monitor: Monitor) -> np.ndarray:
        rel = self.object_point(env, scene) + bias - np.asarray(pos)
        extra = self.extra_feature(env, monitor)
        return rel if extra is None else np.append(rel, extra)

    def extra_feature(self, env, monitor):
        return None

    def make_monitor(self, scene) -> Monitor:
        return self.monitor_cls(self, scene)

    def start_position(self, scene, rng) -> np.ndarray:
        j = self.params.start_jitter
        return self.start_anchor(scene) + rng.uniform(-j, j, 3)

    def start_anchor(self, scene) -> np.ndarray:
        raise NotImplementedError

    def base_rotation(self) -> np.ndarray:
        return IDENTITY_QUAT.copy()

    def initial_posture(self) -> np.ndarray:
        return Q_OPEN.copy()

    def machine(self, scene, start: np.ndarray) -> "PhaseMachine":
        raise NotImplementedError


class PhaseMachine:
    """Scripted operator: emits one nominal reference per 10 Hz tick."""

    def __init__(self, task: Task, scene, start: np.ndarray):
        self.task = task
        self.p = task.params
        self.scene = scene
        self.ref = Reference(start.copy(), task.base_rotation(), task.initial_posture(), np.zeros(3))
        self.phase = ""
        self.phase_t = 0.0
        self.done = False
        self.counter = 0
        self.enter(self.phases()[0])

    def phases(self) -> list[str]:
        raise NotImplementedError

    def enter(self, phase: str):
        self.phase = phase
        self.phase_t = 0.0
        self.counter = 0

    def next_phase(self):
        ph = self.phases()
        i = ph.index(self.phase)
        if i + 1 >= len(ph):
            self.done = True
        else:
            self.enter(ph[i + 1])

    def advance(self, ctx: StepContext) -> Reference:
        self.phase_t += 0.1
        self.counter += 1
        if self.phase_t > self.p.phase_timeout + 1e-9:
            raise DemoTimeout(f"{self.task.name}: phase '{self.phase}' timed out")
        getattr(self, "step_" + self.phase)(ctx)
        return Reference(self.ref.position.copy(), self.ref.rotation.copy(),
                         self.ref.posture.copy(), self.ref.force.copy())

    # helpers ---------------------------------------------------------
    def move(self, target, speed) -> bool:
        self.ref.position, arrived = _toward(self.ref.position, np.asarray(target, float), speed * 0.1)
        return arrived

    def force_to(self, target, rate=3.0) -> bool:
        self.ref.force, arrived = _ramp(self.ref.force, target, rate)
        return arrived

    def posture_to(self, target, rate=0.25) -> bool:
        self.ref.posture, arrived = _ramp(self.ref.posture, target, rate)
        return arrived

    def rotate_to(self, target, rate=0.05):
        self.ref.rotation = _rot_toward(self.ref.rotation, target, rate)


# ---- dragging

class DraggingMachine(PhaseMachine):
    def phases(self):
        return ["reach", "descend", "engage", "pull", "release", "lift"]

    def handle(self, ctx):
        return ctx.env.handle_position()

    def step_reach(self, ctx):
        if self.move(self.handle(ctx) + [0.0, 0.0, 0.05], 0.15):
            self.next_phase()

    def step_descend(self, ctx):
        if self.move(self.handle(ctx), 0.05):
            self.next_phase()

    def step_engage(self, ctx):
        if self.posture_to(Q_CLOSED) and self.counter >= 6:
            self.next_phase()

    def step_pull(self, ctx):
        p = self.p
        self.force_to([-p.drawer_level, 0.0, 0.0], rate=1.5)
        self.rotate_to(quat_from_axis_angle([0, 1, 0], -0.1))
        self.ref.position = self.ref.position + [p.drawer_pull_speed * 0.1, 0.0, 0.0]
        if ctx.env.displacement >= p.drawer_pull_fraction * p.drawer_travel:
            self.next_phase()

    def step_release(self, ctx):
        f = self.force_to(np.zeros(3), rate=2.5)
        if f and self.posture_to(Q_OPEN):
            self.next_phase()

    def step_lift(self, ctx):
        self.rotate_to(self.task.base_rotation())
        if self.counter == 1:
            self.lift_target = self.ref.position + [0.0, 0.0, 0.05]
        if self.move(self.lift_target, 0.1):
            self.next_phase()


class DraggingTask(Task):
    name = "dragging"
    preset = "dragging"
    tracking_axis = 0
    scene_cls = DrawerScene
    ranges = {"x": (0.45, 0.55), "y": (-0.05, 0.05), "z": (0.10, 0.14)}
    monitor_cls = DrawerMonitor

    def make_env(self, scene):
        p = self.params
        return Drawer(handle=(scene.x, scene.y, scene.z), travel=p.drawer_travel,
                      level=p.drawer_level, stiction=p.drawer_stiction, k_grip=p.drawer_k_grip,
                      k_vertical=p.drawer_k_vertical)

    def object_point(self, env, scene):
        return env.handle_position()

    def extra_feature(self, env, monitor):
        return env.displacement

    def start_anchor(self, scene):
        return np.array([scene.x + 0.12, scene.y, scene.z + 0.08])

    def machine(self, scene, start):
        return DraggingMachine(self, scene, start)


# ---- door

class DoorMachine(PhaseMachine):
    def phases(self):
        return ["reach", "descend", "engage", "press", "push", "unload", "release", "retreat"]

    def h0(self, ctx):
        return ctx.env.handle_position(0.0)

    def step_reach(self, ctx):
        if self.move(self.h0(ctx) + [0.0, 0.0, 0.03], 0.15):
            self.next_phase()

    def step_descend(self, ctx):
        if self.move(self.h0(ctx), 0.05):
            self.next_phase()

    def step_engage(self, ctx):
        if self.posture_to(Q_CLOSED) and self.counter >= 6:
            self.theta = 0.0
            self.next_phase()

    def _press_force(self):
        p = self.p
        return p.door_k_handle * p.door_press_depth

    def step_press(self, ctx):
        p = self.p
        moved = self.move(self.h0(ctx) - [0.0, 0.0, p.door_press_depth], 0.02)
        f = self.force_to([0.0, 0.0, self._press_force()], rate=4.0)
        if moved and f:
            self.next_phase()

    def step_push(self, ctx):
        p = self.p
        env = ctx.env
        self.theta = min(self.theta + p.door_angular_speed * 0.1, p.door_open_angle)
        th = self.theta
        hx, hy = env.hinge
        self.ref.position = np.array([hx + p.door_radius * math.sin(th),
                                      hy + p.door_radius * math.cos(th),
                                      env.handle_z - p.door_press_depth])
        ft = -(p.door_tau0 + p.door_k_closer * th) / p.door_radius
        self.force_to([ft * math.cos(th), -ft * math.sin(th), self._press_force()], rate=6.0)
        self.rotate_to(quat_from_axis_angle([0, 0, 1], -th), rate=0.06)
        if env.angle >= p.door_open_angle - 0.02:
            self.next_phase()

    def step_unload(self, ctx):
        if self.force_to(np.zeros(3), rate=7.0) and self.counter >= 3:
            self.next_phase()

    def step_release(self, ctx):
        if self.posture_to(Q_OPEN):
            self.next_phase()

    def step_retreat(self, ctx):
        if self.counter == 1:
            self.retreat_target = self.ref.position + [-0.05, 0.0, 0.03]
        if self.move(self.retreat_target, 0.1):
            self.next_phase()


class DoorTask(Task):
    name = "door"
    preset = "door"
    tracking_axis = 0
    scene_cls = DoorScene
    ranges = {"hinge_x": (0.55, 0.65), "hinge_y": (-0.55, -0.45), "z": (0.18, 0.22)}
    monitor_cls = DoorMonitor

    def make_env(self, scene):
        p = self.params
        return Door(hinge=(scene.hinge_x, scene.hinge_y), handle_z=scene.z, radius=p.door_radius,
                    k_handle=p.door_k_handle, tau0=p.door_tau0, k_closer=p.door_k_closer,
                    k_grip=p.door_k_grip)

    def object_point(self, env, scene):
        return env.handle_position()

    def extra_feature(self, env, monitor):
        return env.angle

    def start_anchor(self, scene):
        return np.array([scene.hinge_x - 0.15, scene.hinge_y + self.params.door_radius, scene.z + 0.08])

    def machine(self, scene, start):
        return DoorMachine(self, scene, start)


# ---- wiping

class WipingMachine(PhaseMachine):
    def phases(self):
        return ["reach", "descend", "press", "wipe", "unload", "lift"]

    def __init__(self, task, scene, start):
        super().__init__(task, scene, start)

    def s0(self):
        return np.array([self.scene.x, self.scene.y, self.scene.z])

    def step_reach(self, ctx):
        if self.move(self.s0() + [0.0, 0.0, 0.02], 0.15):
            self.next_phase()

    def step_descend(self, ctx):
        if self.move(self.s0() + [0.0, 0.0, 0.002], 0.02):
            self.next_phase()

    def step_press(self, ctx):
        p = self.p
        moved = self.move(self.s0() - [0.0, 0.0, p.wipe_force / p.wipe_k_n], 0.02)
        if self.force_to([0.0, 0.0, p.wipe_force], rate=2.0) and moved and self.counter >= 4:
            self.next_phase()

    def step_wipe(self, ctx):
        p = self.p
        self.force_to([-p.wipe_mu * p.wipe_force, 0.0, p.wipe_force], rate=1.6)
        self.rotate_to(quat_from_axis_angle([0, 1, 0], 0.1))
        end = self.scene.x + p.wipe_length + 0.01
        self.ref.position = self.ref.position + [p.wipe_speed * 0.1, 0.0, 0.0]
        if self.ref.position[0] >= end:
            self.next_phase()

    def step_unload(self, ctx):
        if self.force_to(np.zeros(3), rate=4.0):
            self.next_phase()

    def step_lift(self, ctx):
        self.rotate_to(self.task.base_rotation())
        if self.move(np.append(self.ref.position[:2], self.scene.z + 0.03), 0.1):
            self.next_phase()


class WipingTask(Task):
    name = "wiping"
    preset = "wiping"
    tracking_axis = 2
    scene_cls = SurfaceScene
    ranges = {"x": (0.40, 0.45), "y": (-0.05, 0.05), "z": (0.02, 0.06)}
    monitor_cls = WipeMonitor

    def initial_posture(self):
        return Q_CLOSED.copy()

    def make_env(self, scene):
        p = self.params
        return WipeSurface(z_s=scene.z, k_n=p.wipe_k_n, mu=p.wipe_mu)

    def object_point(self, env, scene):
        return np.array([scene.x, scene.y, scene.z])

    def extra_feature(self, env, monitor):
        return monitor.progress()

    def start_anchor(self, scene):
        return np.array([scene.x - 0.06, scene.y, scene.z + 0.08])

    def machine(self, scene, start):
        return WipingMachine(self, scene, start)


# ---- insertion

class InsertionMachine(PhaseMachine):
    def phases(self):
        return ["reach", "insert", "press", "hold", "unload", "release"]

    def __init__(self, task, scene, start):
        super().__init__(task, scene, start)

    def c(self):
        return np.array([self.scene.x, self.scene.y, self.scene.z])

    def step_reach(self, ctx):
        if self.move(self.c() - [0.02, 0.0, 0.0], 0.15):
            self.next_phase()

    def step_insert(self, ctx):
        if self.move(self.c() + [self.p.insert_depth, 0.0, 0.0], 0.05):
            self.next_phase()

    def step_press(self, ctx):
        p = self.p
        self.ref.position = self.c() + [p.insert_depth + p.insert_force / p.insert_k_e, 0.0, 0.0]
        if self.force_to([-p.insert_force, 0.0, 0.0], rate=1.0):
            self.next_phase()

    def step_hold(self, ctx):
        if self.counter >= 5:
            self.next_phase()

    def step_unload(self, ctx):
        if self.force_to(np.zeros(3), rate=1.5):
            self.next_phase()

    def step_release(self, ctx):
        if self.posture_to(Q_OPEN):
            self.next_phase()


class InsertionTask(Task):
    name = "insertion"
    preset = "insertion"
    tracking_axis = 0
    scene_dim = 3
    scene_cls = SurfaceScene
    ranges = {"x": (0.50, 0.55), "y": (-0.05, 0.05), "z": (0.10, 0.15)}
    monitor_cls = InsertionMonitor

    def initial_posture(self):
        return Q_CLOSED.copy()

    def make_env(self, scene):
        p = self.params
        return WallContact(x_wall=scene.x, k_e=p.insert_k_e,
                           hole=Hole(scene.y, scene.z, p.insert_clearance, p.insert_depth))

    def object_point(self, env, scene):
        return np.array([scene.x, scene.y, scene.z])

    def start_anchor(self, scene):
        return np.array([scene.x - 0.12, scene.y, scene.z + 0.05])

    def machine(self, scene, start):
        return InsertionMachine(self, scene, start)


# ---- drawing

class DrawingMachine(PhaseMachine):
    def phases(self):
        return ["reach", "descend", "press", "draw", "unload", "lift"]

    def __init__(self, task, scene, start):
        super().__init__(task, scene, start)
        self.path = task.draw_path(scene, 400)
        seg = np.linalg.norm(np.diff(self.path, axis=0), axis=1)
        self.arclen = np.concatenate([[0.0], np.cumsum(seg)])
        self.s = 0.0

    def point_at(self, s):
        i = int(np.searchsorted(self.arclen, s, side="right") - 1)
        i = min(max(i, 0), len(self.path) - 2)
        w = (s - self.arclen[i]) / (self.arclen[i + 1] - self.arclen[i])
        return self.path[i] + w * (self.path[i + 1] - self.path[i]), self.path[i + 1] - self.path[i]

    def step_reach(self, ctx):
        if self.move(self.path[0] + [0.0, 0.0, 0.02], 0.15):
            self.next_phase()

    def step_descend(self, ctx):
        if self.move(self.path[0] + [0.0, 0.0, 0.002], 0.02):
            self.next_phase()

    def step_press(self, ctx):
        p = self.p
        moved = self.move(self.path[0] - [0.0, 0.0, p.draw_press_depth], 0.02)
        if self.force_to([0.0, 0.0, p.draw_force], rate=1.0) and moved and self.counter >= 4:
            self.next_phase()

    def step_draw(self, ctx):
        p = self.p
        self.s = min(self.s + p.draw_speed * 0.1, self.arclen[-1])
        pt, tangent = self.point_at(self.s)
        tangent = tangent / np.linalg.norm(tangent)
        self.ref.position = pt - [0.0, 0.0, p.draw_press_depth]
        fric = -p.draw_mu * p.draw_force * tangent
        self.force_to([fric[0], fric[1], p.draw_force], rate=1.0)
        if self.s >= self.arclen[-1]:
            self.next_phase()

    def step_unload(self, ctx):
        if self.force_to(np.zeros(3), rate=1.5):
            self.next_phase()

    def step_lift(self, ctx):
        if self.move(np.append(self.ref.position[:2], self.scene.z + 0.03), 0.1):
            self.next_phase()


class DrawingTask(Task):
    name = "drawing"
    preset = "drawing"
    tracking_axis = 2
    scene_cls = SurfaceScene
    ranges = {"x": (0.40, 0.45), "y": (-0.08, -0.02), "z": (0.02, 0.06)}
    monitor_cls = DrawMonitor

    def initial_posture(self):
        return Q_CLOSED.copy()

    def make_env(self, scene):
        p = self.params
        return WipeSurface(z_s=scene.z, k_n=p.draw_k_n, mu=p.draw_mu)

    def draw_path(self, scene, n: int) -> np.ndarray:
        p = self.params
        u = np.linspace(0.0, 1.0, n)
        return np.stack([scene.x + p.draw_amplitude * np.sin(np.pi * u),
                         scene.y + p.draw_length * u,
                         np.full(n, scene.z)], axis=1)

    def object_point(self, env, scene):
        return np.array([scene.x, scene.y, scene.z])

    def extra_feature(self, env, monitor):
        return monitor.progress()

    def start_anchor(self, scene):
        return np.array([scene.x - 0.05, scene.y - 0.03, scene.z + 0.08])

    def machine(self, scene, start):
        return DrawingMachine(self, scene, start)


TASKS: dict[str, type[Task]] = {
    "insertion": InsertionTask,
    "door": DoorTask,
    "dragging": DraggingTask,
    "wiping": WipingTask,
    "drawing": DrawingTask,
}


def make_task(name: str, params: TaskParams | None = None) -> Task:
    try:
        return TASKS[name](params)
    except KeyError:
        raise ValueError(f"unknown task '{name}', expected one of {TASK_NAMES}") from None


class PostureRetargeter:
    """Turns a target hand posture into robot joints through the human-hand keypoint pipeline.

    The scripted operator holds a posture; the keypoint vectors a human hand
    in that posture would produce are synthesised by forward kinematics and
    scaled by 1/alpha, then solved back with :func:`retarget`.
    """

    def __init__(self, hand: HandModel, cfg: RetargetConfig):
        self.hand = hand
        self.cfg = cfg
        self.q = None

    def __call__(self, posture: np.ndarray) -> np.ndarray:
        v = forward_keypoints(self.hand, posture) / self.cfg.alpha
        q_prev = posture if self.q is None else self.q
        self.q = retarget(self.hand, v, q_prev, self.cfg).q
        return self.q.copy()
