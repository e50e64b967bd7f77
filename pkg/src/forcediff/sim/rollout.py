"""Closed-loop execution shared by the scripted demonstrator and policy rollouts.

An :class:`EpisodeEngine` owns the environment, the admittance controller,
the force filter and the success monitor. Callers hand it short 10 Hz
waypoint sequences; the engine densifies them and runs controller ticks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..admittance import DEFAULT_VELOCITY_LIMIT, AdmittanceController, AdmittanceParams
from ..core import (DEFAULT_FORCE_CAP, DEFAULT_LPF_ALPHA, WAYPOINT_DT, LowPassFilter, Pose,
                    TrajectoryPoint, check_force, quat_to_6d)
from ..errors import ControllerError, EnvironmentFault, ForceLimitError
from ..interpolation import densify
from .envs import Door, Drawer, env_step
from .tasks import StepContext, Task

HISTORY = 2
WORKSPACE_RADIUS = 1.0  # m around the start position


def frame_dim(scene_dim: int, num_fingers: int) -> int:
    return scene_dim + 3 + 6 + num_fingers + 3


@dataclass(frozen=True)
class Observation:
    """Two stacked frames, oldest first; each frame is
    ``[scene S, position 3, rotation6d 6, fingers J, filtered force 3]``."""

    frames: np.ndarray
    scene_dim: int
    num_fingers: int

    def __post_init__(self):
        f = np.array(self.frames, dtype=float)
        if f.shape != (HISTORY, frame_dim(self.scene_dim, self.num_fingers)):
            raise ValueError(f"observation frames have shape {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError("observation contains non-finite values")
        f.setflags(write=False)
        object.__setattr__(self, "frames", f)

    def _cols(self, start, n):
        return self.frames[:, start:start + n]

    @property
    def scene_features(self):
        return self._cols(0, self.scene_dim)

    @property
    def positions(self):
        return self._cols(self.scene_dim, 3)

    @property
    def rotations6d(self):
        return self._cols(self.scene_dim + 3, 6)

    @property
    def finger_joints(self):
        return self._cols(self.scene_dim + 9, self.num_fingers)

    @property
    def force(self):
        return self._cols(self.scene_dim + 9 + self.num_fingers, 3)

    def vector(self) -> np.ndarray:
        return self.frames.reshape(-1)


@dataclass
class Outcome:
    success: bool
    reason: str


TICK_FIELDS = ("t", "px", "py", "pz", "qw", "qx", "qy", "qz",
               "fx", "fy", "fz", "fdx", "fdy", "fdz", "progress")


class EpisodeEngine:
    def __init__(self, task: Task, scene, start: np.ndarray, bias: np.ndarray,
                 params: AdmittanceParams, *, force_control: bool = True,
                 control_rate: float = 100.0, lpf_alpha: float = DEFAULT_LPF_ALPHA,
                 damp_velocity_error: bool = False,
                 velocity_limit: float = DEFAULT_VELOCITY_LIMIT,
                 force_cap: float = DEFAULT_FORCE_CAP, max_time: float = 60.0,
                 initial_fingers=None, record_ticks: bool = False,
                 workspace_radius: float = WORKSPACE_RADIUS):
        self.task = task
        self.scene = scene
        self.bias = np.asarray(bias, dtype=float)
        self.env = task.make_env(scene)
        self.dt = 1.0 / control_rate
        self.control_rate = control_rate
        self.force_control = force_control
        self.ctrl = AdmittanceController(params, self.dt, damp_velocity_error, velocity_limit,
                                         initial_position=np.asarray(start, dtype=float))
        self.force_cap = force_cap
        self.max_time = max_time
        self.position = np.asarray(start, dtype=float).copy()
        self.start = self.position.copy()
        self.workspace_radius = workspace_radius
        self.rotation = task.base_rotation()
        self.fingers = (np.zeros(task.hand.dof) if initial_fingers is None
                        else np.asarray(initial_fingers, dtype=float).copy())
        self.force_raw = np.zeros(3)
        self.force = np.zeros(3)
        self.filter = LowPassFilter(lpf_alpha)
        self.filter(self.force)
        self.monitor = task.make_monitor(scene)
        self.t = 0.0
        self.n_ticks = 0
        self.outcome: Outcome | None = None
        self.record_ticks = record_ticks
        self.ticks: list[tuple] = []
        self._ticks_per_step = int(round(control_rate * WAYPOINT_DT))
        self._prev_frame: np.ndarray | None = None
        self._cur_frame = self.frame()

    # observation -----------------------------------------------------
    def frame(self) -> np.ndarray:
        feats = self.task.scene_features(self.env, self.scene, self.position, self.bias,
                                         self.monitor)
        return np.concatenate([feats, self.position, quat_to_6d(self.rotation),
                               self.fingers, self.force])

    def observe(self) -> Observation:
        """Frames at the latest 10 Hz boundary and the one before (repeated at the start)."""
        prev = self._cur_frame if self._prev_frame is None else self._prev_frame
        return Observation(np.stack([prev, self._cur_frame]), self.task.scene_dim,
                           len(self.fingers))

    def context(self) -> StepContext:
        return StepContext(self.t, self.env, self.position.copy(), self.force.copy(),
                           self.monitor)

    def current_waypoint(self) -> TrajectoryPoint:
        return TrajectoryPoint(Pose(self.rotation, self.position), self.fingers.copy(),
                               self.force.copy(), self.t)

    @property
    def finished(self) -> bool:
        return self.outcome is not None

    def progress(self) -> float:
        if isinstance(self.env, Drawer):
            return self.env.displacement
        if isinstance(self.env, Door):
            return self.env.angle
        return self.monitor.progress()

    # execution -------------------------------------------------------
    def execute(self, waypoints: list[TrajectoryPoint], *, raise_faults: bool = False,
                stop_on_outcome: bool = True) -> bool:
        """Densify ``waypoints`` (first one at the current time) and run every tick.

        Returns True once the episode has an outcome. Faults become failure
        outcomes unless ``raise_faults`` is set.
        """
        dense = densify(waypoints, self.control_rate)
        for k in range(1, len(dense)):
            try:
                self._tick(dense, k)
            except (EnvironmentFault, ControllerError, ForceLimitError) as exc:
                if raise_faults:
                    raise
                self.outcome = Outcome(False, f"fault: {exc}")
                return True
            status = self.monitor.status
            if status is not None and self.outcome is None:
                self.outcome = Outcome(status == "success", self.monitor.reason)
            if self.outcome is not None and stop_on_outcome:
                return True
            if self.t >= self.max_time - 1e-9:
                if self.outcome is None:
                    self.outcome = Outcome(False, "timeout")
                return True
        return self.finished and stop_on_outcome

    def _tick(self, dense, k):
        sp = dense.setpoint(k)
        if self.force_control:
            p = self.ctrl.update(sp, self.force_raw)
        else:
            p = sp.p_d
        if not np.linalg.norm(p - self.start) <= self.workspace_radius:
            raise EnvironmentFault("end effector left the workspace")
        fingers = dense.finger_joints[k]
        self.env, f = env_step(self.env, p, fingers, self.dt)
        check_force(f, self.force_cap)
        self.n_ticks += 1
        self.t = self.n_ticks * self.dt
        self.position = np.array(p, dtype=float)
        self.rotation = dense.rotations[k].copy()
        self.fingers = fingers.copy()
        self.force_raw = f
        self.force = self.filter(f)
        self.monitor.update(self.env, self.position, f, self.t)
        if self.n_ticks % self._ticks_per_step == 0:
            self._prev_frame, self._cur_frame = self._cur_frame, self.frame()
        if self.record_ticks:
            self.ticks.append((self.t, *self.position, *self.rotation, *f, *sp.F_d,
                               self.progress()))

    def tick_array(self) -> np.ndarray:
        if not self.ticks:
            return np.zeros((0, len(TICK_FIELDS)))
        return np.array(self.ticks, dtype=float)
