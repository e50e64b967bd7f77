"""Closed-loop policy episodes and their metrics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..admittance import PRESETS, AdmittanceParams
from ..core import DEFAULT_LPF_ALPHA
from ..policy.infer import Policy, infer_chunk
from ..sim.rollout import TICK_FIELDS, EpisodeEngine
from ..sim.tasks import Task

EPISODE_MODES = ("teacher", "student", "no-force-control")
CONTACT_THRESHOLD = 0.5


@dataclass(frozen=True)
class RolloutSettings:
    admittance: AdmittanceParams | None = None  # None selects the task preset
    control_rate: float = 100.0
    execute_steps: int = 8
    max_time: float = 60.0
    lpf_alpha: float = DEFAULT_LPF_ALPHA
    damp_velocity_error: bool = False
    velocity_limit: float = 1.0
    force_cap: float = 100.0
    baseline_inference: str = "student"  # sampler used by the no-force-control mode

    def __post_init__(self):
        if not 1 <= self.execute_steps <= 8:
            raise ValueError("execute_steps must be in 1..8")
        if self.max_time <= 0:
            raise ValueError("max_time must be positive")


@dataclass(frozen=True)
class EpisodeMetrics:
    mean_force: float
    std_force: float
    rmse: float
    duration: float
    contact_ticks: int


def compute_metrics(ticks: np.ndarray, tracking_axis: int) -> EpisodeMetrics:
    """Contact-force statistics over ticks with |F| above the contact threshold;
    tracking RMSE on one axis over ticks where desired or measured force on
    that axis is at least the threshold."""
    if ticks.shape[0] == 0:
        return EpisodeMetrics(0.0, 0.0, 0.0, 0.0, 0)
    F = ticks[:, 8:11]
    Fd = ticks[:, 11:14]
    mag = np.linalg.norm(F, axis=1)
    contact = mag > CONTACT_THRESHOLD
    mean = float(mag[contact].mean()) if contact.any() else 0.0
    std = float(mag[contact].std()) if contact.any() else 0.0
    a = tracking_axis
    track = (np.abs(Fd[:, a]) >= CONTACT_THRESHOLD) | (np.abs(F[:, a]) >= CONTACT_THRESHOLD)
    rmse = float(np.sqrt(np.mean((F[track, a] - Fd[track, a]) ** 2))) if track.any() else 0.0
    return EpisodeMetrics(mean, std, rmse, float(ticks[-1, 0]), int(contact.sum()))


@dataclass
class EpisodeLog:
    task: str
    mode: str
    seed: int
    ticks: np.ndarray
    success: bool
    reason: str
    metrics: EpisodeMetrics
    tracking_axis: int
    n_replans: int = 0
    denoiser_evals: int = 0

    fields = TICK_FIELDS

    def recompute(self) -> EpisodeMetrics:
        return compute_metrics(self.ticks, self.tracking_axis)


def episode_scene(task: Task, seed: int):
    """Scene, start position and perception bias for ``seed`` (same draws as the demonstrator)."""
    rng = np.random.default_rng(seed)
    scene = task.sample_scene(rng)
    start = task.start_position(scene, rng)
    bias = rng.normal(0.0, task.params.perception_bias_std, 3)
    return scene, start, bias


def run_episode(policy: Policy, mode: str, task: Task, seed: int,
                settings: RolloutSettings = RolloutSettings()) -> EpisodeLog:
    """Receding-horizon rollout: observe, infer a chunk, execute it, repeat."""
    if mode not in EPISODE_MODES:
        raise ValueError(f"unknown episode mode '{mode}'")
    if policy.task != task.name:
        raise ValueError(f"policy trained for '{policy.task}', episode task is '{task.name}'")
    infer_mode = settings.baseline_inference if mode == "no-force-control" else mode
    model = policy.model(infer_mode)
    scene, start, bias = episode_scene(task, seed)
    engine = EpisodeEngine(
        task, scene, start, bias, settings.admittance or PRESETS[task.preset],
        force_control=mode != "no-force-control", control_rate=settings.control_rate,
        lpf_alpha=settings.lpf_alpha, damp_velocity_error=settings.damp_velocity_error,
        velocity_limit=settings.velocity_limit, force_cap=settings.force_cap,
        max_time=settings.max_time, initial_fingers=task.initial_posture(), record_ticks=True)
    evals0 = model.net.n_evals
    current = engine.current_waypoint()
    n = 0
    while not engine.finished:
        obs = engine.observe()
        chunk = infer_chunk(policy, infer_mode, obs, seed=(seed, n), t_obs=engine.t)
        n += 1
        waypoints = [current] + chunk[: settings.execute_steps]
        engine.execute(waypoints)
        current = waypoints[-1]
    ticks = engine.tick_array()
    return EpisodeLog(task.name, mode, seed, ticks, engine.outcome.success, engine.outcome.reason,
                      compute_metrics(ticks, task.tracking_axis), task.tracking_axis, n,
                      model.net.n_evals - evals0)
