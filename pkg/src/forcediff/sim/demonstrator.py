"""Scripted operator standing in for teleoperated data collection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..admittance import PRESETS, AdmittanceParams
from ..core import WAYPOINT_DT, Pose, TrajectoryPoint
from ..retargeting import RetargetConfig
from .rollout import EpisodeEngine, Observation
from .tasks import TaskParams, PostureRetargeter, make_task


@dataclass(frozen=True)
class Demonstration:
    task: str
    seed: int
    steps: tuple[tuple[Observation, TrajectoryPoint], ...]

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def observations(self) -> list[Observation]:
        return [o for o, _ in self.steps]

    @property
    def points(self) -> list[TrajectoryPoint]:
        return [p for _, p in self.steps]


def scripted_demonstrator(task: str, seed: int, params: TaskParams | None = None,
                          admittance: AdmittanceParams | None = None,
                          control_rate: float = 100.0) -> Demonstration:
    """Run the task's phase machine through the admittance loop and record 10 Hz pairs.

    Recorded poses and finger joints are the noisy operator references; the
    recorded desired force is the filtered force actually measured.
    """
    return run_scripted(task, seed, params, admittance, control_rate)[0]


def run_scripted(task: str, seed: int, params: TaskParams | None = None,
                 admittance: AdmittanceParams | None = None, control_rate: float = 100.0,
                 record_ticks: bool = False, force_control: bool = True
                 ) -> tuple[Demonstration, EpisodeEngine]:
    """Like :func:`scripted_demonstrator` but also returns the finished engine.

    With ``force_control=False`` the references are commanded directly and a
    fault ends the run early instead of raising.
    """
    tk = make_task(task, params)
    p = tk.params
    rng = np.random.default_rng(seed)
    scene = tk.sample_scene(rng)
    start = tk.start_position(scene, rng)
    bias = rng.normal(0.0, p.perception_bias_std, 3)
    machine = tk.machine(scene, start)
    fingers = PostureRetargeter(tk.hand, RetargetConfig(beta=p.demo_retarget_beta))
    q = fingers(machine.ref.posture)
    engine = EpisodeEngine(tk, scene, start, bias, admittance or PRESETS[tk.preset],
                           control_rate=control_rate, initial_fingers=q,
                           record_ticks=record_ticks, force_control=force_control)
    current = TrajectoryPoint(Pose(machine.ref.rotation, start), q, np.zeros(3), 0.0)
    steps = []
    k = 0
    while True:
        obs = engine.observe()
        label = TrajectoryPoint(current.pose, current.finger_joints, engine.force, k * WAYPOINT_DT)
        steps.append((obs, label))
        if machine.done or (engine.finished and not force_control):
            break
        ref = machine.advance(engine.context())
        k += 1
        pos = ref.position + rng.normal(0.0, p.demo_pos_noise, 3)
        force = ref.force + rng.normal(0.0, p.demo_force_noise, 3)
        nxt = TrajectoryPoint(Pose(ref.rotation, pos), fingers(ref.posture), force, k * WAYPOINT_DT)
        engine.execute([current, nxt], raise_faults=force_control, stop_on_outcome=False)
        current = nxt
    return Demonstration(task, seed, tuple(steps)), engine
