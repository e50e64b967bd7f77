"""Chunked action inference from a trained teacher or distilled student."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import TrajectoryPoint
from ..sim.rollout import Observation
from .data import HORIZON, Normalizer, decode_chunk
from .edm import Denoiser, teacher_solve

MODES = ("teacher", "student")


@dataclass
class Policy:
    task: str
    obs_norm: Normalizer
    act_norm: Normalizer
    teacher: Denoiser | None = None
    student: Denoiser | None = None

    @property
    def num_fingers(self) -> int:
        net = (self.student or self.teacher).net
        return net.cfg.num_fingers

    @property
    def horizon(self) -> int:
        return (self.student or self.teacher).net.cfg.horizon

    def model(self, mode: str) -> Denoiser:
        if mode not in MODES:
            raise ValueError(f"unknown inference mode '{mode}'")
        m = self.teacher if mode == "teacher" else self.student
        if m is None:
            raise ValueError(f"checkpoint has no {mode} network")
        return m


def encode_observation(policy: Policy, mode: str, obs: Observation) -> np.ndarray:
    """Normalise the stacked observation and run the encoder; returns the (C,) condition."""
    x = policy.obs_norm.normalize(obs.vector())
    return policy.model(mode).encode(x[None, :])[0]


def infer_chunk(policy: Policy, mode: str, obs: Observation, seed, t_obs: float = 0.0
                ) -> list[TrajectoryPoint]:
    """Sample one action chunk and decode it to absolute waypoints after ``t_obs``.

    Teacher mode integrates the ODE with K Euler steps (K evaluations);
    student mode makes a single jump from sigma_max to sigma_min.
    """
    model = policy.model(mode)
    sched = model.schedule
    rng = np.random.default_rng(seed)
    cond = encode_observation(policy, mode, obs)
    A = rng.standard_normal(model.net.cfg.action_dim) * sched.sigma_max
    if mode == "teacher":
        A0 = teacher_solve(model, A, sched.sigma_max, sched.sigma_min, cond, method="euler")
    else:
        A0 = model(A, sched.sigma_max, sched.sigma_min, code=cond)[0]
    chunk = policy.act_norm.denormalize(A0)
    return decode_chunk(chunk, obs.positions[-1], t_obs, policy.num_fingers, policy.horizon)
