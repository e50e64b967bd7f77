"""End-to-end steps shared by the CLI and the test suite."""
from __future__ import annotations

import logging
from typing import Sequence

from ..errors import ConfigError, DemoTimeout, EnvironmentFault, ForceLimitError, ControllerError
from ..policy.data import build_training_set
from ..policy.infer import Policy
from ..policy.train import LossHistory, distill_student, train_teacher
from ..sim.demonstrator import Demonstration, scripted_demonstrator
from .config import TaskConfig

log = logging.getLogger(__name__)


def generate_demos(cfg: TaskConfig, count: int | None = None, seed: int | None = None
                   ) -> list[Demonstration]:
    """Scripted demonstrations on consecutive seeds; seeds whose run faults are skipped."""
    count = cfg.demo.count if count is None else count
    seed = cfg.demo.seed if seed is None else seed
    if count < 1:
        raise ConfigError("demo count must be at least 1")
    demos: list[Demonstration] = []
    s = seed
    limit = seed + 2 * count + 10
    while len(demos) < count:
        if s >= limit:
            raise DemoTimeout(f"only {len(demos)} of {count} demonstrations succeeded")
        try:
            demos.append(scripted_demonstrator(cfg.name, s, cfg.sim, cfg.admittance_params(),
                                               cfg.rollout.control_rate))
        except (DemoTimeout, EnvironmentFault, ForceLimitError, ControllerError) as exc:
            log.warning("demo seed %d skipped: %s", s, exc)
        s += 1
    return demos


def _check_task(cfg: TaskConfig, demos: Sequence[Demonstration]) -> None:
    if not demos:
        raise ConfigError("empty dataset")
    tasks = {d.task for d in demos}
    if tasks != {cfg.name}:
        raise ConfigError(f"dataset holds {sorted(tasks)}, config task is '{cfg.name}'")


def train(cfg: TaskConfig, demos: Sequence[Demonstration]) -> tuple[Policy, LossHistory]:
    _check_task(cfg, demos)
    p = cfg.policy
    data = build_training_set(demos, p.obs_std_floor, p.act_std_floor, p.horizon)
    teacher, hist = train_teacher(data, cfg.net_config(data.obs.shape[1]), cfg.train,
                                  cfg.edm_config(), cfg.schedule())
    return Policy(cfg.name, data.obs_norm, data.act_norm, teacher=teacher), hist


def distill(cfg: TaskConfig, policy: Policy, demos: Sequence[Demonstration]
            ) -> tuple[Policy, LossHistory]:
    """Distil the policy's teacher into a one-step student; the result carries both."""
    _check_task(cfg, demos)
    if policy.task != cfg.name:
        raise ConfigError(f"checkpoint task '{policy.task}' differs from config task '{cfg.name}'")
    if policy.teacher is None:
        raise ConfigError("checkpoint has no teacher network to distil")
    data = build_training_set(demos, horizon=cfg.policy.horizon,
                              norms=(policy.obs_norm, policy.act_norm))
    student, hist = distill_student(policy.teacher, data, cfg.distill_optim(),
                                    cfg.distill_config(), cfg.edm_config())
    return Policy(cfg.name, policy.obs_norm, policy.act_norm, policy.teacher, student), hist
