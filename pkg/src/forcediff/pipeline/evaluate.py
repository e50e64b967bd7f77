"""Multi-episode evaluation, metric tables and the force-control comparison."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ConfigError
from ..policy.infer import Policy
from ..sim.tasks import Task
from .episode import EpisodeLog, RolloutSettings, run_episode

EPISODE_COLUMNS = ("task", "mode", "seed", "success", "reason", "mean_force", "std_force",
                   "rmse", "duration", "contact_ticks", "n_replans", "denoiser_evals")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass(frozen=True)
class EvalSummary:
    task: str
    mode: str
    episodes: int
    success_rate: float
    mean_force: float   # average of per-episode mean |F| over episodes with contact
    std_force: float    # average of per-episode std |F| over the same episodes
    rmse: float
    duration: float

    def text(self) -> str:
        return (f"{self.task} [{self.mode}] {self.episodes} episodes: "
                f"success {self.success_rate:.0%}, mean |F| {self.mean_force:.2f} N, "
                f"std |F| {self.std_force:.2f} N, RMSE {self.rmse:.2f} N, "
                f"duration {self.duration:.1f} s")


@dataclass
class EvalResult:
    logs: list[EpisodeLog]

    def rows(self) -> list[tuple]:
        out = []
        for g in self.logs:
            m = g.metrics
            out.append((g.task, g.mode, g.seed, g.success, g.reason, m.mean_force, m.std_force,
                        m.rmse, m.duration, m.contact_ticks, g.n_replans, g.denoiser_evals))
        return out

    def to_csv(self) -> str:
        lines = [",".join(EPISODE_COLUMNS)]
        lines += [",".join(_fmt(v) for v in r) for r in self.rows()]
        return "\n".join(lines) + "\n"

    def summary(self) -> EvalSummary:
        # aggregation runs over logs in seed order so results do not depend on execution order
        logs = sorted(self.logs, key=lambda g: g.seed)
        contact = [g.metrics for g in logs if g.metrics.contact_ticks > 0]
        avg = lambda xs: float(np.mean(xs)) if xs else 0.0  # noqa: E731
        return EvalSummary(
            logs[0].task, logs[0].mode, len(logs),
            float(np.mean([g.success for g in logs])),
            avg([m.mean_force for m in contact]), avg([m.std_force for m in contact]),
            avg([m.rmse for m in contact]), avg([g.metrics.duration for g in logs]))


def episode_seeds(n_episodes: int, seeds: Sequence[int] | int | None = None,
                  default_base: int = 1000) -> list[int]:
    """``seeds`` may be an explicit list (its length must equal ``n_episodes``) or a base seed."""
    if n_episodes < 1:
        raise ConfigError("n_episodes must be at least 1")
    if seeds is None or isinstance(seeds, (int, np.integer)):
        base = default_base if seeds is None else int(seeds)
        return list(range(base, base + n_episodes))
    seeds = [int(s) for s in seeds]
    if len(seeds) != n_episodes:
        raise ConfigError(f"{len(seeds)} seeds given for {n_episodes} episodes")
    return seeds


def evaluate(policy: Policy, mode: str, task: Task, n_episodes: int,
             seeds: Sequence[int] | int | None = None,
             settings: RolloutSettings = RolloutSettings()) -> EvalResult:
    return EvalResult([run_episode(policy, mode, task, s, settings)
                       for s in episode_seeds(n_episodes, seeds)])


def _reduction(ours: float, base: float) -> float:
    return 1.0 - ours / base if base > 0 else float("nan")


@dataclass(frozen=True)
class Comparison:
    task: str
    admittance: EvalSummary
    baseline: EvalSummary

    @property
    def mean_reduction(self) -> float:
        return _reduction(self.admittance.mean_force, self.baseline.mean_force)

    @property
    def std_reduction(self) -> float:
        return _reduction(self.admittance.std_force, self.baseline.std_force)

    def text(self) -> str:
        a, b = self.admittance, self.baseline
        return (f"{self.task}: mean |F| {a.mean_force:.2f} vs {b.mean_force:.2f} N "
                f"({self.mean_reduction:+.1%} reduction), std |F| {a.std_force:.2f} vs "
                f"{b.std_force:.2f} N ({self.std_reduction:+.1%} reduction), success "
                f"{a.success_rate:.0%} vs {b.success_rate:.0%}")


def compare(admittance: EvalResult, baseline: EvalResult) -> Comparison:
    """Admittance-mode results against the no-force-control baseline on the same seeds."""
    sa, sb = sorted(g.seed for g in admittance.logs), sorted(g.seed for g in baseline.logs)
    if sa != sb:
        raise ConfigError("comparison needs both modes evaluated on the same seeds")
    a, b = admittance.summary(), baseline.summary()
    if a.task != b.task:
        raise ConfigError("comparison across different tasks")
    return Comparison(a.task, a, b)


def comparison_report(comparisons: Sequence[Comparison]) -> str:
    lines = [c.text() for c in comparisons]
    if comparisons:
        lines.append(f"average: mean |F| {np.mean([c.mean_reduction for c in comparisons]):+.1%}, "
                     f"std |F| {np.mean([c.std_reduction for c in comparisons]):+.1%} reduction")
    return "\n".join(lines) + "\n"
