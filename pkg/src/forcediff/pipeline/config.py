"""Run configuration: INI-style ``key = value`` file with one section per module.

Every key maps onto a dataclass field; unknown sections or keys are errors.

Schema::

    [task]       name
    [sim]        any TaskParams field (noise, environment constants, thresholds)
    [admittance] preset, M, B, K, damp_velocity_error, velocity_limit
    [rollout]    control_rate, execute_steps, max_time, lpf_alpha, force_cap, baseline_inference
    [policy]     num_fingers, horizon, cond_dim, width, enc_width, head_width, emb_dim,
                 obs_std_floor, act_std_floor
    [edm]        sigma_min, sigma_max, rho, K, sigma_data, p_mean, p_std, grid_fraction
    [train]      steps, batch_size, lr, momentum, cosine, grad_clip, seed, log_every
    [distill]    the [train] keys plus k0, k1, ema_decay, max_span, top_fraction
    [demo]       count, seed
    [eval]       episodes, seed
"""
from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any

from ..admittance import PRESETS, AdmittanceParams
from ..errors import ConfigError
from ..policy.edm import NoiseSchedule
from ..policy.nn import NetConfig
from ..policy.train import DISTILL_OPTIM, DistillConfig, EDMConfig, OptimConfig
from ..sim.tasks import TASK_NAMES, TaskParams, make_task
from .episode import RolloutSettings

CONFIG_ENV = "FORCEDIFF_CONFIG"


@dataclass(frozen=True)
class AdmittanceSection:
    preset: str = ""  # empty: the task's own preset
    M: float = 0.0    # 0 keeps the preset value
    B: float = 0.0
    K: float = 0.0
    damp_velocity_error: bool = False
    velocity_limit: float = 1.0


@dataclass(frozen=True)
class RolloutSection:
    control_rate: float = 100.0
    execute_steps: int = 8
    max_time: float = 60.0
    lpf_alpha: float = 0.2
    force_cap: float = 100.0
    baseline_inference: str = "student"


@dataclass(frozen=True)
class PolicySection:
    num_fingers: int = 4
    horizon: int = 8
    cond_dim: int = 64
    width: int = 256
    enc_width: int = 256
    head_width: int = 64
    emb_dim: int = 32
    obs_std_floor: float = 1e-2
    act_std_floor: float = 1e-3


@dataclass(frozen=True)
class EDMSection:
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    rho: float = 7.0
    K: int = 100
    sigma_data: float = 0.5
    p_mean: float = -1.2
    p_std: float = 1.2
    grid_fraction: float = 0.25


@dataclass(frozen=True)
class DistillSection:
    steps: int = DISTILL_OPTIM.steps
    batch_size: int = 64
    lr: float = DISTILL_OPTIM.lr
    momentum: float = 0.9
    cosine: bool = True
    grad_clip: float = 0.0
    seed: int = 0
    log_every: int = 10
    k0: float = 1.0
    k1: float = 1.0
    ema_decay: float = 0.999
    max_span: int = 4
    top_fraction: float = 0.0


@dataclass(frozen=True)
class DemoSection:
    count: int = 50
    seed: int = 0


@dataclass(frozen=True)
class EvalSection:
    episodes: int = 20
    seed: int = 1000


@dataclass(frozen=True)
class TaskSection:
    name: str = "dragging"


SECTIONS: dict[str, type] = {
    "task": TaskSection,
    "sim": TaskParams,
    "admittance": AdmittanceSection,
    "rollout": RolloutSection,
    "policy": PolicySection,
    "edm": EDMSection,
    "train": OptimConfig,
    "distill": DistillSection,
    "demo": DemoSection,
    "eval": EvalSection,
}


@dataclass(frozen=True)
class TaskConfig:
    task: TaskSection = field(default_factory=TaskSection)
    sim: TaskParams = field(default_factory=TaskParams)
    admittance: AdmittanceSection = field(default_factory=AdmittanceSection)
    rollout: RolloutSection = field(default_factory=RolloutSection)
    policy: PolicySection = field(default_factory=PolicySection)
    edm: EDMSection = field(default_factory=EDMSection)
    train: OptimConfig = field(default_factory=OptimConfig)
    distill: DistillSection = field(default_factory=DistillSection)
    demo: DemoSection = field(default_factory=DemoSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def __post_init__(self):
        validate(self)

    # derived objects --------------------------------------------------
    @property
    def name(self) -> str:
        return self.task.name

    def make_task(self):
        return make_task(self.name, self.sim)

    def admittance_params(self) -> AdmittanceParams:
        a = self.admittance
        base = PRESETS[a.preset or make_task(self.name).preset]
        M = a.M if a.M > 0 else base.M
        B = a.B if a.B > 0 else base.B
        K = a.K if a.K > 0 else base.K
        return AdmittanceParams(M, B, K)

    def rollout_settings(self) -> RolloutSettings:
        r, a = self.rollout, self.admittance
        return RolloutSettings(self.admittance_params(), r.control_rate, r.execute_steps,
                               r.max_time, r.lpf_alpha, a.damp_velocity_error,
                               a.velocity_limit, r.force_cap, r.baseline_inference)

    def net_config(self, obs_dim: int) -> NetConfig:
        p = self.policy
        return NetConfig(obs_dim=obs_dim, num_fingers=p.num_fingers, horizon=p.horizon,
                         cond_dim=p.cond_dim, width=p.width, enc_width=p.enc_width,
                         head_width=p.head_width, emb_dim=p.emb_dim)

    def schedule(self) -> NoiseSchedule:
        e = self.edm
        return NoiseSchedule(e.sigma_min, e.sigma_max, e.rho, e.K)

    def edm_config(self) -> EDMConfig:
        e = self.edm
        return EDMConfig(e.sigma_data, e.p_mean, e.p_std, e.grid_fraction)

    def distill_optim(self) -> OptimConfig:
        d = self.distill
        return OptimConfig(d.steps, d.batch_size, d.lr, d.momentum, d.cosine, d.grad_clip,
                           d.seed, d.log_every)

    def distill_config(self) -> DistillConfig:
        d = self.distill
        return DistillConfig(d.k0, d.k1, d.ema_decay, d.max_span, d.top_fraction)

    @property
    def action_dim(self) -> int:
        return self.policy.horizon * (3 + 6 + self.policy.num_fingers + 3)

    def model_hash(self) -> bytes:
        """Digest of everything that fixes the network layout and its interpretation."""
        payload = {"task": self.name, "policy": asdict(self.policy), "edm": asdict(self.edm)}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).digest()

    def with_overrides(self, **sections) -> "TaskConfig":
        """Replace individual fields: ``with_overrides(train={"steps": 10})``."""
        kw = {}
        for sec, values in sections.items():
            if sec not in SECTIONS:
                raise ConfigError(f"unknown config section [{sec}]")
            kw[sec] = _replace_checked(getattr(self, sec), sec, values)
        return replace(self, **kw)


def _replace_checked(obj, sec: str, values: dict[str, Any]):
    names = {f.name for f in fields(obj)}
    for k in values:
        if k not in names:
            raise ConfigError(f"unknown key '{k}' in section [{sec}]")
    try:
        return replace(obj, **values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{sec}]: {exc}") from exc


def validate(cfg: TaskConfig) -> None:
    if cfg.task.name not in TASK_NAMES:
        raise ConfigError(f"unknown task '{cfg.task.name}'")
    if cfg.admittance.preset and cfg.admittance.preset not in PRESETS:
        raise ConfigError(f"unknown admittance preset '{cfg.admittance.preset}'")
    hand_dof = make_task(cfg.task.name).hand.dof
    if cfg.policy.num_fingers != hand_dof:
        raise ConfigError(f"num_fingers={cfg.policy.num_fingers} but the hand has {hand_dof} joints")
    if cfg.policy.horizon != 8:
        raise ConfigError("action chunks have 8 steps")
    if cfg.rollout.execute_steps > cfg.policy.horizon:
        raise ConfigError("execute_steps exceeds the chunk horizon")
    if cfg.rollout.baseline_inference not in ("teacher", "student"):
        raise ConfigError("baseline_inference must be 'teacher' or 'student'")
    if cfg.demo.count < 1:
        raise ConfigError("demo count must be at least 1")
    try:
        cfg.admittance_params()
        cfg.schedule()
        cfg.rollout_settings()
        NetConfig(obs_dim=1, num_fingers=cfg.policy.num_fingers, horizon=cfg.policy.horizon,
                  cond_dim=cfg.policy.cond_dim, width=cfg.policy.width,
                  enc_width=cfg.policy.enc_width, head_width=cfg.policy.head_width,
                  emb_dim=cfg.policy.emb_dim)
        cfg.distill_optim()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _convert(raw: str, typ, where: str):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot parse '{raw}' as {typ.__name__}") from None


def parse_config(text: str, source: str = "<string>") -> TaskConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case-sensitive (M, B, K)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    kw = {}
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        cls = SECTIONS[sec]
        types = {f.name: type(f.default) for f in fields(cls)}
        values = {}
        for key, raw in cp.items(sec):
            if key not in types:
                raise ConfigError(f"{source}: unknown key '{key}' in section [{sec}]")
            values[key] = _convert(raw, types[key], f"{source} [{sec}] {key}")
        try:
            kw[sec] = cls(**values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{source} [{sec}]: {exc}") from exc
    try:
        return TaskConfig(**kw)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path: str | None = None, task: str | None = None) -> TaskConfig:
    """Load ``path`` (or ``$FORCEDIFF_CONFIG``); defaults when neither is set.

    ``task`` overrides ``[task] name``.
    """
    path = path or os.environ.get(CONFIG_ENV)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = parse_config(fh.read(), path)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    else:
        cfg = TaskConfig()
    if task is not None:
        cfg = cfg.with_overrides(task={"name": task})
    return cfg


def dump_config(cfg: TaskConfig) -> str:
    """Render a config as INI text that :func:`parse_config` reads back unchanged."""
    lines = []
    for sec in SECTIONS:
        lines.append(f"[{sec}]")
        for k, v in asdict(getattr(cfg, sec)).items():
            lines.append(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)
