"""Teacher training (denoising score matching) and consistency distillation."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingError
from .data import TrainingSet
from .edm import Denoiser, NoiseSchedule, huber_c, pseudo_huber, pseudo_huber_grad, teacher_solve
from .nn import DenoiserNet, NetConfig, teacher_to_student

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimConfig:
    steps: int = 6000
    batch_size: int = 64
    lr: float = 0.1
    momentum: float = 0.9
    cosine: bool = True
    grad_clip: float = 0.0  # global-norm clip; 0 disables
    seed: int = 0
    log_every: int = 10

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")
        if not (self.lr > 0 and 0 <= self.momentum < 1):
            raise ValueError("need lr > 0 and momentum in [0, 1)")

    def lr_at(self, step: int) -> float:
        if not self.cosine or self.steps == 0:
            return self.lr
        return 0.5 * self.lr * (1.0 + math.cos(math.pi * step / self.steps))


@dataclass(frozen=True)
class EDMConfig:
    sigma_data: float = 0.5
    p_mean: float = -1.2
    p_std: float = 1.2
    grid_fraction: float = 0.25  # share of DSM noise levels drawn from the sampler's grid


@dataclass(frozen=True)
class DistillConfig:
    k0: float = 1.0
    k1: float = 1.0
    ema_decay: float = 0.999
    max_span: int = 4  # largest grid-index gap between v and u
    top_fraction: float = 0.0  # share of samples whose v is pinned to sigma_max


@dataclass
class LossHistory:
    rows: list[tuple[int, float, float, float]] = field(default_factory=list)

    def add(self, step, dsm, ctm, cons):
        self.rows.append((step, dsm, ctm, cons))

    def to_csv(self) -> str:
        lines = ["step,L_DSM,L_CTM,L_cons"]
        lines += [f"{s},{a!r},{b!r},{c!r}" for s, a, b, c in self.rows]
        return "\n".join(lines) + "\n"

    def column(self, name: str) -> np.ndarray:
        i = {"L_DSM": 1, "L_CTM": 2, "L_cons": 3}[name]
        return np.array([r[i] for r in self.rows])


class MomentumSGD:
    def __init__(self, cfg: OptimConfig, size: int):
        self.cfg = cfg
        self.vel = np.zeros(size)

    def step(self, theta: np.ndarray, grad: np.ndarray, k: int) -> None:
        c = self.cfg
        if c.grad_clip > 0:
            n = float(np.linalg.norm(grad))
            if n > c.grad_clip:
                grad = grad * (c.grad_clip / n)
        self.vel *= c.momentum
        self.vel += grad
        theta -= c.lr_at(k) * self.vel


def sample_sigma(rng, B, edm: EDMConfig, sched: NoiseSchedule) -> np.ndarray:
    """Log-normal noise levels, a ``grid_fraction`` share replaced by uniform grid levels."""
    t = np.exp(edm.p_mean + edm.p_std * rng.standard_normal(B))
    t = np.clip(t, sched.sigma_min, sched.sigma_max)
    if edm.grid_fraction > 0:
        pick = rng.random(B) < edm.grid_fraction
        t[pick] = sched.grid()[rng.integers(0, sched.K + 1, int(pick.sum()))]
    return t


def _finite(value: float, what: str, step: int):
    if not np.isfinite(value):
        raise TrainingError(f"non-finite {what} at step {step}")


def dsm_loss_and_grad(model: Denoiser, obs, A0, t, eps, t_prime=None):
    """Mean pseudo-Huber denoising loss and its parameter gradient."""
    c = huber_c(A0.shape[1])
    A_t = A0 + t[:, None] * eps
    cache: dict = {}
    out = model(A_t, t, t_prime, obs=obs, cache=cache)
    losses = pseudo_huber(out, A0, c)
    dout = pseudo_huber_grad(out, A0, c) / A0.shape[0]
    grad, _ = model.backward(cache, dout)
    return float(losses.mean()), grad


def train_teacher(data: TrainingSet, net_cfg: NetConfig | None = None,
                  opt: OptimConfig = OptimConfig(), edm: EDMConfig = EDMConfig(),
                  schedule: NoiseSchedule = NoiseSchedule(),
                  net: DenoiserNet | None = None) -> tuple[Denoiser, LossHistory]:
    if len(data) == 0:
        raise TrainingError("empty training set")
    rng = np.random.default_rng(opt.seed)
    if net is None:
        cfg = net_cfg or NetConfig(obs_dim=data.obs.shape[1])
        net = DenoiserNet(cfg, seed=opt.seed)
    if net.cfg.action_dim != data.actions.shape[1] or net.cfg.obs_dim != data.obs.shape[1]:
        raise TrainingError("network dimensions do not match the training set")
    model = Denoiser(net, schedule, edm.sigma_data)
    sgd = MomentumSGD(opt, net.layout.size)
    hist = LossHistory()
    N = len(data)
    for k in range(opt.steps):
        idx = rng.integers(0, N, opt.batch_size)
        t = sample_sigma(rng, opt.batch_size, edm, schedule)
        eps = rng.standard_normal((opt.batch_size, data.actions.shape[1]))
        loss, grad = dsm_loss_and_grad(model, data.obs[idx], data.actions[idx], t, eps)
        _finite(loss, "L_DSM", k)
        sgd.step(net.theta, grad, k)
        if k % opt.log_every == 0 or k == opt.steps - 1:
            hist.add(k, loss, float("nan"), loss)
    return model, hist


def _grid_triples(rng, B, K, max_span, top_fraction=0.0):
    """Per-sample grid indices n_v < n_u <= n_s (index 0 is sigma_max); shared span m."""
    m = int(rng.integers(1, min(max_span, K) + 1))
    n_v = rng.integers(0, K - m + 1, B)
    n_v[rng.random(B) < top_fraction] = 0
    n_u = n_v + m
    n_s = n_u + (rng.random(B) * (K - n_u + 1)).astype(int)
    return m, n_v, n_u, np.minimum(n_s, K)


DISTILL_OPTIM = OptimConfig(steps=1500, lr=0.03)


def distill_student(teacher: Denoiser, data: TrainingSet, opt: OptimConfig = DISTILL_OPTIM,
                    cfg: DistillConfig = DistillConfig(), edm: EDMConfig = EDMConfig(),
                    student: Denoiser | None = None) -> tuple[Denoiser, LossHistory]:
    """Consistency distillation with an EMA target for the second branch."""
    if len(data) == 0:
        raise TrainingError("empty training set")
    sched = teacher.schedule
    if student is None:
        student = Denoiser(teacher_to_student(teacher.net), sched, teacher.sigma_data)
    ema = Denoiser(student.net.copy(), sched, student.sigma_data)
    grid = sched.grid()
    K = sched.K
    rng = np.random.default_rng(opt.seed)
    sgd = MomentumSGD(opt, student.net.layout.size)
    hist = LossHistory()
    N, D = data.actions.shape
    c = huber_c(D)
    B = opt.batch_size
    for k in range(opt.steps):
        idx = rng.integers(0, N, B)
        obs, A0 = data.obs[idx], data.actions[idx]
        grad = np.zeros_like(student.net.theta)
        l_ctm = l_dsm = 0.0
        if cfg.k0 > 0:
            m, n_v, n_u, n_s = _grid_triples(rng, B, K, cfg.max_span, cfg.top_fraction)
            v, u, s = grid[n_v], grid[n_u], grid[n_s]
            eps = rng.standard_normal((B, D))
            A_v = A0 + v[:, None] * eps
            levels = grid[n_v[None, :] + np.arange(m + 1)[:, None]]
            code_t = teacher.encode(obs)
            A_u = teacher_solve(teacher, A_v, None, None, code_t, levels=levels)
            target = ema(A_u, u, s, obs=obs)
            cache: dict = {}
            out = student(A_v, v, s, obs=obs, cache=cache)
            l_ctm = float(pseudo_huber(out, target, c).mean())
            g, _ = student.backward(cache, cfg.k0 * pseudo_huber_grad(out, target, c) / B)
            grad += g
        if cfg.k1 > 0:
            t = sample_sigma(rng, B, edm, sched)
            eps = rng.standard_normal((B, D))
            l_dsm, g = dsm_loss_and_grad(student, obs, A0, t, eps,
                                         t_prime=np.full(B, sched.sigma_min))
            grad += cfg.k1 * g
        total = cfg.k0 * l_ctm + cfg.k1 * l_dsm
        _finite(total, "L_cons", k)
        sgd.step(student.net.theta, grad, k)
        ema.net.theta *= cfg.ema_decay
        ema.net.theta += (1.0 - cfg.ema_decay) * student.net.theta
        if k % opt.log_every == 0 or k == opt.steps - 1:
            hist.add(k, l_dsm, l_ctm, total)
    return student, hist
