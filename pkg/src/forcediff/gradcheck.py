"""Finite-difference checks of every hand-written gradient in the package."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .policy.edm import Denoiser, huber_c, precondition, precondition_grads, pseudo_huber, pseudo_huber_grad
from .policy.nn import DenoiserNet, NetConfig, teacher_to_student
from .policy.train import dsm_loss_and_grad
from .retargeting import RetargetConfig, forward_keypoints, retarget_cost, retarget_cost_and_grad, toy_hand

TOLERANCE = 1e-4
DENOM_FLOOR = 1e-6  # below this, absolute differences are finite-difference round-off

SMALL_NET = NetConfig(obs_dim=5, num_fingers=1, horizon=2, cond_dim=8, width=8,
                      enc_width=8, head_width=8, emb_dim=4)


@dataclass(frozen=True)
class CheckReport:
    name: str
    cases: int
    worst: float
    failures: int

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.name:<12} cases={self.cases} worst_rel={self.worst:.2e}"


def rel_error(analytic, numeric, floor: float = DENOM_FLOOR) -> np.ndarray:
    a, n = np.asarray(analytic, dtype=float), np.asarray(numeric, dtype=float)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def central_diff(f: Callable[[np.ndarray], float], x: np.ndarray, idx, h: float) -> np.ndarray:
    """Five-point central difference (error O(h^4)) along the coordinates ``idx``."""
    out = np.empty(len(idx))
    for j, i in enumerate(idx):
        vals = []
        for step in (2 * h, h, -h, -2 * h):
            xs = x.copy()
            xs[i] += step
            vals.append(f(xs))
        out[j] = (-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3]) / (12 * h)
    return out


def _report(name, errs, tol) -> CheckReport:
    worst = np.array([e.max() for e in errs])
    return CheckReport(name, len(errs), float(worst.max()), int(np.sum(worst > tol)))


def check_retarget(rng, cases=100, tol=TOLERANCE) -> CheckReport:
    hand = toy_hand()
    errs = []
    for _ in range(cases):
        cfg = RetargetConfig(alpha=rng.uniform(0.5, 1.5), beta=rng.uniform(0.0, 0.1))
        q = rng.uniform(hand.q_lower, hand.q_upper)
        q_prev = rng.uniform(hand.q_lower, hand.q_upper)
        v = forward_keypoints(hand, rng.uniform(hand.q_lower, hand.q_upper)) / cfg.alpha
        _, g = retarget_cost_and_grad(hand, v, q, q_prev, cfg)
        fd = central_diff(lambda x: retarget_cost(hand, v, x, q_prev, cfg), q, range(q.size), 1e-4)
        errs.append(rel_error(g, fd))
    return _report("retarget", errs, tol)


def check_pseudo_huber(rng, cases=100, tol=TOLERANCE) -> CheckReport:
    errs = []
    for _ in range(cases):
        D = int(rng.integers(1, 64))
        scale = 10.0 ** rng.uniform(-3, 1)
        x, y = rng.normal(0, scale, D), rng.normal(0, scale, D)
        c = 10.0 ** rng.uniform(-3, 0)
        g = pseudo_huber_grad(x, y, c)
        fd = central_diff(lambda z: float(pseudo_huber(z, y, c)), x, range(D), 1e-2 * min(scale, c))
        errs.append(rel_error(g, fd))
    return _report("pseudo_huber", errs, tol)


def check_precondition(rng, cases=100, tol=TOLERANCE) -> CheckReport:
    errs = []
    for _ in range(cases):
        t = float(np.exp(rng.uniform(np.log(0.002), np.log(80.0))))
        sd = rng.uniform(0.1, 2.0)
        g = np.array(precondition_grads(t, sd))
        fd = np.array([central_diff(lambda z: precondition(z[0], sd)[k], np.array([t]), [0], 1e-4 * t)[0]
                       for k in range(4)])
        errs.append(rel_error(g, fd))
    return _report("precondition", errs, tol)


def _random_model(rng, cfg: NetConfig, student: bool) -> Denoiser:
    net = DenoiserNet(cfg, seed=int(rng.integers(1 << 31)))
    net.theta += rng.normal(0, 0.3, net.theta.shape)
    if student:
        net = teacher_to_student(net)
        net.theta += rng.normal(0, 0.3, net.theta.shape)
    return Denoiser(net)


def _noise_levels(rng, B, student):
    t = np.clip(np.exp(rng.normal(-1.2, 1.2, B)), 0.002, 80.0)
    tp = np.maximum(t * rng.uniform(0, 1, B), 0.002) if student else None
    return t, tp


def check_denoiser(rng, cases=100, tol=TOLERANCE, params_per_case=24,
                   cfg: NetConfig = SMALL_NET) -> CheckReport:
    """Parameter gradient of the mean pseudo-Huber DSM loss, teacher and student alternating."""
    errs = []
    for k in range(cases):
        student = bool(k % 2)
        m = _random_model(rng, cfg, student)
        B, D = 3, cfg.action_dim
        obs, A0, eps = rng.normal(size=(B, cfg.obs_dim)), rng.normal(size=(B, D)), rng.normal(size=(B, D))
        t, tp = _noise_levels(rng, B, student)
        _, g = dsm_loss_and_grad(m, obs, A0, t, eps, tp)
        theta = m.net.theta.copy()

        def loss(th):
            m.net.theta = th
            return dsm_loss_and_grad(m, obs, A0, t, eps, tp)[0]

        idx = rng.choice(theta.size, params_per_case, replace=False)
        fd = central_diff(loss, theta, idx, 1e-3)
        m.net.theta = theta
        errs.append(rel_error(g[idx], fd))
    return _report("denoiser", errs, tol)


def check_film(rng, cases=100, tol=TOLERANCE, params_per_case=16,
               cfg: NetConfig = SMALL_NET) -> CheckReport:
    """FiLM weights and the conditioning input they modulate with, plus the action input."""
    errs = []
    for k in range(cases):
        student = bool(k % 2)
        m = _random_model(rng, cfg, student)
        B, D, C = 2, cfg.action_dim, cfg.cond_dim
        code, A, target = rng.normal(size=(B, C)), rng.normal(size=(B, D)), rng.normal(size=(B, D))
        t, tp = _noise_levels(rng, B, student)
        c = huber_c(D)

        def loss(th=None, code_=code, A_=A):
            return float(pseudo_huber(m(A_, t, tp, code=code_, theta=th), target, c).sum())

        cache: dict = {}
        out = m(A, t, tp, code=code, cache=cache)
        dout = pseudo_huber_grad(out, target, c)
        grad, _, dcond = m.net.backward(cache, cache["out_scale"] * dout)
        _, dA = m.backward(cache, dout)
        film = np.concatenate([np.arange(s.start, s.stop) for n, s in m.net.layout.slices.items()
                               if n.startswith("film")])
        idx = rng.choice(film, params_per_case, replace=False)
        theta = m.net.theta
        fd_p = central_diff(lambda th: loss(th), theta, idx, 1e-3)
        fd_c = central_diff(lambda z: loss(code_=z.reshape(B, C)), code.ravel(), range(B * C), 1e-3)
        fd_a = central_diff(lambda z: loss(A_=z.reshape(B, D)), A.ravel(), range(B * D), 1e-3)
        errs.append(np.concatenate([rel_error(grad[idx], fd_p),
                                    rel_error(dcond[:, :C].ravel(), fd_c),
                                    rel_error(dA.ravel(), fd_a)]))
    return _report("film", errs, tol)


CHECKS = {
    "retarget": check_retarget,
    "denoiser": check_denoiser,
    "pseudo_huber": check_pseudo_huber,
    "precondition": check_precondition,
    "film": check_film,
}


def run_all(seed: int = 0, cases: int = 100, tol: float = TOLERANCE) -> list[CheckReport]:
    rng = np.random.default_rng(seed)
    return [fn(rng, cases, tol) for fn in CHECKS.values()]
