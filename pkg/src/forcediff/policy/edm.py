"""EDM noise schedule, preconditioning, loss, and the teacher/student denoisers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import DenoiserNet, time_embedding


@dataclass(frozen=True)
class NoiseSchedule:
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    rho: float = 7.0
    K: int = 100

    def __post_init__(self):
        if not (0.0 < self.sigma_min < self.sigma_max):
            raise ValueError("need 0 < sigma_min < sigma_max")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.rho <= 0:
            raise ValueError("rho must be positive")

    def grid(self) -> np.ndarray:
        """K+1 noise levels from sigma_max down to sigma_min (Karras spacing)."""
        i = np.arange(self.K + 1) / self.K
        a, b = self.sigma_max ** (1.0 / self.rho), self.sigma_min ** (1.0 / self.rho)
        s = (a + i * (b - a)) ** self.rho
        s[0], s[-1] = self.sigma_max, self.sigma_min
        return s


def precondition(t, sigma_data: float = 0.5):
    """``(c_skip, c_out, c_in, c_noise)`` for noise level ``t``."""
    t = np.asarray(t, dtype=float)
    s2 = sigma_data * sigma_data
    r = t * t + s2
    return s2 / r, t * sigma_data / np.sqrt(r), 1.0 / np.sqrt(r), np.log(t) / 4.0


def precondition_grads(t, sigma_data: float = 0.5):
    """Derivatives of ``precondition`` with respect to ``t``."""
    t = np.asarray(t, dtype=float)
    s2 = sigma_data * sigma_data
    r = t * t + s2
    d_skip = -2.0 * s2 * t / r ** 2
    d_out = sigma_data * s2 / r ** 1.5
    d_in = -t / r ** 1.5
    d_noise = 0.25 / t
    return d_skip, d_out, d_in, d_noise


def huber_c(action_dim: int) -> float:
    return 0.005 * np.sqrt(action_dim)


def pseudo_huber(x, y, c: float):
    """Row-wise ``sqrt(|x - y|^2 + c^2) - c`` (scalar for 1-d inputs)."""
    if not c > 0:
        raise ValueError("pseudo-Huber c must be positive")
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return np.sqrt(np.sum(d * d, axis=-1) + c * c) - c


def pseudo_huber_grad(x, y, c: float):
    """Gradient of :func:`pseudo_huber` with respect to ``x``."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return d / np.sqrt(np.sum(d * d, axis=-1, keepdims=True) + c * c)


def _col(t, B):
    return np.broadcast_to(np.asarray(t, dtype=float).reshape(-1, 1), (B, 1))


def _check_range(t, sched: NoiseSchedule):
    t = np.asarray(t, dtype=float)
    tol = 1e-12 * sched.sigma_max
    if np.any(t < sched.sigma_min - tol) or np.any(t > sched.sigma_max + tol) or not np.all(np.isfinite(t)):
        raise ValueError(f"noise level outside [{sched.sigma_min}, {sched.sigma_max}]")


@dataclass
class Denoiser:
    """Preconditioned denoiser around a :class:`DenoiserNet`.

    Teacher: ``c_skip A + c_out F(c_in A, emb(t), cond)``.
    Student: ``(t'/t) A + (1 - t'/t) g`` where ``g`` is the same expression
    with an extra embedding of ``t'``.
    """

    net: DenoiserNet
    schedule: NoiseSchedule = NoiseSchedule()
    sigma_data: float = 0.5

    @property
    def is_student(self) -> bool:
        return self.net.cfg.n_times == 2

    def _temb(self, t, t_prime=None):
        dim = self.net.cfg.emb_dim
        e = time_embedding(np.log(np.asarray(t, dtype=float)) / 4.0, dim)
        if self.is_student:
            e = np.concatenate([e, time_embedding(np.log(np.asarray(t_prime, dtype=float)) / 4.0, dim)], axis=1)
        return e

    def encode(self, obs, theta=None):
        return self.net.encode(obs, theta)

    def __call__(self, A, t, t_prime=None, *, obs=None, code=None, theta=None, cache=None):
        """Evaluate the preconditioned output; supply ``obs`` or a precomputed ``code``."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = A.shape[0]
        _check_range(t, self.schedule)
        t_arr = np.broadcast_to(np.asarray(t, dtype=float).reshape(-1), (B,))
        c_skip, c_out, c_in, _ = precondition(t_arr, self.sigma_data)
        if self.is_student:
            if t_prime is None:
                raise ValueError("student evaluation needs t_prime")
            _check_range(t_prime, self.schedule)
            tp = np.broadcast_to(np.asarray(t_prime, dtype=float).reshape(-1), (B,))
            if np.any(tp > t_arr):
                raise ValueError("t_prime must not exceed t")
            temb = self._temb(t_arr, tp)
            r = (tp / t_arr)[:, None]
        else:
            temb = self._temb(t_arr)
            r = np.zeros((B, 1))
        Fx = self.net.forward(c_in[:, None] * A, temb, obs=obs, code=code, theta=theta, cache=cache)
        g = c_skip[:, None] * A + c_out[:, None] * Fx
        if cache is not None:
            cache.update(out_scale=(1.0 - r) * c_out[:, None], c_in=c_in, c_skip=c_skip, r=r)
        return r * A + (1.0 - r) * g

    def backward(self, cache, dout, theta=None):
        """Gradient w.r.t. parameters and w.r.t. ``A`` for an upstream ``dout``."""
        grad, dx, _ = self.net.backward(cache, cache["out_scale"] * dout, theta)
        r = cache["r"]
        dA = r * dout + (1.0 - r) * cache["c_skip"][:, None] * dout + cache["c_in"][:, None] * dx
        return grad, dA


def teacher_forward(teacher: Denoiser, A_t, t, cond) -> np.ndarray:
    """Teacher estimate of the clean chunk from ``A_t`` at noise level ``t``."""
    out = teacher(A_t, t, code=cond)
    return out[0] if np.ndim(A_t) == 1 else out


def student_forward(student: Denoiser, A_t, t, t_prime, cond) -> np.ndarray:
    """Student jump from level ``t`` to the earlier level ``t_prime``."""
    if np.any(np.asarray(t_prime) > np.asarray(t)):
        raise ValueError("t_prime must not exceed t")
    out = student(A_t, t, t_prime, code=cond)
    return out[0] if np.ndim(A_t) == 1 else out


def solver_levels(schedule: NoiseSchedule, v: float, u: float) -> np.ndarray:
    """Levels visited when integrating from ``v`` down to ``u``: the endpoints plus
    every grid level strictly between them."""
    g = schedule.grid()
    inner = g[(g < v) & (g > u)]
    return np.concatenate([[v], inner, [u]])


def _ode_step(teacher, A, t0, t1, cond, method):
    d0 = (A - teacher(A, t0, code=cond)) / t0[:, None]
    A1 = A + (t1 - t0)[:, None] * d0
    if method == "euler":
        return A1
    d1 = (A1 - teacher(A1, t1, code=cond)) / t1[:, None]
    return A + (t1 - t0)[:, None] * 0.5 * (d0 + d1)


def teacher_solve(teacher: Denoiser, A_v, v, u, cond, method: str = "heun",
                  levels: np.ndarray | None = None) -> np.ndarray:
    """Integrate the probability-flow ODE ``dA/dt = (A - D(A, t)) / t`` from ``v`` to ``u``.

    Scalars ``v``/``u`` integrate over :func:`solver_levels`. For batched
    per-sample levels pass ``levels`` of shape (n+1, B) directly.
    """
    if method not in ("heun", "euler"):
        raise ValueError(f"unknown solver method '{method}'")
    A = np.atleast_2d(np.asarray(A_v, dtype=float)).copy()
    B = A.shape[0]
    if levels is None:
        if u > v:
            raise ValueError("teacher_solve needs u <= v")
        if u == v:
            return np.asarray(A_v, dtype=float).copy()
        levels = solver_levels(teacher.schedule, v, u)
    levels = np.asarray(levels, dtype=float)
    if levels.ndim == 1:
        levels = np.repeat(levels[:, None], B, axis=1)
    if np.any(np.diff(levels, axis=0) >= 0):
        raise ValueError("teacher_solve needs u < v")
    for i in range(levels.shape[0] - 1):
        A = _ode_step(teacher, A, levels[i], levels[i + 1], cond, method)
    return A[0] if np.ndim(A_v) == 1 else A
