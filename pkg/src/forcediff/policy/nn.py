"""FiLM-conditioned multi-head MLP denoiser with hand-written reverse mode.

All parameters live in one flat float64 vector; :class:`ParamLayout` maps
names to slices and shapes. Row-vector convention: ``y = x @ W + b``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

HEADS = ("pos", "rot", "finger", "force")


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def silu(x):
    return x * sigmoid(x)


def silu_grad(x):
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


@dataclass(frozen=True)
class NetConfig:
    obs_dim: int
    num_fingers: int = 4
    horizon: int = 8
    cond_dim: int = 64
    width: int = 256
    enc_width: int = 256
    head_width: int = 64
    emb_dim: int = 32
    n_times: int = 1  # 1 for the teacher, 2 for the student (extra t' embedding)

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"{k} must be a positive integer")
        if self.emb_dim % 2:
            raise ValueError("emb_dim must be even")
        if self.n_times not in (1, 2):
            raise ValueError("n_times must be 1 or 2")

    @property
    def step_dim(self) -> int:
        return 3 + 6 + self.num_fingers + 3

    @property
    def action_dim(self) -> int:
        return self.horizon * self.step_dim

    @property
    def film_in(self) -> int:
        return self.cond_dim + self.n_times * self.emb_dim

    def head_dims(self) -> dict[str, int]:
        h = self.horizon
        return {"pos": 3 * h, "rot": 6 * h, "finger": self.num_fingers * h, "force": 3 * h}

    def head_columns(self) -> dict[str, np.ndarray]:
        """Columns of the step-major action vector owned by each head."""
        sd, J = self.step_dim, self.num_fingers
        local = {"pos": range(0, 3), "rot": range(3, 9), "finger": range(9, 9 + J),
                 "force": range(9 + J, 12 + J)}
        return {k: np.array([i * sd + c for i in range(self.horizon) for c in r])
                for k, r in local.items()}


class ParamLayout:
    def __init__(self, entries: list[tuple[str, tuple[int, ...]]]):
        self.entries = entries
        self.slices: dict[str, slice] = {}
        self.shapes: dict[str, tuple[int, ...]] = {}
        off = 0
        for name, shape in entries:
            n = int(np.prod(shape))
            self.slices[name] = slice(off, off + n)
            self.shapes[name] = shape
            off += n
        self.size = off

    def views(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        return {k: theta[s].reshape(self.shapes[k]) for k, s in self.slices.items()}


def build_layout(cfg: NetConfig) -> ParamLayout:
    O, E, C, W, D, Hh = cfg.obs_dim, cfg.enc_width, cfg.cond_dim, cfg.width, cfg.action_dim, cfg.head_width
    e: list[tuple[str, tuple[int, ...]]] = [
        ("enc.W1", (O, E)), ("enc.b1", (E,)),
        ("enc.W2", (E, E)), ("enc.b2", (E,)),
        ("enc.W3", (E, C)), ("enc.b3", (C,)),
    ]
    for l in (1, 2, 3):
        e += [(f"film{l}.W", (cfg.film_in, 2 * W)), (f"film{l}.b", (2 * W,))]
    e += [("trunk.W1", (D, W)), ("trunk.b1", (W,)),
          ("trunk.W2", (W, W)), ("trunk.b2", (W,)),
          ("trunk.W3", (W, W)), ("trunk.b3", (W,))]
    for h, n in cfg.head_dims().items():
        e += [(f"head.{h}.W1", (W, Hh)), (f"head.{h}.b1", (Hh,)),
              (f"head.{h}.W2", (Hh, n)), (f"head.{h}.b2", (n,))]
    return ParamLayout(e)


def init_params(cfg: NetConfig, rng: np.random.Generator) -> np.ndarray:
    layout = build_layout(cfg)
    theta = np.zeros(layout.size)
    for name, shape in layout.entries:
        if len(shape) != 2:
            continue
        scale = 1.0 / math.sqrt(shape[0])
        if name.startswith("film"):
            scale *= 0.1
        theta[layout.slices[name]] = rng.normal(0.0, scale, int(np.prod(shape)))
    return theta


def time_embedding(c_noise, dim: int) -> np.ndarray:
    """Sinusoidal features of the (already transformed) noise level; shape (B, dim)."""
    c = np.atleast_1d(np.asarray(c_noise, dtype=float))[:, None]
    freqs = np.geomspace(1.0, 100.0, dim // 2)[None, :]
    return np.concatenate([np.sin(c * freqs), np.cos(c * freqs)], axis=1)


class DenoiserNet:
    """Raw network ``F(x, time_features, obs)``; preconditioning lives in ``edm``."""

    def __init__(self, cfg: NetConfig, theta: np.ndarray | None = None, seed: int = 0):
        self.cfg = cfg
        self.layout = build_layout(cfg)
        if theta is None:
            theta = init_params(cfg, np.random.default_rng(seed))
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.layout.size,):
            raise ValueError(f"expected {self.layout.size} parameters, got {theta.shape}")
        self.theta = theta
        self.columns = self.cfg.head_columns()
        self.n_evals = 0

    def copy(self) -> "DenoiserNet":
        return DenoiserNet(self.cfg, self.theta.copy())

    def params(self) -> dict[str, np.ndarray]:
        return self.layout.views(self.theta)

    # encoder --------------------------------------------------------
    def encode(self, obs: np.ndarray, theta: np.ndarray | None = None, cache: dict | None = None):
        P = self.layout.views(self.theta if theta is None else theta)
        obs = np.atleast_2d(obs)
        if obs.shape[1] != self.cfg.obs_dim:
            raise ValueError(f"observation width {obs.shape[1]} != {self.cfg.obs_dim}")
        e1 = obs @ P["enc.W1"] + P["enc.b1"]
        a1 = silu(e1)
        e2 = a1 @ P["enc.W2"] + P["enc.b2"]
        a2 = silu(e2)
        code = a2 @ P["enc.W3"] + P["enc.b3"]
        if cache is not None:
            cache.update(obs=obs, e1=e1, a1=a1, e2=e2, a2=a2)
        return code

    # full forward ---------------------------------------------------
    def forward(self, x: np.ndarray, temb: np.ndarray, obs: np.ndarray | None = None,
                code: np.ndarray | None = None, theta: np.ndarray | None = None,
                cache: dict | None = None) -> np.ndarray:
        """Evaluate the network; pass ``obs`` (encoder is run) or a precomputed ``code``.

        ``temb`` is (B, n_times * emb_dim). Fill ``cache`` to enable :meth:`backward`.
        """
        self.n_evals += 1
        th = self.theta if theta is None else theta
        P = self.layout.views(th)
        x = np.atleast_2d(x)
        B = x.shape[0]
        if code is None:
            code = self.encode(obs, th, cache)
        code = np.broadcast_to(np.atleast_2d(code), (B, self.cfg.cond_dim))
        temb = np.broadcast_to(np.atleast_2d(temb), (B, self.cfg.n_times * self.cfg.emb_dim))
        cond = np.concatenate([code, temb], axis=1)
        W = self.cfg.width
        h_in = x
        hs, zs, ms, gs = [], [], [], []
        for l in (1, 2, 3):
            film = cond @ P[f"film{l}.W"] + P[f"film{l}.b"]
            g, b = film[:, :W], film[:, W:]
            z = h_in @ P[f"trunk.W{l}"] + P[f"trunk.b{l}"]
            m = z * (1.0 + g) + b
            h = silu(m)
            hs.append(h); zs.append(z); ms.append(m); gs.append(g)
            h_in = h
        fused = hs[0] + hs[1] + hs[2]
        out = np.empty((B, self.cfg.action_dim))
        pre = {}
        us = {}
        for k in HEADS:
            p1 = fused @ P[f"head.{k}.W1"] + P[f"head.{k}.b1"]
            u = silu(p1)
            out[:, self.columns[k]] = u @ P[f"head.{k}.W2"] + P[f"head.{k}.b2"]
            pre[k], us[k] = p1, u
        if cache is not None:
            cache.update(x=x, cond=cond, hs=hs, zs=zs, ms=ms, gs=gs, fused=fused,
                         pre=pre, us=us, has_obs=obs is not None and "obs" in cache)
        return out

    def backward(self, cache: dict, dout: np.ndarray, theta: np.ndarray | None = None):
        """Reverse pass. Returns ``(grad_theta, dx, dcond)``."""
        th = self.theta if theta is None else theta
        P = self.layout.views(th)
        grad = np.zeros_like(th)
        G = self.layout.views(grad)
        W = self.cfg.width
        dfused = np.zeros_like(cache["fused"])
        for k in HEADS:
            do = dout[:, self.columns[k]]
            u, p1 = cache["us"][k], cache["pre"][k]
            G[f"head.{k}.W2"][...] = u.T @ do
            G[f"head.{k}.b2"][...] = do.sum(0)
            dp = (do @ P[f"head.{k}.W2"].T) * silu_grad(p1)
            G[f"head.{k}.W1"][...] = cache["fused"].T @ dp
            G[f"head.{k}.b1"][...] = dp.sum(0)
            dfused += dp @ P[f"head.{k}.W1"].T
        cond = cache["cond"]
        dcond = np.zeros_like(cond)
        dh = dfused.copy()
        hs, zs, ms, gs = cache["hs"], cache["zs"], cache["ms"], cache["gs"]
        dx = None
        for l in (3, 2, 1):
            i = l - 1
            dm = dh * silu_grad(ms[i])
            dz = dm * (1.0 + gs[i])
            dfilm = np.concatenate([dm * zs[i], dm], axis=1)
            G[f"film{l}.W"][...] = cond.T @ dfilm
            G[f"film{l}.b"][...] = dfilm.sum(0)
            dcond += dfilm @ P[f"film{l}.W"].T
            h_prev = hs[i - 1] if l > 1 else cache["x"]
            G[f"trunk.W{l}"][...] = h_prev.T @ dz
            G[f"trunk.b{l}"][...] = dz.sum(0)
            dprev = dz @ P[f"trunk.W{l}"].T
            if l > 1:
                dh = dfused + dprev
            else:
                dx = dprev
        if cache.get("has_obs"):
            dcode = dcond[:, :self.cfg.cond_dim]
            G["enc.W3"][...] = cache["a2"].T @ dcode
            G["enc.b3"][...] = dcode.sum(0)
            de2 = (dcode @ P["enc.W3"].T) * silu_grad(cache["e2"])
            G["enc.W2"][...] = cache["a1"].T @ de2
            G["enc.b2"][...] = de2.sum(0)
            de1 = (de2 @ P["enc.W2"].T) * silu_grad(cache["e1"])
            G["enc.W1"][...] = cache["obs"].T @ de1
            G["enc.b1"][...] = de1.sum(0)
        return grad, dx, dcond


def teacher_to_student(teacher: DenoiserNet) -> DenoiserNet:
    """Student network initialised from the teacher; the t' FiLM rows start at zero."""
    if teacher.cfg.n_times != 1:
        raise ValueError("teacher must have a single time input")
    cfg = NetConfig(**{**asdict(teacher.cfg), "n_times": 2})
    student = DenoiserNet(cfg, np.zeros(build_layout(cfg).size))
    src, dst = teacher.params(), student.params()
    for name, arr in src.items():
        if name.startswith("film") and name.endswith(".W"):
            dst[name][: arr.shape[0]] = arr
        else:
            dst[name][...] = arr
    return student
