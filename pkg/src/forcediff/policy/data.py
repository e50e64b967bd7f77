"""Action-chunk encoding, normalisation statistics and training arrays."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import DEFAULT_FORCE_CAP, WAYPOINT_DT, Pose, TrajectoryPoint, quat_to_6d, six_d_to_quat
from ..sim.demonstrator import Demonstration
from ..sim.rollout import Observation

HORIZON = 8


def step_dim(num_fingers: int) -> int:
    return 3 + 6 + num_fingers + 3


def encode_point(p: TrajectoryPoint, origin: np.ndarray) -> np.ndarray:
    return np.concatenate([p.pose.position - origin, quat_to_6d(p.pose.rotation),
                           p.finger_joints, p.desired_force])


def encode_chunk(points: Sequence[TrajectoryPoint], origin: np.ndarray) -> np.ndarray:
    """Step-major action vector; positions are relative to ``origin``."""
    return np.concatenate([encode_point(p, origin) for p in points])


def decode_chunk(A: np.ndarray, origin: np.ndarray, t0: float, num_fingers: int,
                 horizon: int = HORIZON, force_cap: float = DEFAULT_FORCE_CAP) -> list[TrajectoryPoint]:
    """Inverse of :func:`encode_chunk`; timestamps follow ``t0`` at 0.1 s spacing.

    Forces at or above the safety cap are scaled just below it so a wild
    network output still decodes.
    """
    sd = step_dim(num_fingers)
    A = np.asarray(A, dtype=float).reshape(horizon, sd)
    out = []
    for i, row in enumerate(A):
        f = row[9 + num_fingers:]
        n = float(np.linalg.norm(f))
        if n >= force_cap:
            f = f * (0.999 * force_cap / n)
        out.append(TrajectoryPoint(Pose(six_d_to_quat(row[3:9]), row[:3] + origin),
                                   row[9:9 + num_fingers], f, t0 + (i + 1) * WAYPOINT_DT))
    return out


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray, floor: float) -> "Normalizer":
        X = np.asarray(X, dtype=float)
        return cls(X.mean(0), np.maximum(X.std(0), floor))

    @classmethod
    def identity(cls, dim: int) -> "Normalizer":
        return cls(np.zeros(dim), np.ones(dim))

    def normalize(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def denormalize(self, z):
        return np.asarray(z, dtype=float) * self.std + self.mean


def demo_arrays(demo: Demonstration, horizon: int = HORIZON) -> tuple[np.ndarray, np.ndarray]:
    """Observation vectors (T, O) and future action chunks (T, D) for one demonstration.

    The chunk at step k holds labels k+1..k+horizon, padded with the final label.
    """
    obs = [o for o, _ in demo.steps]
    pts = [p for _, p in demo.steps]
    T = len(pts)
    X, Y = [], []
    for k in range(T):
        o: Observation = obs[k]
        origin = o.positions[-1]
        chunk = [pts[min(k + i, T - 1)] for i in range(1, horizon + 1)]
        X.append(o.vector())
        Y.append(encode_chunk(chunk, origin))
    return np.array(X), np.array(Y)


@dataclass
class TrainingSet:
    obs: np.ndarray       # normalised (N, O)
    actions: np.ndarray   # normalised (N, D)
    obs_norm: Normalizer
    act_norm: Normalizer

    def __len__(self) -> int:
        return self.obs.shape[0]


def build_training_set(demos: Sequence[Demonstration], obs_floor: float = 1e-2,
                       act_floor: float = 1e-3, horizon: int = HORIZON,
                       norms: tuple[Normalizer, Normalizer] | None = None) -> TrainingSet:
    """Stack all demonstrations; ``norms`` reuses existing statistics instead of fitting."""
    if not demos:
        raise ValueError("empty dataset")
    parts = [demo_arrays(d, horizon) for d in demos]
    X = np.concatenate([p[0] for p in parts])
    Y = np.concatenate([p[1] for p in parts])
    if norms is None:
        on, an = Normalizer.fit(X, obs_floor), Normalizer.fit(Y, act_floor)
    else:
        on, an = norms
        if on.mean.shape != X.shape[1:] or an.mean.shape != Y.shape[1:]:
            raise ValueError("normalisation statistics do not match the dataset dimensions")
    return TrainingSet(on.normalize(X), an.normalize(Y), on, an)
