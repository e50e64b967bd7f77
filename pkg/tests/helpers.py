"""Shared test utilities."""
import numpy as np

ACCEPTANCE_LINES: list[str] = []
ELBOW_MARGIN = 0.2  # rad from the straight (singular) chain


def random_quats(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def nondegenerate_posture(rng, hand):
    lo = hand.q_lower.copy()
    lo[[1, 3]] += ELBOW_MARGIN
    return rng.uniform(lo, hand.q_upper)


def mutations(buf: bytes, n: int, seed: int = 0):
    """Yield ``n`` corrupted variants of ``buf``: bit flips (anywhere and in the
    header), truncations, appended bytes, and overwritten byte runs."""
    rng = np.random.default_rng(seed)
    for i in range(n):
        m = bytearray(buf)
        kind = i % 5
        if kind == 0:
            pos = int(rng.integers(len(m)))
            m[pos] ^= 1 << int(rng.integers(8))
        elif kind == 1:
            m = m[: int(rng.integers(len(m)))]
        elif kind == 2:
            pos = int(rng.integers(min(64, len(m))))
            m[pos] ^= 1 << int(rng.integers(8))
        elif kind == 3:
            m += rng.integers(0, 256, int(rng.integers(1, 20))).astype(np.uint8).tobytes()
        else:
            pos = int(rng.integers(len(m) - 8))
            m[pos:pos + 8] = rng.integers(0, 256, 8).astype(np.uint8).tobytes()
        yield kind, bytes(m)


def tiny_policy(task: str = "dragging", obs_dim: int = 10, num_fingers: int = 4, student=True):
    from forcediff.policy.data import Normalizer
    from forcediff.policy.edm import Denoiser
    from forcediff.policy.infer import Policy
    from forcediff.policy.nn import DenoiserNet, NetConfig, teacher_to_student

    cfg = NetConfig(obs_dim=obs_dim, num_fingers=num_fingers, cond_dim=8, width=8, enc_width=8,
                    head_width=8, emb_dim=4)
    teacher = Denoiser(DenoiserNet(cfg, seed=4))
    st = Denoiser(teacher_to_student(teacher.net)) if student else None
    rng = np.random.default_rng(1)
    on = Normalizer(rng.normal(size=obs_dim), rng.uniform(0.5, 2, obs_dim))
    an = Normalizer(rng.normal(size=cfg.action_dim), rng.uniform(0.5, 2, cfg.action_dim))
    return Policy(task, on, an, teacher, st)
