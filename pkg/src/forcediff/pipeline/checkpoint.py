"""Policy checkpoint container.

Layout (little-endian)::

    magic       4s  b"FDCK"
    version     u16
    config hash 32 bytes (sha256 of the model-defining config)
    D, C, J, O  u32 action dim, condition dim, finger joints, observation dim
    meta_len    u32, JSON metadata (task, network config, noise schedule, nets present)
    per net:    u32 entry count, then per entry: u16 name length, name, u32 size, f64 values
    obs mean, obs std (O each), action mean, action std (D each), f64
    crc32       u32 over everything above
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import (BadMagicError, ConfigError, CorruptRecordError, DimensionMismatchError,
                      TruncatedFileError, VersionMismatchError)
from ..policy.data import Normalizer
from ..policy.edm import Denoiser, NoiseSchedule
from ..policy.infer import Policy
from ..policy.nn import DenoiserNet, NetConfig, build_layout
from .dataset_io import F64, _Reader, atomic_write

MAGIC = b"FDCK"
VERSION = 1
NET_NAMES = ("teacher", "student")
_HEAD = struct.Struct("<4sH32s4II")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")


@dataclass(frozen=True)
class CheckpointInfo:
    config_hash: bytes
    action_dim: int
    cond_dim: int
    num_fingers: int
    obs_dim: int
    task: str


def _net_cfg_dict(cfg: NetConfig) -> dict:
    d = asdict(cfg)
    d.pop("n_times")
    return d


def encode_checkpoint(policy: Policy, config_hash: bytes) -> bytes:
    nets = {k: m for k in NET_NAMES if (m := getattr(policy, k)) is not None}
    if not nets:
        raise ValueError("policy has no networks")
    if len(config_hash) != 32:
        raise ValueError("config hash must be 32 bytes")
    ref = next(iter(nets.values()))
    cfgs = {_json(_net_cfg_dict(m.net.cfg)) for m in nets.values()}
    if len(cfgs) != 1:
        raise ValueError("teacher and student network configs differ")
    cfg = ref.net.cfg
    meta = {"task": policy.task, "net": _net_cfg_dict(cfg), "schedule": asdict(ref.schedule),
            "sigma_data": ref.sigma_data, "nets": list(nets)}
    meta_b = _json(meta).encode()
    out = [_HEAD.pack(MAGIC, VERSION, config_hash, cfg.action_dim, cfg.cond_dim,
                      cfg.num_fingers, cfg.obs_dim, len(meta_b)), meta_b]
    for m in nets.values():
        P = m.net.params()
        out.append(_U32.pack(len(P)))
        for name, arr in P.items():
            nb = name.encode()
            out += [_U16.pack(len(nb)), nb, _U32.pack(arr.size),
                    np.ascontiguousarray(arr, dtype=F64).tobytes()]
    for v in (policy.obs_norm.mean, policy.obs_norm.std,
              policy.act_norm.mean, policy.act_norm.std):
        out.append(np.asarray(v, dtype=F64).tobytes())
    body = b"".join(out)
    return body + _U32.pack(zlib.crc32(body))


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def decode_checkpoint(buf: bytes, expect_hash: bytes | None = None) -> tuple[Policy, CheckpointInfo]:
    if buf[:4] != MAGIC:
        if len(buf) < 4 and MAGIC.startswith(buf):
            raise TruncatedFileError(0, 4, len(buf))
        raise BadMagicError(f"bad checkpoint magic {bytes(buf[:4])!r}")
    r = _Reader(buf)
    _, version, h, D, C, J, O, meta_len = r.unpack(_HEAD)
    if version != VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, reader supports {VERSION}")
    try:
        meta = json.loads(r.take(meta_len).decode())
        net_cfg = NetConfig(**meta["net"])
        schedule = NoiseSchedule(**meta["schedule"])
        sigma_data = float(meta["sigma_data"])
        names = list(meta["nets"])
        task = str(meta["task"])
    except TruncatedFileError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptRecordError(f"bad checkpoint metadata: {exc}") from None
    if (D, C, J, O) != (net_cfg.action_dim, net_cfg.cond_dim, net_cfg.num_fingers, net_cfg.obs_dim):
        raise DimensionMismatchError(
            f"header dims D={D} C={C} J={J} O={O} disagree with the stored network config")
    if not names or any(n not in NET_NAMES for n in names) or len(set(names)) != len(names):
        raise CorruptRecordError(f"bad network list {names}")
    need = _expected_size(r.pos, net_cfg, names)
    if len(buf) < need:
        raise TruncatedFileError(len(buf), need - len(buf), 0)
    if len(buf) > need:
        raise CorruptRecordError(f"{len(buf) - need} trailing bytes")
    body = buf[:-4]
    (crc,) = _U32.unpack(buf[-4:])
    if crc != zlib.crc32(body):
        raise CorruptRecordError("checkpoint checksum mismatch")
    if expect_hash is not None and h != expect_hash:
        raise ConfigError(f"checkpoint ({task}) does not match the configured task and model settings")
    nets = {}
    for n in names:
        cfg = _variant(net_cfg, n)
        layout = build_layout(cfg)
        theta = np.empty(layout.size)
        (count,) = r.unpack(_U32)
        if count != len(layout.entries):
            raise DimensionMismatchError(f"{n}: {count} parameter blocks, expected {len(layout.entries)}")
        for name, _ in layout.entries:
            (ln,) = r.unpack(_U16)
            got = r.take(ln)
            (size,) = r.unpack(_U32)
            sl = layout.slices[name]
            if got != name.encode():
                raise CorruptRecordError(f"{n}: expected block '{name}', found {got!r}")
            if size != sl.stop - sl.start:
                raise DimensionMismatchError(f"{n}.{name}: {size} values, expected {sl.stop - sl.start}")
            theta[sl] = np.frombuffer(r.take(8 * size), dtype=F64)
        nets[n] = Denoiser(DenoiserNet(cfg, theta), schedule, sigma_data)
    stats = [np.frombuffer(r.take(8 * k), dtype=F64).copy() for k in (O, O, D, D)]
    if r.pos != len(body):
        raise CorruptRecordError(f"{len(body) - r.pos} unexpected bytes before the checksum")
    for n, m in nets.items():
        if not np.all(np.isfinite(m.net.theta)):
            raise CorruptRecordError(f"{n} parameters are not finite")
    if not all(np.all(np.isfinite(s)) for s in stats) or np.any(stats[1] <= 0) or np.any(stats[3] <= 0):
        raise CorruptRecordError("invalid normalisation statistics")
    policy = Policy(task, Normalizer(stats[0], stats[1]), Normalizer(stats[2], stats[3]),
                    nets.get("teacher"), nets.get("student"))
    return policy, CheckpointInfo(h, D, C, J, O, task)


def _variant(net_cfg: NetConfig, name: str) -> NetConfig:
    return NetConfig(**{**asdict(net_cfg), "n_times": 2 if name == "student" else 1})


def _expected_size(offset: int, net_cfg: NetConfig, names) -> int:
    n = offset
    for name in names:
        layout = build_layout(_variant(net_cfg, name))
        n += 4 + sum(2 + len(k) + 4 + 8 * int(np.prod(shape)) for k, shape in layout.entries)
    return n + 8 * 2 * (net_cfg.obs_dim + net_cfg.action_dim) + 4


def save_checkpoint(path: str, policy: Policy, config_hash: bytes) -> None:
    atomic_write(path, encode_checkpoint(policy, config_hash))


def load_checkpoint(path: str, expect_hash: bytes | None = None) -> tuple[Policy, CheckpointInfo]:
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read(), expect_hash)
