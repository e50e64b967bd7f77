"""Binary demonstration container.

Layout (all little-endian)::

    magic      4s   b"ADPK"
    version    u16
    name_len   u16, task name (utf-8)
    S, J, F, H u32  scene dim, finger joints, frame width, history length
    L          u32  label width (4 + 3 + J + 3 + 1)
    count      u32
    count x record:
        seed     i64
        n_steps  u32
        n_steps x (H*F observation floats, then label: quat, position, fingers, force, time)
        crc32    u32  over the record bytes above

Dimensions are validated against the task before any record is parsed.
"""
from __future__ import annotations

import os
import struct
import tempfile
import zlib
from typing import Sequence

import numpy as np

from ..core import Pose, TrajectoryPoint
from ..errors import (BadMagicError, CorruptRecordError, DimensionMismatchError,
                      ForceDiffError, TruncatedFileError, VersionMismatchError)
from ..sim.demonstrator import Demonstration
from ..sim.rollout import HISTORY, Observation, frame_dim
from ..sim.tasks import TASK_NAMES, make_task

MAGIC = b"ADPK"
VERSION = 1
_HEAD = struct.Struct("<4sHH")
_DIMS = struct.Struct("<6I")
_REC = struct.Struct("<qI")
_CRC = struct.Struct("<I")
F64 = np.dtype("<f8")


def label_dim(num_fingers: int) -> int:
    return 4 + 3 + num_fingers + 3 + 1


def _label(p: TrajectoryPoint) -> np.ndarray:
    return np.concatenate([p.pose.rotation, p.pose.position, p.finger_joints,
                           p.desired_force, [p.timestamp]])


def encode_dataset(demos: Sequence[Demonstration]) -> bytes:
    if not demos:
        raise ValueError("no demonstrations to write")
    name = demos[0].task
    first = demos[0].steps[0][0]
    S, J = first.scene_dim, first.num_fingers
    F = frame_dim(S, J)
    name_b = name.encode()
    out = [_HEAD.pack(MAGIC, VERSION, len(name_b)), name_b,
           _DIMS.pack(S, J, F, HISTORY, label_dim(J), len(demos))]
    for d in demos:
        if d.task != name:
            raise ValueError(f"mixed tasks in one dataset: '{name}' and '{d.task}'")
        rows = []
        for o, p in d.steps:
            if (o.scene_dim, o.num_fingers) != (S, J):
                raise ValueError("inconsistent observation dimensions")
            rows.append(np.concatenate([o.frames.ravel(), _label(p)]))
        body = _REC.pack(d.seed, len(rows)) + np.asarray(rows, dtype=F64).tobytes()
        out += [body, _CRC.pack(zlib.crc32(body))]
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        avail = len(self.buf) - self.pos
        if n > avail:
            raise TruncatedFileError(self.pos, n, avail)
        b = self.buf[self.pos:self.pos + n]
        self.pos += n
        return b

    def unpack(self, st: struct.Struct):
        return st.unpack(self.take(st.size))


def decode_dataset(buf: bytes) -> list[Demonstration]:
    r = _Reader(buf)
    if len(buf) < 4 or buf[:4] != MAGIC:
        if len(buf) < 4 and MAGIC.startswith(buf):
            raise TruncatedFileError(0, 4, len(buf))
        raise BadMagicError(f"bad magic {bytes(buf[:4])!r}")
    _, version, name_len = r.unpack(_HEAD)
    if version != VERSION:
        raise VersionMismatchError(f"dataset version {version}, reader supports {VERSION}")
    try:
        name = r.take(name_len).decode()
    except UnicodeDecodeError as exc:
        raise CorruptRecordError(f"task name is not utf-8: {exc}") from None
    if name not in TASK_NAMES:
        raise CorruptRecordError(f"unknown task '{name}' in header")
    S, J, F, H, L, count = r.unpack(_DIMS)
    task = make_task(name)
    want = (task.scene_dim, task.hand.dof, frame_dim(task.scene_dim, task.hand.dof),
            HISTORY, label_dim(task.hand.dof))
    if (S, J, F, H, L) != want:
        raise DimensionMismatchError(
            f"header dims S={S} J={J} F={F} H={H} L={L}; task '{name}' needs "
            "S={} J={} F={} H={} L={}".format(*want))
    row = H * F + L
    demos = []
    for i in range(count):
        start = r.pos
        seed, n = r.unpack(_REC)
        data = r.take(8 * row * n)
        body = buf[start:r.pos]
        (crc,) = r.unpack(_CRC)
        if crc != zlib.crc32(body):
            raise CorruptRecordError(f"record {i} at offset {start}: checksum mismatch")
        demos.append(_decode_record(name, seed, np.frombuffer(data, dtype=F64).reshape(n, row),
                                    S, J, H, F, i, start))
    if r.pos != len(buf):
        raise CorruptRecordError(f"{len(buf) - r.pos} trailing bytes after {count} records")
    return demos


def _decode_record(name, seed, rows, S, J, H, F, i, offset) -> Demonstration:
    where = f"record {i} at offset {offset}"
    if rows.shape[0] == 0:
        raise CorruptRecordError(f"{where}: empty demonstration")
    if not np.all(np.isfinite(rows)):
        raise CorruptRecordError(f"{where}: non-finite values")
    ts = rows[:, -1]
    if np.any(np.diff(ts) <= 0):
        raise CorruptRecordError(f"{where}: timestamps not strictly increasing")
    steps = []
    try:
        for x in rows:
            obs = Observation(x[:H * F].reshape(H, F).copy(), S, J)
            lab = x[H * F:]
            q = lab[:4]
            if abs(np.linalg.norm(q) - 1.0) > 1e-9:
                raise CorruptRecordError(f"{where}: non-unit quaternion")
            pt = TrajectoryPoint(Pose(q.copy(), lab[4:7].copy()), lab[7:7 + J].copy(),
                                 lab[7 + J:10 + J].copy(), float(lab[-1]))
            steps.append((obs, pt))
    except CorruptRecordError:
        raise
    except (ValueError, ForceDiffError) as exc:
        raise CorruptRecordError(f"{where}: {exc}") from None
    return Demonstration(name, int(seed), tuple(steps))


def atomic_write(path: str, data: bytes | str) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode() if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_dataset(path: str, demos: Sequence[Demonstration]) -> None:
    atomic_write(path, encode_dataset(demos))


def read_dataset(path: str) -> list[Demonstration]:
    with open(path, "rb") as fh:
        return decode_dataset(fh.read())
