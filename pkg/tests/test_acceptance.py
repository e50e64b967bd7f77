"""End-to-end acceptance suite; each test prints and records one PASS/FAIL line."""
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from forcediff.admittance import PRESETS, AdmittanceState, DesiredSetpoint, compute_acceleration, step
from forcediff.core import Pose, TrajectoryPoint, angular_distance, quat_to_6d, six_d_to_quat, slerp
from forcediff.errors import FormatError
from forcediff.gradcheck import run_all
from forcediff.interpolation import densify
from forcediff.pipeline import workflow
from forcediff.pipeline.checkpoint import encode_checkpoint, load_checkpoint, save_checkpoint
from forcediff.pipeline.config import load_config
from forcediff.pipeline.dataset_io import encode_dataset, read_dataset, write_dataset
from forcediff.pipeline.episode import run_episode
from forcediff.pipeline.evaluate import compare, evaluate
from forcediff.policy.data import build_training_set
from forcediff.policy.edm import teacher_solve
from forcediff.policy.infer import infer_chunk
from forcediff.retargeting import RetargetConfig, forward_keypoints, retarget, toy_hand

from helpers import ACCEPTANCE_LINES, mutations, nondegenerate_posture, random_quats

ABLATION_TASKS = ("dragging", "door", "wiping")
EPISODES = 20


def record(n: int, title: str, ok: bool, detail: str, elapsed: float, budget: float) -> bool:
    ok = ok and elapsed <= budget
    line = (f"criterion {n} {'PASS' if ok else 'FAIL'} {title}: {detail} "
            f"[{elapsed:.1f} s of {budget:.0f} s]")
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


@pytest.fixture(scope="module")
def trained():
    """Teacher and student per ablation task with the default configuration."""
    out = {}
    for task in ABLATION_TASKS:
        cfg = load_config(None, task)
        demos = workflow.generate_demos(cfg)
        policy, _ = workflow.train(cfg, demos)
        policy, _ = workflow.distill(cfg, policy, demos)
        out[task] = (cfg, demos, policy)
    return out


@pytest.fixture(scope="module")
def evaluations(trained):
    """Student and no-force-control runs on matched seeds, with their wall time."""
    res = {}
    for task, (cfg, _, policy) in trained.items():
        t0 = time.perf_counter()
        a = evaluate(policy, "student", cfg.make_task(), EPISODES, cfg.eval.seed,
                     cfg.rollout_settings())
        t1 = time.perf_counter()
        b = evaluate(policy, "no-force-control", cfg.make_task(), EPISODES, cfg.eval.seed,
                     cfg.rollout_settings())
        res[task] = (a, b, t1 - t0, time.perf_counter() - t1)
    return res


def test_c1_admittance_steady_state():
    t0 = time.perf_counter()
    s = AdmittanceState()
    sp = DesiredSetpoint(np.zeros(3), np.zeros(3), np.zeros(3))
    target = -4.5 / 1540
    settled_at = None
    for k in range(1, 1001):
        s = step(s, compute_acceleration(s, sp, [-4.5, 0, 0], PRESETS["insertion"]), 0.01)
        inside = abs(s.p[0] - target) <= 1e-5
        if inside and settled_at is None:
            settled_at = k * 0.01
        elif not inside:
            settled_at = None
    err = abs(s.p[0] - target)
    ok = settled_at is not None and err <= 1e-5
    assert record(1, "admittance steady state",
                  ok, f"offset error {err:.2e} m, settled at {settled_at} s",
                  time.perf_counter() - t0, 1)


def test_c2_force_tracking(trained):
    cfg, _, policy = trained["dragging"]
    t0 = time.perf_counter()
    ep = run_episode(policy, "student", cfg.make_task(), cfg.eval.seed, cfg.rollout_settings())
    dt = time.perf_counter() - t0
    ok = ep.success and ep.metrics.rmse <= 1.0
    assert record(2, "force tracking", ok,
                  f"dragging seed {ep.seed} RMSE {ep.metrics.rmse:.3f} N, "
                  f"{'success' if ep.success else ep.reason}", dt, 10)


def test_c3_gradient_suite():
    t0 = time.perf_counter()
    reps = run_all(seed=0, cases=100)
    dt = time.perf_counter() - t0
    ok = all(r.passed and r.cases >= 100 for r in reps)
    detail = ", ".join(f"{r.name} {r.worst:.1e}" for r in reps)
    assert record(3, "gradient suite", ok, f"worst relative error {detail}", dt, 120)


def test_c4_retargeting_recovery():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    hand = toy_hand()
    cfg = RetargetConfig(alpha=1.0, beta=0.0)
    recovered = monotone = 0
    for _ in range(200):
        q_star = nondegenerate_posture(rng, hand)
        q_prev = rng.uniform(hand.q_lower, hand.q_upper)
        res = retarget(hand, forward_keypoints(hand, q_star), q_prev, cfg)
        recovered += np.abs(res.q - q_star).max() <= 1e-3
        monotone += bool(np.all(np.diff(res.cost_history) <= 0))
    ok = recovered >= 190 and monotone == 200
    assert record(4, "retargeting recovery", ok,
                  f"{recovered}/200 within 1e-3 rad, monotone cost on {monotone}/200",
                  time.perf_counter() - t0, 30)


def _nearest_error(out, actions):
    d = np.sqrt(((out[:, None, :] - actions[None]) ** 2).mean(-1))
    return float(d.min(1).mean())


def test_c5_consistency_distillation():
    cfg = load_config(None, "dragging")
    demos = workflow.generate_demos(cfg, count=4, seed=0)
    t0 = time.perf_counter()
    policy, _ = workflow.train(cfg, demos)
    policy, _ = workflow.distill(cfg, policy, demos)
    train_time = time.perf_counter() - t0
    data = build_training_set(demos, horizon=cfg.policy.horizon,
                              norms=(policy.obs_norm, policy.act_norm))
    rng = np.random.default_rng(5)
    idx = rng.choice(len(data), 100, replace=False)
    err = {}
    for mode in ("teacher", "student"):
        m = policy.model(mode)
        s = m.schedule
        A = rng.standard_normal((len(idx), data.actions.shape[1])) * s.sigma_max
        code = m.encode(data.obs[idx])
        if mode == "teacher":
            out = teacher_solve(m, A, s.sigma_max, s.sigma_min, code, method="euler")
        else:
            out = m(A, s.sigma_max, s.sigma_min, code=code)
        err[mode] = _nearest_error(out, data.actions)
    obs = demos[0].steps[10][0]
    evals = {}
    wall = {}
    for mode in ("teacher", "student"):
        net = policy.model(mode).net
        n0, w0 = net.n_evals, time.perf_counter()
        infer_chunk(policy, mode, obs, seed=0)
        evals[mode] = net.n_evals - n0
        wall[mode] = 1e3 * (time.perf_counter() - w0)
    ok = err["student"] <= 2 * err["teacher"] and evals == {"teacher": 100, "student": 1}
    assert record(5, "consistency distillation", ok,
                  f"nearest-action error student {err['student']:.4f} vs teacher "
                  f"{err['teacher']:.4f}; evaluations {evals['student']} vs {evals['teacher']} "
                  f"({wall['student']:.1f} ms vs {wall['teacher']:.1f} ms)", train_time, 900)


def test_c6_ablation_direction(evaluations):
    parts, ok, elapsed = [], True, 0.0
    for task in ABLATION_TASKS:
        a, b, ta, tb = evaluations[task]
        c = compare(a, b)
        ok &= c.mean_reduction >= 0.30 and c.std_reduction >= 0.30
        parts.append(f"{task} mean -{c.mean_reduction:.1%} std -{c.std_reduction:.1%}")
        elapsed += ta + tb
    assert record(6, "ablation direction", ok, "; ".join(parts), elapsed, 300)


def test_c7_success_rate(evaluations):
    drag = evaluations["dragging"][0].summary()
    door = evaluations["door"][0].summary()
    ok = drag.success_rate >= 0.9 and door.success_rate >= 0.8
    elapsed = evaluations["dragging"][2] + evaluations["door"][2]
    assert record(7, "success rate", ok,
                  f"dragging {drag.success_rate:.0%}, door {door.success_rate:.0%} "
                  f"over {EPISODES} episodes", elapsed, 300)


def test_c8_interpolation_rotation_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    qs = random_quats(rng, 2000)
    worst = {"slerp mid": 0.0, "slerp speed": 0.0, "6d": 0.0, "downsample pos/force": 0.0,
             "downsample rot": 0.0}
    for q0, q1 in zip(qs[::2], qs[1::2]):
        total = angular_distance(q0, q1)
        mid = slerp(q0, q1, 0.5)
        worst["slerp mid"] = max(worst["slerp mid"], abs(angular_distance(q0, mid) - total / 2),
                                 abs(angular_distance(mid, q1) - total / 2))
        for t in (0.1, 0.3, 0.7, 0.9):
            worst["slerp speed"] = max(worst["slerp speed"],
                                       abs(angular_distance(q0, slerp(q0, q1, t)) - t * total))
        r = six_d_to_quat(quat_to_6d(q0))
        worst["6d"] = max(worst["6d"], min(np.abs(r - q0).max(), np.abs(r + q0).max()))
    for _ in range(1000):
        n = int(rng.integers(2, 6))
        rots = random_quats(rng, n)
        pts = [TrajectoryPoint(Pose(rots[i], rng.normal(size=3)), rng.uniform(0, 1.6, 4),
                               rng.normal(size=3), 0.1 * i) for i in range(n)]
        d = densify(pts, 100)
        idx = np.arange(n) * 10
        lin = max(np.abs(d.positions[idx] - [p.pose.position for p in pts]).max(),
                  np.abs(d.forces[idx] - [p.desired_force for p in pts]).max())
        rot = max(angular_distance(d.rotations[j], rots[i]) for i, j in enumerate(idx))
        worst["downsample pos/force"] = max(worst["downsample pos/force"], lin)
        worst["downsample rot"] = max(worst["downsample rot"], rot)
    ok = (worst["slerp mid"] <= 1e-9 and worst["slerp speed"] <= 1e-9 and worst["6d"] <= 1e-8
          and worst["downsample pos/force"] <= 1e-12 and worst["downsample rot"] <= 1e-9)
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert record(8, "interpolation and rotation oracles", ok, f"1000 cases, worst {detail}",
                  time.perf_counter() - t0, 10)


def test_c9_serialization(trained, tmp_path):
    cfg, demos, policy = trained["dragging"]
    t0 = time.perf_counter()
    ds_path, ck_path = tmp_path / "drag.adpk", tmp_path / "drag.ck"
    write_dataset(str(ds_path), demos)
    ds_ok = encode_dataset(read_dataset(str(ds_path))) == ds_path.read_bytes()
    save_checkpoint(str(ck_path), policy, cfg.model_hash())
    back, _ = load_checkpoint(str(ck_path), cfg.model_hash())
    ck_ok = encode_checkpoint(back, cfg.model_hash()) == ck_path.read_bytes()
    small = encode_dataset(demos[:3])
    files = []
    for i, (_, m) in enumerate(mutations(small, 60, seed=9)):
        files.append(("dataset", tmp_path / f"m{i}.adpk"))
        files[-1][1].write_bytes(m)
    for i, (_, m) in enumerate(mutations(ck_path.read_bytes(), 60, seed=10)):
        files.append(("checkpoint", tmp_path / f"m{i}.ck"))
        files[-1][1].write_bytes(m)
    classified, kinds = 0, set()
    for kind, path in files:
        try:
            (read_dataset if kind == "dataset" else load_checkpoint)(str(path))
        except FormatError as exc:
            classified += 1
            kinds.add(type(exc).__name__)
    ok = ds_ok and ck_ok and classified == len(files)
    assert record(9, "serialization", ok,
                  f"round-trips bitwise dataset={ds_ok} checkpoint={ck_ok}; "
                  f"{classified}/{len(files)} corrupt files classified ({', '.join(sorted(kinds))})",
                  time.perf_counter() - t0, 10)


DETERMINISM_CONFIG = """
[task]
name = dragging
[train]
steps = 500
[distill]
steps = 500
[eval]
episodes = 5
"""


def _pipeline_run(workdir):
    env = {**os.environ, "OMP_NUM_THREADS": "1", "OPENBLAS_NUM_THREADS": "1",
           "MKL_NUM_THREADS": "1"}
    cfg = workdir / "run.ini"
    cfg.write_text(DETERMINISM_CONFIG)
    base = [sys.executable, "-m", "forcediff.cli", "--config", str(cfg)]
    steps = [
        ["demo-gen", "--seed", "0", "--out", str(workdir / "demos.adpk")],
        ["train", "--data", str(workdir / "demos.adpk"), "--out-checkpoint",
         str(workdir / "teacher.ck"), "--loss-csv", str(workdir / "train.csv")],
        ["distill", "--teacher", str(workdir / "teacher.ck"), "--data",
         str(workdir / "demos.adpk"), "--out-checkpoint", str(workdir / "policy.ck"),
         "--loss-csv", str(workdir / "distill.csv")],
        ["eval", "--checkpoint", str(workdir / "policy.ck"), "--out-csv",
         str(workdir / "eval.csv")],
    ]
    for args in steps:
        subprocess.run(base + args, check=True, env=env, capture_output=True)
    return {name: (workdir / name).read_bytes() for name in ("train.csv", "distill.csv", "eval.csv")}


def test_c10_determinism(tmp_path):
    t0 = time.perf_counter()
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    a = _pipeline_run(tmp_path / "a")
    b = _pipeline_run(tmp_path / "b")
    same = [k for k in a if a[k] == b[k]]
    rows = a["eval.csv"].decode().count("\n") - 1
    ok = len(same) == len(a) and rows == 5
    assert record(10, "determinism", ok,
                  f"identical: {', '.join(same) or 'none'} ({rows} eval rows)",
                  time.perf_counter() - t0, 600)
