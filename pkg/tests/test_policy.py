import numpy as np
import pytest
from hypothesis import given, strategies as st

from forcediff.core import Pose, TrajectoryPoint, quat_from_axis_angle
from forcediff.policy import nn as nn_mod
from forcediff.policy.data import (Normalizer, build_training_set, decode_chunk, demo_arrays,
                                   encode_chunk)
from forcediff.policy.edm import (Denoiser, NoiseSchedule, huber_c, precondition, pseudo_huber,
                                  pseudo_huber_grad, solver_levels, teacher_solve)
from forcediff.policy.infer import Policy, infer_chunk
from forcediff.policy.nn import DenoiserNet, NetConfig, teacher_to_student
from forcediff.policy.train import OptimConfig, distill_student, train_teacher
from forcediff.sim.rollout import Observation, frame_dim

TINY = NetConfig(obs_dim=6, num_fingers=2, horizon=3, cond_dim=8, width=8, enc_width=8,
                 head_width=8, emb_dim=4)


def _models(seed=0):
    rng = np.random.default_rng(seed)
    t_net = DenoiserNet(TINY, seed=seed)
    t_net.theta += rng.normal(0, 0.2, t_net.theta.shape)
    s_net = teacher_to_student(t_net)
    return Denoiser(t_net), Denoiser(s_net), rng


def test_net_config_validation():
    with pytest.raises(ValueError):
        NetConfig(obs_dim=0)
    with pytest.raises(ValueError):
        NetConfig(obs_dim=4, emb_dim=3)
    assert NetConfig(obs_dim=4).action_dim == 8 * 16


def test_head_columns_partition():
    cols = np.concatenate(list(TINY.head_columns().values()))
    np.testing.assert_array_equal(np.sort(cols), np.arange(TINY.action_dim))


def test_huber_c_example():
    assert huber_c(128) == pytest.approx(0.0565685424949238, rel=1e-12)


def test_pseudo_huber_examples():
    assert pseudo_huber([3.0, 4.0], [0.0, 0.0], 1.0) == pytest.approx(np.sqrt(26.0) - 1.0)
    assert pseudo_huber([1.0, 2.0], [1.0, 2.0], 0.1) == 0.0
    with pytest.raises(ValueError):
        pseudo_huber([1.0], [0.0], 0.0)


@given(st.floats(1e-3, 1.0), st.floats(1e-4, 1e4))
def test_pseudo_huber_regimes(c, r):
    d = np.array([r, 0.0])
    val = float(pseudo_huber(d, np.zeros(2), c))
    assert 0 <= val <= r
    # quadratic for |d| << c and linear for |d| >> c
    if r < 1e-3 * c:
        assert val == pytest.approx(r * r / (2 * c), rel=1e-3)
    if r > 1e3 * c:
        assert val == pytest.approx(r - c, rel=1e-3)
    g = pseudo_huber_grad(d, np.zeros(2), c)
    assert np.linalg.norm(g) < 1.0


@given(st.floats(0.002, 80.0), st.floats(0.1, 2.0))
def test_precondition_identity(t, sd):
    c_skip, c_out, c_in, c_noise = precondition(t, sd)
    assert c_skip + c_out ** 2 / sd ** 2 == pytest.approx(1.0, rel=1e-12)
    assert c_in == pytest.approx(1.0 / np.sqrt(t * t + sd * sd))
    assert c_noise == pytest.approx(np.log(t) / 4)


def test_c_skip_near_one_at_sigma_min():
    skips = [float(precondition(t)[0]) for t in (1e-1, 1e-2, 2e-3)]
    assert skips == sorted(skips)
    assert skips[-1] > 1 - 2e-5


def test_karras_grid():
    s = NoiseSchedule()
    g = s.grid()
    assert g.size == 101 and g[0] == 80.0 and g[-1] == 0.002
    assert np.all(np.diff(g) < 0)
    i = 37
    want = (80 ** (1 / 7) + i / 100 * (0.002 ** (1 / 7) - 80 ** (1 / 7))) ** 7
    assert g[i] == pytest.approx(want, rel=1e-12)
    with pytest.raises(ValueError):
        NoiseSchedule(sigma_min=1.0, sigma_max=0.5)


def test_solver_levels():
    lv = solver_levels(NoiseSchedule(K=10), 50.0, 1.0)
    assert lv[0] == 50.0 and lv[-1] == 1.0 and np.all(np.diff(lv) < 0)


def test_network_backward_fd():
    net = DenoiserNet(TINY, seed=3)
    rng = np.random.default_rng(3)
    net.theta += rng.normal(0, 0.3, net.theta.shape)
    x = rng.normal(size=(2, TINY.action_dim))
    temb = rng.normal(size=(2, TINY.emb_dim))
    obs = rng.normal(size=(2, TINY.obs_dim))
    w = rng.normal(size=(2, TINY.action_dim))
    cache = {}
    net.forward(x, temb, obs=obs, cache=cache)
    grad, dx, _ = net.backward(cache, w)
    h = 1e-5
    f = lambda th=None, xx=x: float(np.sum(w * net.forward(xx, temb, obs=obs, theta=th)))  # noqa: E731
    for i in rng.choice(net.theta.size, 40, replace=False):
        tp, tm = net.theta.copy(), net.theta.copy()
        tp[i] += h
        tm[i] -= h
        assert (f(tp) - f(tm)) / (2 * h) == pytest.approx(grad[i], rel=1e-5, abs=1e-8)
    for j in range(4):
        xp, xm = x.copy(), x.copy()
        xp[0, j] += h
        xm[0, j] -= h
        assert (f(xx=xp) - f(xx=xm)) / (2 * h) == pytest.approx(dx[0, j], rel=1e-5, abs=1e-8)


def test_student_initialised_from_teacher():
    teacher, student, rng = _models()
    A = rng.normal(size=(4, TINY.action_dim))
    obs = rng.normal(size=(4, TINY.obs_dim))
    t = np.array([80.0, 3.0, 0.5, 0.01])
    tp = np.full(4, 0.002)
    r = (tp / t)[:, None]
    np.testing.assert_allclose(student(A, t, tp, obs=obs),
                               r * A + (1 - r) * teacher(A, t, obs=obs), rtol=1e-12, atol=1e-12)


def test_student_identity_at_equal_times():
    _, student, rng = _models(1)
    A = rng.normal(size=(3, TINY.action_dim))
    obs = rng.normal(size=(3, TINY.obs_dim))
    t = np.array([40.0, 1.0, 0.01])
    np.testing.assert_allclose(student(A, t, t, obs=obs), A, rtol=0, atol=1e-14)
    with pytest.raises(ValueError):
        student(A, t, t * 1.5, obs=obs)


def test_noise_level_range_checked():
    teacher, _, rng = _models()
    with pytest.raises(ValueError):
        teacher(rng.normal(size=(1, TINY.action_dim)), 100.0, obs=rng.normal(size=(1, 6)))


def test_teacher_solve_identity_and_euler_step():
    teacher, _, rng = _models(2)
    A = rng.normal(size=TINY.action_dim)
    code = teacher.encode(rng.normal(size=(1, TINY.obs_dim)))[0]
    np.testing.assert_array_equal(teacher_solve(teacher, A, 5.0, 5.0, code), A)
    v, u = 5.0, 2.0
    got = teacher_solve(teacher, A, v, u, code, method="euler", levels=np.array([v, u]))
    D = teacher(A, v, code=code)[0]
    np.testing.assert_allclose(got, A + (u - v) * (A - D) / v, rtol=1e-13)
    with pytest.raises(ValueError):
        teacher_solve(teacher, A, 1.0, 2.0, code)


def test_normalizer_roundtrip():
    rng = np.random.default_rng(0)
    X = rng.normal(3, 2, (50, 4))
    n = Normalizer.fit(X, 1e-3)
    np.testing.assert_allclose(n.denormalize(n.normalize(X)), X, rtol=1e-12)
    assert np.all(Normalizer.fit(np.ones((5, 2)), 0.5).std == 0.5)


def test_chunk_roundtrip():
    origin = np.array([0.3, -0.1, 0.2])
    pts = [TrajectoryPoint(Pose(quat_from_axis_angle([0, 0, 1], 0.1 * i), origin + 0.01 * i),
                           np.full(2, 0.1 * i), np.array([-1.0 * i, 0, 0]), 0.1 * (i + 1))
           for i in range(3)]
    A = encode_chunk(pts, origin)
    back = decode_chunk(A, origin, 0.0, 2, horizon=3)
    for p, q in zip(pts, back):
        np.testing.assert_allclose(q.pose.position, p.pose.position, atol=1e-15)
        assert abs(abs(np.dot(q.pose.rotation, p.pose.rotation)) - 1) < 1e-12
        np.testing.assert_allclose(q.desired_force, p.desired_force)
        assert q.timestamp == pytest.approx(p.timestamp)


def test_decode_caps_force():
    A = np.tile(np.r_[np.zeros(3), 1, 0, 0, 0, 1, 0, np.zeros(2), np.zeros(3)], 3)
    A[11] = 500.0
    pts = decode_chunk(A, np.zeros(3), 0.0, 2, horizon=3)
    assert np.linalg.norm(pts[0].desired_force) == pytest.approx(99.9)


def test_demo_arrays_padding(drag_demos):
    d = drag_demos[0]
    X, Y = demo_arrays(d)
    assert X.shape[0] == Y.shape[0] == len(d)
    np.testing.assert_array_equal(Y[-1][-16:], Y[-1][-32:-16])


@pytest.fixture(scope="module")
def small_training(drag_demos):
    ds = build_training_set(drag_demos)
    cfg = NetConfig(obs_dim=ds.obs.shape[1], width=32, enc_width=32, head_width=16,
                    cond_dim=16, emb_dim=8)
    teacher, h1 = train_teacher(ds, cfg, OptimConfig(steps=600, batch_size=32))
    student, h2 = distill_student(teacher, ds, OptimConfig(steps=150, batch_size=32, lr=0.03))
    return ds, teacher, student, h1, h2


def test_teacher_loss_decreases(small_training):
    L = small_training[3].column("L_DSM")
    assert L[-3:].mean() <= 0.5 * L[:3].mean()


def test_distillation_loss_decreases(small_training):
    C = small_training[4].column("L_CTM")
    assert C[-3:].mean() <= 0.7 * C[:3].mean()


def test_training_deterministic(drag_demos):
    ds = build_training_set(drag_demos[:2])
    cfg = NetConfig(obs_dim=ds.obs.shape[1], width=8, enc_width=8, head_width=8,
                    cond_dim=8, emb_dim=4)
    a, _ = train_teacher(ds, cfg, OptimConfig(steps=5, batch_size=8))
    b, _ = train_teacher(ds, cfg, OptimConfig(steps=5, batch_size=8))
    assert a.net.theta.tobytes() == b.net.theta.tobytes()


def test_inference_evaluation_counts(small_training, drag_demos, monkeypatch):
    ds, teacher, student, _, _ = small_training
    pol = Policy("dragging", ds.obs_norm, ds.act_norm, teacher, student)
    obs = drag_demos[0].steps[5][0]
    calls = []
    orig = nn_mod.DenoiserNet.forward

    def counting(self, x, *a, **k):
        calls.append(x.shape[0])
        return orig(self, x, *a, **k)

    monkeypatch.setattr(nn_mod.DenoiserNet, "forward", counting)
    pts = infer_chunk(pol, "student", obs, seed=1)
    assert len(calls) == 1 and len(pts) == 8
    calls.clear()
    infer_chunk(pol, "teacher", obs, seed=1)
    assert len(calls) == 100


def test_inference_deterministic(small_training, drag_demos):
    ds, teacher, student, _, _ = small_training
    pol = Policy("dragging", ds.obs_norm, ds.act_norm, teacher, student)
    obs = drag_demos[1].steps[3][0]
    a = infer_chunk(pol, "student", obs, seed=9)
    b = infer_chunk(pol, "student", obs, seed=9)
    assert all(p.pose.position.tobytes() == q.pose.position.tobytes() for p, q in zip(a, b))
    with pytest.raises(ValueError):
        Policy("dragging", ds.obs_norm, ds.act_norm, teacher).model("student")
