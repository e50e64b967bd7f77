import numpy as np
import pytest

from forcediff.gradcheck import CHECKS, central_diff, rel_error, run_all


def test_central_diff_exact_on_quartic():
    f = lambda x: float(x[0] ** 4 - 3 * x[0] ** 3 + x[1])  # noqa: E731
    x = np.array([0.7, 2.0])
    g = central_diff(f, x, [0, 1], 1e-2)
    np.testing.assert_allclose(g, [4 * 0.7 ** 3 - 9 * 0.7 ** 2, 1.0], rtol=1e-12)


def test_rel_error_floor():
    assert rel_error(1e-12, 2e-12)[()] < 1e-5
    assert rel_error(1.0, 1.1)[()] == pytest.approx(0.1 / 1.1)


@pytest.mark.parametrize("name", sorted(CHECKS))
def test_each_check_passes(name):
    rep = CHECKS[name](np.random.default_rng(7), cases=10)
    assert rep.passed, rep.line()


def test_detects_wrong_gradient(monkeypatch):
    import forcediff.gradcheck as gc

    monkeypatch.setattr(gc, "pseudo_huber_grad", lambda x, y, c: 1.01 * (x - y) / np.sqrt(
        np.sum((x - y) ** 2) + c * c))
    assert not gc.check_pseudo_huber(np.random.default_rng(0), cases=5).passed


def test_run_all_reports():
    reps = run_all(seed=1, cases=2)
    assert [r.name for r in reps] == list(CHECKS)
