import numpy as np
import pytest

from app.core.exceptions import EarlyExit, InvalidInputError, SimplexAborted
from app.core.nelder_mead import initial_simplex, nelder_mead


def test_initial_simplex():
    S = initial_simplex(np.array([10.0, 0.0]))
    assert S.shape == (3, 2)
    assert S[1].tolist() == [10.5, 0.0]
    assert S[2].tolist() == [10.0, 0.00025]


def test_minimizes_quadratic():
    target = np.array([3.0, -2.0, 7.5])
    res = nelder_mead(lambda x: float(np.sum((x - target) ** 2)) + 1.0, [1.0, 1.0, 1.0], tol_opt=1e-8)
    assert res.converged
    assert res.reason == "converged"
    np.testing.assert_allclose(res.x, target, atol=1e-3)
    assert res.f == pytest.approx(1.0, abs=1e-6)


def test_trace_is_monotone_and_serializable():
    res = nelder_mead(lambda x: float((x[0] - 4.0) ** 2 + (x[1] + 1.0) ** 2), [1.0, 1.0], tol_opt=1e-6)
    f_best = [entry["f_best"] for entry in res.trace]
    assert all(b <= a for a, b in zip(f_best, f_best[1:]))
    assert res.trace[0]["step"] == "initial"
    assert isinstance(res.trace[-1]["x_best"], list)
    assert res.trace[-1]["n_eval"] == res.n_eval


def test_constant_objective_stops_immediately():
    res = nelder_mead(lambda x: 2.0, [1.0, 2.0])
    assert res.converged
    assert res.iterations == 0
    assert res.n_eval == 3


def test_max_eval():
    res = nelder_mead(lambda x: float(np.sum(x ** 2)), [5.0, 5.0], tol_opt=1e-14, max_eval=10)
    assert not res.converged
    assert res.reason == "max-eval"
    assert res.n_eval >= 10


def test_early_exit_aborts_with_best_point():
    def f(x):
        if x[0] > 1.2:
            raise EarlyExit("left trusted region", positions=(1,), gains=(1.0,), value=x[0])
        return float((x[0] - 3.0) ** 2)

    with pytest.raises(SimplexAborted) as info:
        nelder_mead(f, [1.0])
    exc = info.value
    assert exc.x_trigger[0] > 1.2
    assert exc.x_best[0] <= 1.2
    assert exc.f_best == pytest.approx((exc.x_best[0] - 3.0) ** 2)
    assert isinstance(exc.cause, EarlyExit)
    assert exc.cause.positions == (1,)


def test_rejects_bad_arguments():
    with pytest.raises(InvalidInputError):
        nelder_mead(lambda x: 0.0, [])
    with pytest.raises(InvalidInputError):
        nelder_mead(lambda x: 0.0, [1.0], tol_opt=0.0)
