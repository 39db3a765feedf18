import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.core.exceptions import InvalidInputError, RankError
from app.core.gramian import (
    balanced_truncation_fixed, controllability_factor, lower_block_factor, observability_factor,
    position_gramian_trace, shuffle_diagonalize, structured_lyapunov, undamped_operator,
)
from app.core.kernels import dense_lyapunov, kronecker_lyapunov
from app.core.model import DamperConfig, damper_columns


@pytest.mark.parametrize("alpha", [0.005, 0.1, 0.5])
def test_structured_lyapunov_matches_kronecker(rng, alpha):
    for n in (1, 20, *rng.integers(2, 20, size=15)):
        omega = np.sort(rng.uniform(0.5, 5.0, n))
        G = lower_block_factor(rng.standard_normal((n, 2)))
        X = structured_lyapunov(shuffle_diagonalize(omega, alpha), G).full()
        ref = kronecker_lyapunov(undamped_operator(omega, alpha), G)
        assert np.linalg.norm(X - ref) <= 1e-10 * np.linalg.norm(ref)


def test_structured_lyapunov_transpose_equation(rng):
    n, alpha = 6, 0.05
    omega = np.sort(rng.uniform(0.5, 5.0, n))
    G = rng.standard_normal((2 * n, 2))
    X = structured_lyapunov(shuffle_diagonalize(omega, alpha), G, transpose=True).full()
    ref = kronecker_lyapunov(undamped_operator(omega, alpha).T, G)
    assert np.linalg.norm(X - ref) <= 1e-10 * np.linalg.norm(ref)


def test_structured_lyapunov_rejects_wrong_rows():
    diag = shuffle_diagonalize(np.array([1.0, 2.0]), 0.1)
    with pytest.raises(InvalidInputError):
        structured_lyapunov(diag, np.ones((3, 1)))


def test_shuffle_diagonalize_eigenvalues():
    diag = shuffle_diagonalize(np.array([1.0, 3.0]), 0.2)
    A0 = undamped_operator(np.array([1.0, 3.0]), 0.2)
    ref = np.sort_complex(np.linalg.eigvals(A0))
    assert_allclose(np.sort_complex(diag.eigenvalues), ref, atol=1e-12)
    assert np.all(diag.eigenvalues.real < 0.0)


def test_shuffle_diagonalize_rejects_bad_parameters():
    with pytest.raises(InvalidInputError):
        shuffle_diagonalize(np.array([1.0]), 1.0)
    with pytest.raises(InvalidInputError):
        shuffle_diagonalize(np.array([1.0]), 0.0)
    with pytest.raises(InvalidInputError):
        shuffle_diagonalize(np.array([1.0, -2.0]), 0.1)


def test_block_identities(random_modal):
    sys = random_modal
    F = damper_columns(sys, [2, 5, 11])
    X = structured_lyapunov(shuffle_diagonalize(sys.omega, sys.alpha), lower_block_factor(F))
    W1 = np.diag(sys.omega)
    W2 = np.diag(sys.omega ** 2)
    scale = np.linalg.norm(X.X22)
    assert np.linalg.norm(X.X12 + X.X12.T) <= 1e-10 * scale
    assert np.linalg.norm(X.X22 - X.X11 @ W2 - 2.0 * sys.alpha * X.X12 @ W1) <= 1e-8 * scale
    third = W2 @ X.X12 + X.X12.T @ W2 + 2.0 * sys.alpha * (W1 @ X.X22 + X.X22 @ W1) - F @ F.T
    assert np.linalg.norm(third) <= 1e-8 * np.linalg.norm(F @ F.T)


def test_position_gramian_trace_closed_form(random_modal):
    sys = random_modal
    F = damper_columns(sys, [1, 7])
    X = dense_lyapunov(undamped_operator(sys.omega, sys.alpha), lower_block_factor(F))
    assert position_gramian_trace(sys.omega, sys.alpha, F) == pytest.approx(np.trace(X[: sys.n, : sys.n]), rel=1e-9)


def test_controllability_factor_reproduces_x11(random_modal):
    sys = random_modal
    factor = controllability_factor(sys, sys.Btil)
    X = structured_lyapunov(shuffle_diagonalize(sys.omega, sys.alpha), lower_block_factor(sys.Btil))
    assert factor.kind == "position-controllability"
    assert_allclose(factor.R @ factor.R.T, X.X11, atol=1e-10 * np.abs(X.X11).max())


def test_observability_factor_reproduces_q22(random_modal):
    sys = random_modal
    factor = observability_factor(sys)
    n = sys.n
    A0 = undamped_operator(sys.omega, sys.alpha)
    Q = dense_lyapunov(A0.T, np.vstack([sys.Ctil.T, np.zeros_like(sys.Ctil.T)]))
    assert factor.rank >= 1
    assert_allclose(factor.R @ factor.R.T, Q[n:, n:], atol=1e-8 * np.abs(Q[n:, n:]).max())


def test_balanced_truncation_biorthogonal(chain12):
    cfg = DamperConfig((3, 9), (5.0, 5.0))
    bt = balanced_truncation_fixed(chain12, cfg, 4)
    assert_allclose(bt.W.T @ bt.T, np.eye(4), atol=1e-8)
    assert bt.model.order == 4
    assert np.all(np.diff(bt.hsv) <= 0.0)


def test_balanced_truncation_order_checks(chain12):
    cfg = DamperConfig((3, 9), (5.0, 5.0))
    with pytest.raises(RankError):
        balanced_truncation_fixed(chain12, cfg, 2 * chain12.n)
    with pytest.raises(InvalidInputError):
        balanced_truncation_fixed(chain12, cfg, 0)
