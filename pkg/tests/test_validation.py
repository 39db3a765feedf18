import numpy as np
import pytest

from app.services import validation_service
from app.services.validation_service import CHECKS, ValidationService


@pytest.fixture(scope="module")
def summary():
    return ValidationService.validate(seed=0)


def test_every_property_passes(summary):
    failed = [(p.name, p.value, p.error) for p in summary.properties if not p.passed]
    assert summary.passed, failed
    assert [p.name for p in summary.properties] == [name for name, _, _ in CHECKS]


@pytest.mark.parametrize("name,check,threshold", CHECKS, ids=[c[0] for c in CHECKS])
def test_property_with_other_seed(name, check, threshold):
    assert check(np.random.default_rng(7)) <= threshold


def test_sign_error_in_indicator_is_caught(monkeypatch):
    original = validation_service.delta
    monkeypatch.setattr(validation_service, "delta", lambda ctx, sys, pos: -original(ctx, sys, pos))
    result = ValidationService.run_check(
        "indicator-dense-trace", validation_service.check_delta, 1e-8, np.random.default_rng(0),
    )
    assert not result.passed
    assert result.value > 1e-8


def test_raising_check_is_reported():
    def broken(rng):
        raise RuntimeError("boom")

    result = ValidationService.run_check("broken", broken, 1.0, np.random.default_rng(0))
    assert not result.passed
    assert result.value is None
    assert result.error == "RuntimeError: boom"


def test_non_finite_check_is_reported():
    result = ValidationService.run_check("nan", lambda rng: float("nan"), 1.0, np.random.default_rng(0))
    assert not result.passed
    assert result.error == "non-finite discrepancy"


def test_structured_lyapunov_check_sample(monkeypatch):
    orders, alphas = [], []
    kron = validation_service.kronecker_lyapunov
    diag = validation_service.shuffle_diagonalize

    def kron_spy(A, G):
        orders.append(A.shape[0] // 2)
        return kron(A, G)

    def diag_spy(omega, alpha):
        alphas.append(alpha)
        return diag(omega, alpha)

    monkeypatch.setattr(validation_service, "kronecker_lyapunov", kron_spy)
    monkeypatch.setattr(validation_service, "shuffle_diagonalize", diag_spy)
    validation_service.check_structured_lyapunov(np.random.default_rng(0))
    assert len(orders) == 50
    assert max(orders) <= 20
    assert {alphas.count(a) for a in (0.005, 0.1, 0.5)} <= {16, 17}


def test_shifted_solve_check_sample(monkeypatch):
    sizes = []
    solve = validation_service.shifted_solve

    def spy(sys, cfg, s, rhs):
        sizes.append(sys.n)
        return solve(sys, cfg, s, rhs)

    monkeypatch.setattr(validation_service, "shifted_solve", spy)
    validation_service.check_shifted_solve(np.random.default_rng(0))
    assert sizes == [40] * 50
