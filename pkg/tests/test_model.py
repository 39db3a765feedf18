import numpy as np
import pytest
import scipy.integrate
from numpy.testing import assert_allclose

from app.core.exceptions import InvalidInputError, NotPositiveDefiniteError
from app.core.gramian import system_response
from app.core.model import (
    DamperConfig, PhysicalSystem, damper_columns, full_damping, internal_damping, make_example_1,
    make_example_2, make_random_system, modal_model, physical_model, scaled_index, to_modal,
    validate_positions,
)


def test_damper_config_validation():
    cfg = DamperConfig((3, 7), (10.0, 20.0))
    assert cfg.ell == 2
    assert len(cfg.gain_bounds) == 2
    with pytest.raises(InvalidInputError):
        DamperConfig((3, 3), (1.0, 1.0))
    with pytest.raises(InvalidInputError):
        DamperConfig((0, 2), (1.0, 1.0))
    with pytest.raises(InvalidInputError):
        DamperConfig((1, 2), (1.0, -1.0))
    with pytest.raises(InvalidInputError):
        DamperConfig((1,), (1.0, 2.0))
    with pytest.raises(InvalidInputError):
        DamperConfig((1,), (1e7,), ((1e-3, 1e6),))


def test_validate_positions():
    assert validate_positions([1, 5], 5).tolist() == [0, 4]
    with pytest.raises(InvalidInputError):
        validate_positions([6], 5)
    with pytest.raises(InvalidInputError):
        validate_positions([2, 2], 5)


def test_example_1_structure():
    phys = make_example_1(10)
    assert phys.n == 10
    assert_allclose(np.diag(phys.M)[:5], np.logspace(-1, 1, 5))
    assert_allclose(np.diag(phys.M)[5:], np.logspace(-1, 1, 5)[::-1])
    assert phys.K[0, 0] == 24.0 and phys.K[-1, -1] == 20.0 and phys.K[3, 3] == 40.0
    assert phys.K[3, 4] == -20.0
    assert phys.B.shape == (10, 1)
    assert phys.C.shape == (3, 10)
    assert phys.label == "example1-n10"


def test_example_1_rejects_odd_n():
    with pytest.raises(InvalidInputError):
        make_example_1(11)


def test_example_1_index_placement_matches_reference_size():
    phys = make_example_1(1000)
    assert np.flatnonzero(phys.B[:, 0]).tolist() == [0, 499, 999]
    assert [int(np.flatnonzero(row)[0]) + 1 for row in phys.C] == [10, 500, 990]


def test_example_2_structure():
    phys = make_example_2(4)
    n = 13
    assert phys.n == n
    assert phys.K[n - 1, n - 1] == 55.0
    assert phys.K[3, n - 1] == 20.0 and phys.K[7, n - 1] == 10.0 and phys.K[11, n - 1] == 5.0
    assert phys.K[4, 4] == 20.0 and phys.K[4, 5] == -10.0
    assert_allclose(phys.B, np.ones((n, 1)))
    masses = np.diag(phys.M)
    assert masses[0] == pytest.approx(1e3) and masses.max() == pytest.approx(1e5)


def test_example_2_reference_outputs():
    phys = make_example_2(300)
    assert phys.n == 901
    assert [int(np.flatnonzero(row)[0]) + 1 for row in phys.C] == [10, 450, 891]


def test_scaled_index():
    assert scaled_index(500, 1000, 100) == 50
    assert scaled_index(10, 1000, 100) == 1
    assert scaled_index(990, 1000, 100) == 99
    assert scaled_index(10, 1000, 10) == 1
    assert scaled_index(25, 1000, 100) == 3


def test_to_modal_diagonalizes():
    phys = make_example_1(12)
    modal = to_modal(phys)
    assert_allclose(modal.Phi.T @ phys.M @ modal.Phi, np.eye(12), atol=1e-10)
    assert_allclose(modal.Phi.T @ phys.K @ modal.Phi, np.diag(modal.omega ** 2), atol=1e-9)
    assert np.all(np.diff(modal.omega) >= 0)


def test_modal_and_physical_transfer_agree():
    phys = make_example_1(12)
    modal = to_modal(phys)
    cfg = DamperConfig((3, 8), (4.0, 9.0))
    G_modal = modal_model(modal, cfg)
    G_phys = physical_model(phys, modal, cfg)
    for s in (0.3 + 1.0j, 1.5 - 0.2j, 2.0):
        assert_allclose(G_modal.transfer(s), G_phys.transfer(s), rtol=1e-8, atol=1e-12)


def test_internal_damping_is_critical_multiple():
    phys = make_example_1(8)
    modal = to_modal(phys)
    D = internal_damping(phys, modal)
    assert_allclose(modal.Phi.T @ D @ modal.Phi, np.diag(2.0 * modal.alpha * modal.omega), atol=1e-10)


def test_damper_columns_grounded(chain12):
    F = damper_columns(chain12, [2, 9])
    assert_allclose(F[:, 0], chain12.Phi[1, :])
    assert_allclose(F[:, 1], chain12.Phi[8, :])
    D = full_damping(chain12, DamperConfig((2, 9), (3.0, 5.0)))
    assert_allclose(D, D.T)


def test_column_provider_relative_damper():
    phys = make_example_1(6)

    def between(idx, n):
        F = np.zeros((n, idx.size))
        for j, k in enumerate(idx):
            F[k, j] = 1.0
            if k + 1 < n:
                F[k + 1, j] = -1.0
        return F

    phys = PhysicalSystem(phys.M, phys.K, phys.B, phys.C, phys.alpha, column_provider=between)
    modal = to_modal(phys)
    F = damper_columns(modal, [2])
    assert_allclose(F[:, 0], modal.Phi[1, :] - modal.Phi[2, :])


def test_physical_system_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        PhysicalSystem(np.eye(2), np.eye(3), np.ones((2, 1)), np.ones((1, 2)), 0.01)
    with pytest.raises(InvalidInputError):
        PhysicalSystem(np.eye(2), np.eye(2), np.ones((2, 1)), np.ones((1, 2)), 0.0)
    phys = PhysicalSystem(np.eye(2), -np.eye(2), np.ones((2, 1)), np.ones((1, 2)), 0.01)
    with pytest.raises(NotPositiveDefiniteError):
        to_modal(phys)


def test_h2_norm_matches_modal_response(chain12):
    cfg = DamperConfig((4, 10), (2.0, 6.0))
    assert modal_model(chain12, cfg).h2_norm() == pytest.approx(system_response(chain12, cfg), rel=1e-8)


def test_h2_norm_matches_frequency_quadrature(rng):
    sys = make_random_system(4, rng, alpha=0.2)
    model = modal_model(sys, DamperConfig((1, 3), (0.5, 2.0)))
    theta = np.linspace(-np.pi / 2, np.pi / 2, 40001)[1:-1]
    s = 1j * np.tan(theta)[:, None, None]
    X = np.linalg.solve(s * s * model.M + s * model.D + model.K, np.broadcast_to(model.B, (theta.size, 4, 1)))
    G = model.C @ X
    integrand = np.sum(np.abs(G) ** 2, axis=(1, 2)) / np.cos(theta) ** 2
    quad = np.sqrt(scipy.integrate.trapezoid(integrand, theta) / (2.0 * np.pi))
    assert model.h2_norm() == pytest.approx(quad, rel=1e-4)
