import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.core.exceptions import InvalidInputError
from app.core.gramian import (
    controllability_factor, lower_block_factor, shuffle_diagonalize, structured_lyapunov,
)
from app.core.kernels import orthonormalize, projection_residual
from app.core.model import DamperConfig, damper_columns, full_damping, make_example_1, to_modal
from app.core.subspace import (
    ShiftSet, build_V0, build_VF, build_VH, enrich, h_correction, import_basis, lambda_solve,
    real_split, shifted_solve,
)


def _dense_solve(sys, cfg, s, rhs):
    K = s * s * np.eye(sys.n) + s * full_damping(sys, cfg) + np.diag(sys.omega ** 2)
    return np.linalg.solve(K, rhs.astype(complex))


def test_shifted_solve_matches_dense(random_modal, rng):
    sys = random_modal
    cfg = DamperConfig((3, 10), (2.5, 7.0))
    for s in (0.4 + 2.0j, 1.5 - 0.3j, 0.8):
        rhs = rng.standard_normal((sys.n, 2))
        assert_allclose(shifted_solve(sys, cfg, s, rhs), _dense_solve(sys, cfg, s, rhs), rtol=1e-9, atol=1e-12)


def test_shifted_solve_lies_in_two_term_span(random_modal, rng):
    sys = random_modal
    cfg = DamperConfig((4, 9), (1.0, 3.0))
    s = 0.7 + 1.3j
    b = rng.standard_normal(sys.m)
    rhs = (sys.Btil @ b).astype(complex)
    x = shifted_solve(sys, cfg, s, rhs)
    F = damper_columns(sys, cfg.positions).astype(complex)
    Q, _ = np.linalg.qr(np.column_stack([lambda_solve(sys, s, rhs), lambda_solve(sys, s, F)]))
    assert projection_residual(Q, x) < 1e-10


def test_h_correction_matches_woodbury_split(random_modal, rng):
    sys = random_modal
    cfg = DamperConfig((2, 6), (4.0, 0.5))
    s = 1.1 + 0.6j
    b = rng.standard_normal(sys.m)
    H = h_correction(sys, cfg, s, b)
    F = damper_columns(sys, cfg.positions).astype(complex)
    LB = lambda_solve(sys, s, sys.Btil @ b.astype(complex))
    assert H.shape == (2,)
    assert_allclose(LB - lambda_solve(sys, s, F) @ H, shifted_solve(sys, cfg, s, sys.Btil @ b), rtol=1e-10)


def test_shift_set_validation():
    shifts = ShiftSet(np.array([1.0 + 2.0j, 1.0 - 2.0j]), np.ones((1, 2)))
    assert len(shifts) == 2
    assert shifts.is_conjugate_closed()
    assert not ShiftSet(np.array([1.0 + 2.0j]), np.ones((1, 1))).is_conjugate_closed()
    with pytest.raises(InvalidInputError):
        ShiftSet(np.array([1.0, 2.0]), np.ones((1, 3)))
    with pytest.raises(InvalidInputError):
        ShiftSet(np.array([-1.0 + 1.0j]), np.ones((1, 1)))


def test_real_split():
    X = np.array([[1.0 + 2.0j, 3.0], [4.0 - 1.0j, 5.0]])
    out = real_split(X)
    assert out.shape == (2, 3)
    assert_allclose(out[:, 0], [1.0, 4.0])
    assert_allclose(out[:, 2], [2.0, -1.0])
    real = np.ones((3, 2))
    assert real_split(real) is real


def _position_gramian(sys, F):
    return structured_lyapunov(shuffle_diagonalize(sys.omega, sys.alpha), lower_block_factor(F)).X11


def test_build_V0_spans_gramian_factor(random_modal):
    sys = random_modal
    V0 = build_V0(sys, energy_tol=None)
    R = controllability_factor(sys, sys.Btil).R
    assert_allclose(V0.V.T @ V0.V, np.eye(V0.rank), atol=1e-12)
    assert max(projection_residual(V0.V, R[:, k]) for k in range(R.shape[1])) < 1e-8
    assert V0.events[-1].kind == "V0"


def test_build_V0_truncates_slowly_decaying_gramian():
    sys = to_modal(make_example_1(100))
    X11 = _position_gramian(sys, sys.Btil)
    V0 = build_V0(sys)
    assert V0.rank < 50
    assert build_V0(sys, energy_tol=None).rank > V0.rank
    assert np.trace(V0.V.T @ X11 @ V0.V) >= (1.0 - 1e-4) * np.trace(X11)
    assert V0.events[-1].kind == "V0"
    assert V0.events[-1].dimension == V0.rank


def test_build_VF(random_modal):
    sys = random_modal
    VF = build_VF(sys, [3, 8])
    R = controllability_factor(sys, damper_columns(sys, [3, 8])).R
    assert VF.rank >= 2
    assert_allclose(VF.V.T @ VF.V, np.eye(VF.rank), atol=1e-10)
    assert_allclose(VF.weighted @ VF.weighted.T, R @ R.T, atol=1e-10 * np.abs(R @ R.T).max())
    assert np.all(np.diff(VF.weights) <= 0)
    assert max(projection_residual(VF.V, R[:, k]) for k in range(R.shape[1])) < 1e-8
    assert VF.events[-1].kind == "VF"
    assert VF.events[-1].positions == (3, 8)
    assert build_VF(sys, []).is_empty


def test_build_VH_contains_correction_columns(random_modal):
    sys = random_modal
    cfg = DamperConfig((5, 11), (2.0, 8.0))
    shifts = ShiftSet(np.array([0.5 + 1.0j, 0.5 - 1.0j, 2.0]), np.ones((1, 3)))
    VH = build_VH(sys, cfg, shifts)
    F = damper_columns(sys, cfg.positions).astype(complex)
    for s in shifts.shifts:
        col = lambda_solve(sys, s, F) @ h_correction(sys, cfg, s, np.ones(1))
        assert projection_residual(VH.V, col.real) < 1e-8
        assert projection_residual(VH.V, col.imag) < 1e-8
    assert VH.events[-1].kind == "VH"


def test_enrich_never_shrinks(random_modal):
    sys = random_modal
    V0 = build_V0(sys)
    grown = enrich(V0, build_VF(sys, [2, 9]))
    assert grown.rank >= V0.rank
    assert_allclose(grown.V[:, : V0.rank], V0.V)
    assert_allclose(grown.V.T @ grown.V, np.eye(grown.rank), atol=1e-10)

    again = enrich(grown, grown)
    assert again.rank == grown.rank
    assert again.events[-1].columns_added == 0
    assert len(again.events) == len(grown.events) + 1


def test_enrich_ranks_weighted_columns_by_weight():
    sys = to_modal(make_example_1(100))
    V0 = build_V0(sys)
    VF = build_VF(sys, [20, 40])
    X11 = _position_gramian(sys, damper_columns(sys, [20, 40]))

    weighted = enrich(V0, VF, 3e-3)
    exact = enrich(V0, VF.unweighted(), 1e-10)
    assert weighted.rank < exact.rank
    assert weighted.rank < 50
    captured = np.trace(weighted.V.T @ X11 @ weighted.V)
    assert captured >= (1.0 - 1e-4) * np.trace(X11)


def test_enrich_rejects_mismatched_rows(random_modal, rng):
    V0 = build_V0(random_modal)
    with pytest.raises(InvalidInputError):
        enrich(V0, orthonormalize(rng.standard_normal((5, 2))))


def test_import_basis(random_modal, rng):
    sys = random_modal
    stored = rng.standard_normal((sys.n, 3))
    imported = import_basis(stored, sys.n)
    assert imported.rank == 3
    assert imported.events[0].kind == "import"
    assert max(projection_residual(imported.V, stored[:, k]) for k in range(3)) < 1e-10

    V0 = build_V0(sys)
    merged = import_basis(stored, sys.n, base=V0)
    assert_allclose(merged.V[:, : V0.rank], V0.V)

    with pytest.raises(InvalidInputError):
        import_basis(stored, sys.n + 1)
