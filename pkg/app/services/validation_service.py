"""
Validation Service - Oracle checks for the numerical core
Each property compares a fast structured computation with a dense brute-force one
on small random instances and reports the worst discrepancy.
"""

from typing import Callable, List, Tuple
import logging
import time

import numpy as np

from app.core.gramian import (
    first_order_matrices, lower_block_factor, position_gramian_trace, shuffle_diagonalize,
    structured_lyapunov, undamped_operator,
)
from app.core.indicator import build_indicator_context, delta
from app.core.irka import sym2irka
from app.core.kernels import dense_lyapunov, kronecker_lyapunov, orthonormalize, projection_residual, psd_factor
from app.core.model import (
    DamperConfig, ModalSystem, damper_columns, full_damping, make_example_1, make_random_system,
    modal_model, to_modal,
)
from app.core.objectives import (
    INTERPOLATED, ROUNDED, FullEvaluator, ObjectiveSpec, ReducedEvaluator,
    interpolated_position_objective, rounded_objective,
)
from app.core.subspace import lambda_solve, shifted_solve
from app.models.schemas import PropertyResult, ValidationSummary

logger = logging.getLogger(__name__)

Check = Callable[[np.random.Generator], float]

STRUCTURED_ALPHAS = (0.005, 0.1, 0.5)


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    nb = float(np.linalg.norm(b))
    return float(np.linalg.norm(a - b)) / (nb if nb > 0.0 else 1.0)


def _random_config(sys: ModalSystem, rng: np.random.Generator, ell: int = 2) -> DamperConfig:
    positions = rng.choice(np.arange(1, sys.n + 1), size=ell, replace=False)
    gains = rng.uniform(0.1, 10.0, size=ell)
    return DamperConfig.unbounded(positions.tolist(), gains.tolist())


# ==================== CHECKS ====================

def check_dense_lyapunov(rng: np.random.Generator) -> float:
    """Schur-based solve against the Kronecker-vectorized system."""
    worst = 0.0
    for _ in range(10):
        n = int(rng.integers(2, 11))
        A = rng.standard_normal((n, n))
        A -= (np.linalg.eigvals(A).real.max() + 1.0) * np.eye(n)
        G = rng.standard_normal((n, int(rng.integers(1, 3))))
        worst = max(worst, _rel(dense_lyapunov(A, G), kronecker_lyapunov(A, G)))
    return worst


def check_structured_lyapunov(rng: np.random.Generator) -> float:
    """Closed-form undamped solve against the Kronecker-vectorized system."""
    worst = 0.0
    for k in range(50):
        alpha = STRUCTURED_ALPHAS[k % len(STRUCTURED_ALPHAS)]
        n = int(rng.integers(1, 21))
        omega = np.sort(rng.uniform(0.5, 5.0, n))
        G = lower_block_factor(rng.standard_normal((n, 2)))
        X = structured_lyapunov(shuffle_diagonalize(omega, alpha), G).full()
        worst = max(worst, _rel(X, kronecker_lyapunov(undamped_operator(omega, alpha), G)))
    return worst


def check_shifted_solve(rng: np.random.Generator) -> float:
    """
    The damped resolvent applied to B~ b lies in span{Lambda B~ b, Lambda F~}, and the
    low-rank update reproduces the dense solve.
    """
    sys = make_random_system(40, rng)
    worst = 0.0
    for _ in range(50):
        cfg = _random_config(sys, rng)
        s = complex(rng.uniform(0.05, 3.0), rng.uniform(-6.0, 6.0))
        b = rng.standard_normal(sys.m)
        rhs = sys.Btil @ b
        K = s * s * np.eye(sys.n) + s * full_damping(sys, cfg) + np.diag(sys.omega ** 2)
        x = np.linalg.solve(K, rhs.astype(complex))

        F = damper_columns(sys, cfg.positions)
        span = np.column_stack([lambda_solve(sys, s, rhs.astype(complex)), lambda_solve(sys, s, F.astype(complex))])
        Q, _ = np.linalg.qr(span)
        worst = max(worst, projection_residual(Q, x), _rel(shifted_solve(sys, cfg, s, rhs), x))
    return worst


def check_block_identities(rng: np.random.Generator) -> float:
    """
    Blocks of A0 X + X A0^T = -[0; F~][0; F~]^T:
    X12 + X12^T = 0, X22 = X11 Omega^2 + 2 alpha X12 Omega and
    Omega^2 X12 + X12^T Omega^2 + 2 alpha (Omega X22 + X22 Omega) - F~ F~^T = 0.
    """
    sys = make_random_system(40, rng)
    F = damper_columns(sys, _random_config(sys, rng, ell=3).positions)
    X = structured_lyapunov(shuffle_diagonalize(sys.omega, sys.alpha), lower_block_factor(F))
    W2 = np.diag(sys.omega ** 2)
    W1 = np.diag(sys.omega)
    a = sys.alpha
    scale = max(np.linalg.norm(X.X22), np.linalg.norm(X.X11 @ W2), 1e-300)
    e1 = np.linalg.norm(X.X12 + X.X12.T) / scale
    e2 = np.linalg.norm(X.X22 - X.X11 @ W2 - 2.0 * a * X.X12 @ W1) / scale
    third = W2 @ X.X12 + X.X12.T @ W2 + 2.0 * a * (W1 @ X.X22 + X.X22 @ W1) - F @ F.T
    e3 = np.linalg.norm(third) / max(np.linalg.norm(F @ F.T), 1e-300)
    return float(max(e1, e2, e3))


def check_delta(rng: np.random.Generator) -> float:
    """Indicator against trace(X11) - trace(Y11) from two dense solves."""
    worst = 0.0
    for _ in range(8):
        sys = make_random_system(int(rng.integers(10, 41)), rng)
        positions = _random_config(sys, rng).positions
        basis = orthonormalize(rng.standard_normal((sys.n, int(rng.integers(3, sys.n // 2 + 1)))))
        ctx = build_indicator_context(sys, basis)

        F = damper_columns(sys, positions)
        X = dense_lyapunov(undamped_operator(sys.omega, sys.alpha), lower_block_factor(F))
        Y = dense_lyapunov(ctx.A0V, lower_block_factor(basis.V.T @ F))
        tr_x11 = float(np.trace(X[: sys.n, : sys.n]))
        reference = tr_x11 - float(np.trace(Y[: basis.rank, : basis.rank]))
        worst = max(
            worst,
            abs(delta(ctx, sys, positions) - reference) / tr_x11,
            abs(position_gramian_trace(sys.omega, sys.alpha, F) - tr_x11) / tr_x11,
        )
    return worst


def check_full_span(rng: np.random.Generator) -> float:
    """Projection onto the range of the exact position Gramian reproduces J."""
    sys = make_random_system(40, rng, p=2)
    cfg = _random_config(sys, rng)
    A, G, _ = first_order_matrices(sys, cfg)
    P = dense_lyapunov(A, G)
    basis = orthonormalize(psd_factor(P[: sys.n, : sys.n]))
    J = FullEvaluator(sys).response(cfg.positions, cfg.gains)
    Jr = ReducedEvaluator(sys, build_indicator_context(sys, basis)).response(cfg.positions, cfg.gains)
    return abs(Jr - J) / J


def check_interpolated_objective(rng: np.random.Generator) -> float:
    """
    Interpolated objective equals the rounded one on the integer grid of a 12-mass chain
    and is continuous across cell boundaries.
    """
    sys = to_modal(make_example_1(12))
    spec_kw = dict(n=sys.n, ell=2, fixed_gains=(5.0, 5.0), gain_bounds=((1e-3, 1e6),) * 2)
    rounded = ObjectiveSpec(position_objective=ROUNDED, **spec_kw)
    interp = ObjectiveSpec(position_objective=INTERPOLATED, **spec_kw)
    evaluator = FullEvaluator(sys)

    worst = 0.0
    for i in range(1, sys.n):
        for j in range(1, sys.n):
            if i == j:
                continue
            x = np.array([i, j], dtype=float)
            Jr = rounded_objective(evaluator, rounded, x)
            Ji = interpolated_position_objective(evaluator, interp, x)
            worst = max(worst, abs(Ji - Jr) / Jr)

    eps = 1e-11
    for _ in range(6):
        i, j = rng.choice(np.arange(2, sys.n - 1), size=2, replace=False)
        x = np.array([i, j], dtype=float)
        centre = interpolated_position_objective(evaluator, interp, x)
        for shift in (np.array([-eps, 0.0]), np.array([eps, 0.0]), np.array([0.0, -eps]), np.array([0.0, eps])):
            side = interpolated_position_objective(evaluator, interp, x + shift)
            worst = max(worst, abs(side - centre) / centre)
    return worst


def check_irka_interpolation(rng: np.random.Generator) -> float:
    """Right-tangential interpolation G(s_k) b_k = G_r(s_k) b_k at converged shifts."""
    sys = to_modal(make_example_1(30))
    cfg = DamperConfig.unbounded((8, 20), (2.0, 2.0))
    result = sym2irka(sys, cfg, 10, max_iter=30, seed=int(rng.integers(0, 2**31 - 1)))
    if not result.state.converged:
        logger.warning(f"IRKA did not converge (best change {result.state.shift_change:.3e})")
        return float("inf")
    full = modal_model(sys, cfg)
    worst = 0.0
    for s, b in zip(result.state.shifts.shifts, result.state.shifts.directions.T):
        worst = max(worst, _rel(result.model.transfer(s) @ b, full.transfer(s) @ b))
    return worst


CHECKS: List[Tuple[str, Check, float]] = [
    ("dense-lyapunov-kronecker", check_dense_lyapunov, 1e-10),
    ("structured-lyapunov-kronecker", check_structured_lyapunov, 1e-10),
    ("shifted-solve-span-and-woodbury", check_shifted_solve, 1e-8),
    ("gramian-block-identities", check_block_identities, 1e-8),
    ("indicator-dense-trace", check_delta, 1e-8),
    ("full-span-exactness", check_full_span, 1e-6),
    ("interpolated-vs-rounded-objective", check_interpolated_objective, 1e-10),
    ("irka-tangential-interpolation", check_irka_interpolation, 1e-6),
]


class ValidationService:
    """
    Runs the oracle suite and collects per-property results.
    """

    @staticmethod
    def run_check(name: str, check: Check, threshold: float, rng: np.random.Generator) -> PropertyResult:
        t0 = time.perf_counter()
        value, error = None, None
        try:
            value = float(check(rng))
            if not np.isfinite(value):
                value, error = None, "non-finite discrepancy"
        except Exception as e:
            logger.error(f"Property {name} raised: {str(e)}")
            error = f"{type(e).__name__}: {e}"
        elapsed = time.perf_counter() - t0
        passed = value is not None and value <= threshold
        shown = f"{value:.3e}" if value is not None else error
        level = logging.INFO if passed else logging.ERROR
        logger.log(level, f"{name}: {'PASS' if passed else 'FAIL'} ({shown}, threshold {threshold:.0e}) in {elapsed:.2f}s")
        return PropertyResult(
            name=name, passed=passed, value=value, threshold=threshold, seconds=elapsed, error=error,
        )

    @staticmethod
    def validate(seed: int = 0) -> ValidationSummary:
        """
        Run every property check with a generator seeded from seed.

        Returns:
            ValidationSummary: passed is True only when every property passes
        """
        rng = np.random.default_rng(seed)
        results = [ValidationService.run_check(name, check, tol, rng) for name, check, tol in CHECKS]
        return ValidationSummary(passed=all(r.passed for r in results), properties=results)
