"""
Error indicator for the reduced position Gramian
Delta(c) = trace(X11(c)) - trace(V Y11(c) V^T), evaluated from a 2r x 2r Lyapunov solve
and the projected blocks V^T Omega^k V prepared once per basis.
"""

from dataclasses import dataclass
from typing import Sequence
import logging

import numpy as np

from app.core.exceptions import InvalidInputError
from app.core.kernels import OrthoBasis, dense_lyapunov, trace_product
from app.core.model import ModalSystem, damper_columns, validate_positions

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IndicatorContext:
    """
    Per-basis quantities shared by the indicator and the reduced objective.

    Rebuilt whenever the basis changes.
    """
    basis: OrthoBasis
    alpha: float
    omega: np.ndarray
    VtOmV: np.ndarray         # V^T Omega V
    VtOm2V: np.ndarray        # V^T Omega^2 V
    VtOmInvV: np.ndarray      # V^T Omega^-1 V
    VtOmInv2V: np.ndarray     # V^T Omega^-2 V
    PhiV: np.ndarray          # Phi V, rows give V^T F~ for grounded dampers
    A0V: np.ndarray           # reduced undamped first-order operator
    Br: np.ndarray
    Cr: np.ndarray

    @property
    def rank(self) -> int:
        return self.basis.rank


@dataclass(frozen=True)
class DeltaTerms:
    delta: float
    trace_y11: float

    @property
    def relative(self) -> float:
        if self.trace_y11 > 0.0:
            return self.delta / self.trace_y11
        return 0.0 if self.delta == 0.0 else float("inf")


def _projected(V: np.ndarray, weights: np.ndarray) -> np.ndarray:
    P = V.T @ (weights[:, None] * V)
    return 0.5 * (P + P.T)


def build_indicator_context(sys: ModalSystem, basis: OrthoBasis) -> IndicatorContext:
    """
    Precompute V^T Omega^k V for k in {1, 2, -1, -2}, Phi V and the reduced operator.
    """
    if basis.n != sys.n:
        raise InvalidInputError(f"basis has {basis.n} rows, system has n={sys.n}")
    if basis.is_empty:
        raise InvalidInputError("indicator needs a nonempty basis")
    V = basis.V
    w = sys.omega
    r = V.shape[1]
    VtOmV = _projected(V, w)
    VtOm2V = _projected(V, w * w)
    A0V = np.block([[np.zeros((r, r)), np.eye(r)], [-VtOm2V, -2.0 * sys.alpha * VtOmV]])
    return IndicatorContext(
        basis=basis,
        alpha=sys.alpha,
        omega=sys.omega,
        VtOmV=VtOmV,
        VtOm2V=VtOm2V,
        VtOmInvV=_projected(V, 1.0 / w),
        VtOmInv2V=_projected(V, 1.0 / (w * w)),
        PhiV=sys.Phi @ V,
        A0V=A0V,
        Br=V.T @ sys.Btil,
        Cr=sys.Ctil @ V,
    )


def projected_damper_columns(ctx: IndicatorContext, sys: ModalSystem, positions: Sequence[int]) -> np.ndarray:
    """V^T F~(c) (r x l) without touching n-length vectors for grounded dampers."""
    if sys.column_provider is None:
        idx = validate_positions(positions, sys.n)
        return ctx.PhiV[idx, :].T
    return ctx.basis.V.T @ damper_columns(sys, positions)


def delta_terms(ctx: IndicatorContext, sys: ModalSystem, positions: Sequence[int]) -> DeltaTerms:
    """
    Indicator Delta(c) and trace(Y11) for the damper geometry at positions.

    Args:
        ctx: indicator context of the current basis
        sys: modal system
        positions: 1-based damper positions (l may be zero)

    Returns:
        DeltaTerms
    """
    if len(positions) == 0:
        return DeltaTerms(0.0, 0.0)

    r = ctx.rank
    FV = projected_damper_columns(ctx, sys, positions)
    Y = dense_lyapunov(ctx.A0V, np.vstack([np.zeros_like(FV), FV]), check_stability=False)
    Y11, Y12, Y22 = Y[:r, :r], Y[:r, r:], Y[r:, r:]

    alpha = ctx.alpha
    tr_y11 = float(np.trace(Y11))
    y12_inv = trace_product(Y12, ctx.VtOmInvV)
    y12t_inv = trace_product(Y12.T, ctx.VtOmInvV)
    y22_inv2 = trace_product(Y22, ctx.VtOmInv2V)

    F = damper_columns(sys, positions)
    tr_w3 = float(np.sum(np.sum(F * F, axis=1) / ctx.omega ** 3))

    tr_e2 = y22_inv2 - tr_y11 - 2.0 * alpha * y12_inv
    tr_e1 = y12_inv + y12t_inv
    tr_e3 = y12_inv + y12t_inv + 4.0 * alpha * y22_inv2 - tr_w3

    delta = tr_e2 + (tr_e1 - tr_e3) / (4.0 * alpha) + alpha * tr_e1
    return DeltaTerms(float(delta), tr_y11)


def delta(ctx: IndicatorContext, sys: ModalSystem, positions: Sequence[int]) -> float:
    """Delta(c) = trace(X11(c) - V Y11(c) V^T)."""
    return delta_terms(ctx, sys, positions).delta


def delta_rel(ctx: IndicatorContext, sys: ModalSystem, positions: Sequence[int]) -> float:
    """Delta(c) / trace(Y11(c))."""
    return delta_terms(ctx, sys, positions).relative
