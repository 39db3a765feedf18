"""
Reduced-basis construction
Shifted solves through the Woodbury identity, the initial basis V0 and the two
enrichment families V_F (Gramian of the damper geometry) and V_H (interpolation
directions at given shifts).
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple
import logging

import numpy as np

from app.core.exceptions import InvalidInputError, ResonanceError, SingularCoreError
from app.core.gramian import controllability_factor
from app.core.kernels import (
    EnrichmentEvent, OrthoBasis, orthogonal_complement_columns, orthonormalize,
)
from app.core.model import DamperConfig, ModalSystem, damper_columns

logger = logging.getLogger(__name__)

SINGULAR_CORE_CONDITION = 1e14


@dataclass(frozen=True)
class ShiftSet:
    """
    Interpolation shifts (right half-plane, closed under conjugation) and tangential
    input directions, one column per shift.
    """
    shifts: np.ndarray        # (N,) complex
    directions: np.ndarray    # (m, N) complex

    def __post_init__(self):
        shifts = np.asarray(self.shifts, dtype=complex).reshape(-1)
        directions = np.asarray(self.directions, dtype=complex)
        if directions.ndim == 1:
            directions = directions.reshape(-1, 1)
        if directions.shape[1] != shifts.size:
            raise InvalidInputError(f"{shifts.size} shifts but {directions.shape[1]} directions")
        if np.any(shifts.real <= 0.0):
            raise InvalidInputError("shifts must lie in the open right half-plane")
        object.__setattr__(self, "shifts", shifts)
        object.__setattr__(self, "directions", directions)

    def __len__(self) -> int:
        return self.shifts.size

    def is_conjugate_closed(self, rtol: float = 1e-8) -> bool:
        for s in self.shifts:
            if np.min(np.abs(self.shifts - np.conj(s))) > rtol * max(abs(s), 1.0):
                return False
        return True


# ==================== SHIFTED SOLVES ====================

def lambda_solve(sys: ModalSystem, s: complex, rhs: np.ndarray) -> np.ndarray:
    """
    Apply Lambda(s) = (s^2 I + 2 alpha s Omega + Omega^2)^{-1} to rhs.

    Raises:
        ResonanceError: s is an exact root of one of the diagonal entries
    """
    w = sys.omega
    denom = s * s + 2.0 * sys.alpha * w * s + w * w
    if np.any(denom == 0.0):
        raise ResonanceError(f"shift {s} hits a pole of the undamped system")
    rhs = np.asarray(rhs)
    if rhs.ndim == 1:
        return rhs / denom
    return rhs / denom[:, None]


def _woodbury_core(sys: ModalSystem, F: np.ndarray, gains: np.ndarray, s: complex) -> Tuple[np.ndarray, np.ndarray]:
    """Return Lambda(s) F~ and the l x l core (1/s) G^{-1} + F~^T Lambda(s) F~."""
    LF = lambda_solve(sys, s, F.astype(complex))
    core = np.diag(1.0 / (s * gains)) + F.T @ LF
    cond = np.linalg.cond(core)
    if not np.isfinite(cond) or cond > SINGULAR_CORE_CONDITION:
        raise SingularCoreError(f"Woodbury core singular at s={s}", cond)
    return LF, core


def h_correction(sys: ModalSystem, cfg: DamperConfig, s: complex, b: np.ndarray) -> np.ndarray:
    """
    H(s, b) = ((1/s) G^{-1} + F~^T Lambda F~)^{-1} F~^T Lambda B~ b.

    Returns:
        np.ndarray: complex vector of length l
    """
    F = damper_columns(sys, cfg.positions)
    gains = np.asarray(cfg.gains)
    LF, core = _woodbury_core(sys, F, gains, s)
    LB = lambda_solve(sys, s, sys.Btil @ np.asarray(b, dtype=complex))
    return np.linalg.solve(core, F.T @ LB)


def shifted_solve(sys: ModalSystem, cfg: DamperConfig, s: complex, rhs: np.ndarray) -> np.ndarray:
    """
    Solve (s^2 I + s D~(c, g) + Omega^2) x = rhs in O(n l) after the l x l core solve.

    x = Lambda rhs - Lambda F~ (core^{-1} F~^T Lambda rhs).
    """
    rhs = np.asarray(rhs, dtype=complex)
    Lr = lambda_solve(sys, s, rhs)
    if cfg.ell == 0:
        return Lr
    F = damper_columns(sys, cfg.positions)
    LF, core = _woodbury_core(sys, F, np.asarray(cfg.gains), s)
    return Lr - LF @ np.linalg.solve(core, F.T @ Lr)


def real_split(X: np.ndarray) -> np.ndarray:
    """Real and imaginary parts of complex columns side by side (zero parts dropped)."""
    X = np.asarray(X)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if not np.iscomplexobj(X):
        return X
    parts = [X.real]
    imag = X.imag
    keep = np.linalg.norm(imag, axis=0) > 0.0
    if np.any(keep):
        parts.append(imag[:, keep])
    return np.hstack(parts)


# ==================== BASES ====================

def build_V0(
    sys: ModalSystem,
    drop_tol: float = 1e-10,
    gramian_drop_tol: float = 1e-12,
    energy_tol: Optional[float] = 1e-4,
) -> OrthoBasis:
    """
    Initial basis: orthonormalized Gramian factor of the undamped system for B~.

    The factor keeps the leading eigenvectors of X11 until the discarded eigenvalues
    fall below energy_tol * trace(X11); energy_tol=None keeps every direction above
    gramian_drop_tol.
    """
    R = controllability_factor(sys, sys.Btil, drop_tol=gramian_drop_tol, energy_tol=energy_tol).R
    if R.shape[1] == 0:
        raise InvalidInputError("input matrix produces an empty controllability factor")
    basis = orthonormalize(R, drop_tol)
    logger.info(f"V0: dimension {basis.rank} of n={sys.n}")
    return basis.with_event(EnrichmentEvent("V0", columns_added=basis.rank, dimension=basis.rank))


def build_VF(sys: ModalSystem, positions: Sequence[int], gramian_drop_tol: float = 1e-12) -> OrthoBasis:
    """
    Damper-geometry basis: eigenvectors of the undamped position Gramian for F~(c),
    weighted by the square roots of their eigenvalues.
    """
    F = damper_columns(sys, positions)
    if F.shape[1] == 0:
        return OrthoBasis(np.zeros((sys.n, 0)))
    R = controllability_factor(sys, F, drop_tol=gramian_drop_tol).R
    if R.shape[1] == 0:
        return OrthoBasis(np.zeros((sys.n, 0)))
    weights = np.linalg.norm(R, axis=0)
    event = EnrichmentEvent("VF", tuple(positions), (), R.shape[1], R.shape[1])
    return OrthoBasis(R / weights, (event,), weights)


def build_VH(sys: ModalSystem, cfg: DamperConfig, shifts: ShiftSet, drop_tol: float = 1e-10) -> OrthoBasis:
    """
    Interpolation-correction basis: columns Lambda(s_i) F~ H(s_i, b_i) for each shift,
    split into real and imaginary parts.
    """
    if cfg.ell == 0 or len(shifts) == 0:
        return OrthoBasis(np.zeros((sys.n, 0)))
    F = damper_columns(sys, cfg.positions)
    gains = np.asarray(cfg.gains)
    cols = []
    for s, b in zip(shifts.shifts, shifts.directions.T):
        LF, core = _woodbury_core(sys, F, gains, s)
        LB = lambda_solve(sys, s, sys.Btil @ b)
        H = np.linalg.solve(core, F.T @ LB)
        cols.append(LF @ H)
    basis = orthonormalize(real_split(np.column_stack(cols)), drop_tol)
    return basis.with_event(EnrichmentEvent("VH", cfg.positions, cfg.gains, basis.rank, basis.rank))


def enrich(basis: OrthoBasis, addition: OrthoBasis, drop_tol: float = 1e-10) -> OrthoBasis:
    """
    Orthonormal basis of span(V) + span(addition), never shrinking V.

    Weighted additions are ranked by their scaled columns, so a direction is kept only
    while its weighted residual exceeds drop_tol times the largest weight. The log gains
    one event describing the addition; columns already in span(V) contribute nothing.
    """
    if addition.n != basis.n:
        raise InvalidInputError(f"basis dimensions differ: {basis.n} vs {addition.n}")
    new = orthogonal_complement_columns(basis.V, addition.weighted, drop_tol)
    V = np.hstack([basis.V, new]) if new.shape[1] else basis.V
    last = addition.events[-1] if addition.events else EnrichmentEvent("orth")
    event = EnrichmentEvent(last.kind, last.positions, last.gains, new.shape[1], V.shape[1])
    logger.info(f"enrich {event.kind} at {list(event.positions)}: +{event.columns_added} -> {event.dimension}")
    return OrthoBasis(V, basis.events + (event,))


def import_basis(V: np.ndarray, n: int, drop_tol: float = 1e-10, base: Optional[OrthoBasis] = None) -> OrthoBasis:
    """
    Warm-start basis from a stored column block (re-orthonormalized).
    """
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[0] != n:
        raise InvalidInputError(f"stored basis has shape {V.shape}, expected ({n}, r)")
    added = orthonormalize(V, drop_tol).with_event(EnrichmentEvent("import"))
    if base is None:
        return OrthoBasis(added.V, (EnrichmentEvent("import", columns_added=added.rank, dimension=added.rank),))
    return enrich(base, added, drop_tol)
