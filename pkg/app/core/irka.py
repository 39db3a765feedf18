"""
Structure-preserving IRKA (one-sided)
Iterates interpolation shifts for the damped modal system until they reproduce
themselves as mirrored poles of an order-r first-order IRKA reduction of the
projected second-order model.
"""

from dataclasses import dataclass, field
from typing import List, Optional
import logging

import numpy as np
import scipy.linalg

from app.core.exceptions import InvalidInputError, StabilityError
from app.core.kernels import OrthoBasis, orthonormalize, svd
from app.core.model import DamperConfig, ModalSystem, SecondOrderModel, damper_columns
from app.core.subspace import ShiftSet, real_split, shifted_solve

logger = logging.getLogger(__name__)

DEFECTIVE_CONDITION = 1e12


@dataclass(frozen=True)
class IrkaState:
    shifts: ShiftSet
    iteration: int
    shift_change: float
    converged: bool


@dataclass(frozen=True)
class IrkaResult:
    state: IrkaState
    basis: OrthoBasis
    model: SecondOrderModel
    history: List[float] = field(default_factory=list)


def initial_shifts(sys: ModalSystem, r: int) -> ShiftSet:
    """
    r real shifts log-spaced over the eigenfrequency range; tangential directions cycle
    through the right singular vectors of B~.
    """
    if r < 1:
        raise InvalidInputError(f"shift count must be positive, got {r}")
    lo, hi = float(sys.omega.min()), float(sys.omega.max())
    shifts = np.logspace(np.log10(lo), np.log10(hi), r) if hi > lo else np.full(r, lo)
    _, _, X = svd(sys.Btil)
    dirs = np.column_stack([X[:, k % X.shape[1]] for k in range(r)])
    return ShiftSet(shifts.astype(complex), dirs.astype(complex))


def hausdorff_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Hausdorff distance between two finite sets in the complex plane."""
    if a.size == 0 or b.size == 0:
        return float("inf")
    d = np.abs(a[:, None] - b[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def interpolation_basis(sys: ModalSystem, cfg: DamperConfig, shifts: ShiftSet, drop_tol: float = 1e-10) -> OrthoBasis:
    """Real orthonormal basis of the shifted solves (s_i^2 I + s_i D~ + Omega^2)^{-1} B~ b_i."""
    cols = [shifted_solve(sys, cfg, s, sys.Btil @ b) for s, b in zip(shifts.shifts, shifts.directions.T)]
    return orthonormalize(real_split(np.column_stack(cols)), drop_tol)


def reduce_modal(sys: ModalSystem, cfg: DamperConfig, W: np.ndarray) -> SecondOrderModel:
    """
    One-sided projection of the damped modal system onto span(W) (W orthonormal).
    """
    F = damper_columns(sys, cfg.positions)
    WF = W.T @ F
    D = 2.0 * sys.alpha * (W.T @ (sys.omega[:, None] * W)) + (WF * np.asarray(cfg.gains)) @ WF.T
    K = W.T @ (sys.omega[:, None] ** 2 * W)
    r = W.shape[1]
    return SecondOrderModel(
        M=np.eye(r),
        D=0.5 * (D + D.T),
        K=0.5 * (K + K.T),
        B=W.T @ sys.Btil,
        C=sys.Ctil @ W,
    )


def _check_spd(model: SecondOrderModel) -> None:
    for name, A in (("K_r", model.K), ("D_r", model.D)):
        try:
            scipy.linalg.cholesky(A, lower=True)
        except np.linalg.LinAlgError as exc:
            raise StabilityError(f"reduced {name} lost positive definiteness") from exc


def _pole_residues(A: np.ndarray, B: np.ndarray, C: np.ndarray, seed: int = 0):
    """Poles of (A, B, C) with residue factors: rows of X^{-1} B and columns of C X."""
    lam, X = scipy.linalg.eig(A)
    if np.linalg.cond(X) > DEFECTIVE_CONDITION:
        rng = np.random.default_rng(seed)
        A = A + 1e-10 * np.linalg.norm(A) * rng.standard_normal(A.shape)
        lam, X = scipy.linalg.eig(A)
        if np.linalg.cond(X) > DEFECTIVE_CONDITION:
            raise StabilityError("reduced first-order matrix is numerically defective")
    b = np.linalg.solve(X, B.astype(complex))
    c = C @ X
    return lam, b, c


def _dominant(lam: np.ndarray, b: np.ndarray, c: np.ndarray, r: int) -> List[int]:
    """Indices of the r poles with largest |c_k| |b_k|, conjugate partners included."""
    dominance = np.linalg.norm(c, axis=0) * np.linalg.norm(b, axis=1)
    scale = np.abs(lam).max(initial=1.0)
    groups = []
    for k in range(lam.size):
        if lam[k].imag < -1e-12 * scale:
            continue
        if lam[k].imag > 1e-12 * scale:
            partner = int(np.argmin(np.abs(lam - np.conj(lam[k]))))
            groups.append((dominance[k], [k, partner]))
        else:
            groups.append((dominance[k], [k]))
    groups.sort(key=lambda g: -g[0])

    chosen: List[int] = []
    for _, ks in groups:
        if len(chosen) >= r:
            break
        chosen.extend(ks)
    return chosen


def _mirror(lam: np.ndarray) -> np.ndarray:
    shifts = -lam
    return np.abs(shifts.real) + 1j * shifts.imag


def _tangential_basis(A: np.ndarray, B: np.ndarray, shifts: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    I = np.eye(A.shape[0])
    cols = [np.linalg.solve(s * I - A, B @ d) for s, d in zip(shifts, dirs.T)]
    return orthonormalize(real_split(np.column_stack(cols))).V


def fo_irka_update(
    model: SecondOrderModel,
    r: int,
    start: Optional[ShiftSet] = None,
    max_iter: int = 100,
    shift_tol: float = 1e-8,
    seed: int = 0,
) -> ShiftSet:
    """
    New shifts from an order-r H2 approximation of the first-order realization of a reduced model.

    The realization is cut down by a two-sided first-order IRKA started at `start`, or at
    the r most dominant poles (by |c_k| |b_k|, conjugate partners included) when no start
    is given. The approximation has as many poles as the start set; the returned shifts are
    those poles mirrored into the right half-plane, with right directions from their residues.
    When not even one step can be taken the mirrored dominant poles are returned instead.
    """
    A, B, C = model.first_order()
    lam, b, c = _pole_residues(A, B, C, seed)
    chosen = _dominant(lam, b, c, min(len(start) if start is not None else r, A.shape[0]))
    fallback = ShiftSet(_mirror(lam[chosen]), b[chosen, :].T)
    if start is None:
        shifts, right, left = fallback.shifts, fallback.directions, c[:, chosen]
    else:
        U, _, _ = svd(C)
        shifts, right = start.shifts, start.directions
        left = np.tile(U[:, :1], (1, len(start))).astype(complex)

    steps = 0
    for it in range(1, max_iter + 1):
        V = _tangential_basis(A, B, shifts, right)
        W = _tangential_basis(A.T, C.T, shifts, left)
        if V.shape[1] != shifts.size or W.shape[1] != shifts.size:
            logger.debug(f"first-order IRKA stopped at iteration {it}: projection bases lost rank")
            break
        try:
            E = W.T @ V
            Ar = np.linalg.solve(E, W.T @ A @ V)
            Br = np.linalg.solve(E, W.T @ B)
            lam, b, c = _pole_residues(Ar, Br, C @ V, seed)
        except (np.linalg.LinAlgError, StabilityError) as exc:
            logger.debug(f"first-order IRKA stopped at iteration {it}: {exc}")
            break
        new = _mirror(lam)
        change = hausdorff_distance(shifts, new) / np.abs(new).max(initial=1.0)
        shifts, right, left = new, b.T, c
        steps = it
        if change <= shift_tol:
            break

    if steps == 0:
        shifts, right = fallback.shifts, fallback.directions
    order = np.lexsort((shifts.imag, shifts.real))
    return ShiftSet(shifts[order], right[:, order])


def sym2irka(
    sys: ModalSystem,
    cfg: DamperConfig,
    r: int,
    max_iter: int = 50,
    shift_tol: float = 1e-4,
    start: Optional[ShiftSet] = None,
    drop_tol: float = 1e-10,
    seed: int = 0,
) -> IrkaResult:
    """
    Run the one-sided structure-preserving IRKA for the system damped at cfg.

    Args:
        sys: modal system
        cfg: damper configuration held fixed during the iteration
        r: number of shifts
        max_iter: iteration cap
        shift_tol: relative Hausdorff change of the shift set that counts as converged
        start: initial shifts; log-spaced over the eigenfrequencies when omitted

    Returns:
        IrkaResult; when max_iter is hit the iterate with the smallest shift change is
        returned with converged=False
    """
    if max_iter < 1:
        raise InvalidInputError(f"max_iter must be positive, got {max_iter}")
    r = min(r, sys.n)
    shifts = start if start is not None else initial_shifts(sys, r)
    history: List[float] = []
    best: Optional[IrkaResult] = None

    for it in range(1, max_iter + 1):
        basis = interpolation_basis(sys, cfg, shifts, drop_tol)
        model = reduce_modal(sys, cfg, basis.V)
        _check_spd(model)

        new = fo_irka_update(model, r, start=shifts, shift_tol=1e-2 * shift_tol, seed=seed)
        change = hausdorff_distance(shifts.shifts, new.shifts) / np.abs(new.shifts).max(initial=1.0)
        history.append(change)
        logger.debug(f"IRKA iteration {it}: {len(shifts)} shifts, relative change {change:.3e}")

        converged = change <= shift_tol
        result = IrkaResult(IrkaState(shifts, it, change, converged), basis, model, list(history))
        if converged:
            logger.info(f"IRKA converged after {it} iterations (dimension {basis.rank})")
            return result
        if best is None or change < best.state.shift_change:
            best = result
        shifts = new

    logger.warning(f"IRKA stopped after {max_iter} iterations without converging")
    return IrkaResult(best.state, best.basis, best.model, history)
