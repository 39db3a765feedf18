"""
Structured Gramians
Closed-form Lyapunov solves for the undamped modal operator through the perfect-shuffle
block diagonalization, Gramian factors, the H2 response of the full model and
second-order balanced truncation.
"""

from dataclasses import dataclass
from typing import Optional
import logging
import math

import numpy as np

from app.core.exceptions import InvalidInputError, RankError, StabilityError
from app.core.kernels import dense_lyapunov, psd_factor, svd, symmetrize
from app.core.model import DamperConfig, ModalSystem, SecondOrderModel, full_damping

logger = logging.getLogger(__name__)


# ==================== SHUFFLE DIAGONALIZATION ====================

@dataclass(frozen=True)
class ShuffleDiagonalization:
    """
    Per-mode eigenvectors of the 2 x 2 blocks [[0, 1], [-w^2, -2 alpha w]].

    lam[j] holds (lambda_j+, lambda_j-); Psi[j] is [[1, 1], [lambda_j+, lambda_j-]].
    """
    omega: np.ndarray
    alpha: float
    lam: np.ndarray        # (n, 2) complex
    Psi: np.ndarray        # (n, 2, 2) complex
    Psi_inv: np.ndarray    # (n, 2, 2) complex

    @property
    def n(self) -> int:
        return self.omega.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        """All 2n eigenvalues of the undamped first-order operator."""
        return self.lam.reshape(-1)


def shuffle_diagonalize(omega: np.ndarray, alpha: float) -> ShuffleDiagonalization:
    """
    Diagonalize the undamped first-order operator blockwise.

    Args:
        omega: positive eigenfrequencies
        alpha: internal damping, strictly between 0 and 1

    Returns:
        ShuffleDiagonalization with lambda_j(+/-) = omega_j (-alpha +/- i sqrt(1 - alpha^2))
    """
    omega = np.asarray(omega, dtype=float)
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"structured solve needs 0 < alpha < 1, got {alpha}")
    if np.any(omega <= 0.0):
        raise InvalidInputError("eigenfrequencies must be positive")

    root = 1j * math.sqrt(1.0 - alpha * alpha)
    lp = omega * (-alpha + root)
    lm = omega * (-alpha - root)

    n = omega.shape[0]
    Psi = np.empty((n, 2, 2), dtype=complex)
    Psi[:, 0, 0] = 1.0
    Psi[:, 0, 1] = 1.0
    Psi[:, 1, 0] = lp
    Psi[:, 1, 1] = lm

    inv_det = 1.0 / (lm - lp)
    Psi_inv = np.empty((n, 2, 2), dtype=complex)
    Psi_inv[:, 0, 0] = lm * inv_det
    Psi_inv[:, 0, 1] = -inv_det
    Psi_inv[:, 1, 0] = -lp * inv_det
    Psi_inv[:, 1, 1] = inv_det

    return ShuffleDiagonalization(omega, alpha, np.stack([lp, lm], axis=1), Psi, Psi_inv)


# ==================== STRUCTURED LYAPUNOV ====================

@dataclass(frozen=True)
class StructuredGramian:
    """
    Solution of A0 X + X A0^T = -G G^T split into n x n blocks.

    X11 couples positions, X12 positions with velocities and X22 velocities.
    """
    X11: np.ndarray
    X12: np.ndarray
    X22: np.ndarray

    @property
    def n(self) -> int:
        return self.X11.shape[0]

    def full(self) -> np.ndarray:
        return np.block([[self.X11, self.X12], [self.X12.T, self.X22]])


def undamped_operator(omega: np.ndarray, alpha: float) -> np.ndarray:
    """Dense A0 = [[0, I], [-Omega^2, -2 alpha Omega]] (validation and small problems)."""
    n = omega.shape[0]
    return np.block([
        [np.zeros((n, n)), np.eye(n)],
        [np.diag(-omega ** 2), np.diag(-2.0 * alpha * omega)],
    ])


def structured_lyapunov(diag: ShuffleDiagonalization, G: np.ndarray, transpose: bool = False) -> StructuredGramian:
    """
    Solve A0 X + X A0^T = -G G^T without forming A0.

    After the perfect shuffle A0 = T Lambda T^{-1} with T block diagonal, so the
    diagonalized equation is solved entrywise and transformed back block by block.

    Args:
        diag: shuffle diagonalization of A0
        G: 2n x q real right-hand-side factor, position rows first
        transpose: solve A0^T X + X A0 = -G G^T instead

    Returns:
        StructuredGramian
    """
    n = diag.n
    if transpose:
        Psi = np.swapaxes(diag.Psi_inv, 1, 2)
        Psi_inv = np.swapaxes(diag.Psi, 1, 2)
    else:
        Psi, Psi_inv = diag.Psi, diag.Psi_inv
    G = np.asarray(G, dtype=float)
    if G.ndim == 1:
        G = G.reshape(-1, 1)
    if G.shape[0] != 2 * n:
        raise InvalidInputError(f"G has {G.shape[0]} rows, expected {2 * n}")

    # Shuffled row (j, a) is original row a * n + j.
    Gs = G.reshape(2, n, -1).transpose(1, 0, 2)
    Bd = np.einsum("jab,jbq->jaq", Psi_inv, Gs).reshape(2 * n, -1)

    lam = diag.eigenvalues
    XD = -(Bd @ Bd.conj().T) / (lam[:, None] + lam.conj()[None, :])

    Y = np.einsum(
        "iab,ibjd,jcd->iajc", Psi, XD.reshape(n, 2, n, 2), Psi.conj(), optimize=True,
    )
    imag = np.abs(Y.imag).max(initial=0.0)
    if imag > 1e-8 * max(np.abs(Y.real).max(initial=0.0), np.finfo(float).tiny):
        logger.warning(f"structured Lyapunov solve left imaginary part {imag:.3e}")
    Y = Y.real

    return StructuredGramian(
        X11=symmetrize(Y[:, 0, :, 0]),
        X12=np.ascontiguousarray(Y[:, 0, :, 1]),
        X22=symmetrize(Y[:, 1, :, 1]),
    )


def lower_block_factor(F: np.ndarray) -> np.ndarray:
    """Stack [0; F] so the factor enters the velocity equations only."""
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F.reshape(-1, 1)
    return np.vstack([np.zeros_like(F), F])


def position_gramian_trace(omega: np.ndarray, alpha: float, F: np.ndarray) -> float:
    """
    trace(X11) for the right-hand side [0; F] in closed form: sum_j |F_j|^2 / (4 alpha w_j^3).
    """
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F.reshape(-1, 1)
    return float(np.sum(np.sum(F * F, axis=1) / (4.0 * alpha * omega ** 3)))


# ==================== FACTORS ====================

@dataclass(frozen=True)
class GramianFactor:
    """Low-rank factor R with Gramian block ~= R R^T."""
    R: np.ndarray
    kind: str   # "position-controllability" | "velocity-observability"

    @property
    def rank(self) -> int:
        return self.R.shape[1]


def controllability_factor(
    sys: ModalSystem, F: np.ndarray, drop_tol: float = 1e-12, energy_tol: Optional[float] = None,
) -> GramianFactor:
    """
    Factor of the position block X11 of the undamped Gramian with input [0; F].

    Args:
        sys: modal system
        F: n x q modal input (B~ or F~(c))
        drop_tol: relative eigenvalue truncation
        energy_tol: discarded fraction of trace(X11) allowed, none when omitted

    Returns:
        GramianFactor of kind position-controllability
    """
    diag = shuffle_diagonalize(sys.omega, sys.alpha)
    X = structured_lyapunov(diag, lower_block_factor(F))
    R = psd_factor(X.X11, drop_tol=drop_tol, energy_tol=energy_tol)
    logger.debug(f"controllability factor: {F.shape[1]} inputs -> rank {R.shape[1]}")
    return GramianFactor(R, "position-controllability")


def observability_factor(sys: ModalSystem, drop_tol: float = 1e-12) -> GramianFactor:
    """
    Factor of the velocity block Q22 of the undamped observability Gramian,
    A0^T Q + Q A0 = -[C~^T; 0][C~, 0].
    """
    diag = shuffle_diagonalize(sys.omega, sys.alpha)
    Ct = np.asarray(sys.Ctil, dtype=float).T
    X = structured_lyapunov(diag, np.vstack([Ct, np.zeros_like(Ct)]), transpose=True)
    R = psd_factor(X.X22, drop_tol=drop_tol)
    return GramianFactor(R, "velocity-observability")


# ==================== FULL-ORDER RESPONSE ====================

def first_order_matrices(sys: ModalSystem, cfg: DamperConfig):
    """(A, G, Cf) of the damped modal system in first-order form."""
    n = sys.n
    D = full_damping(sys, cfg)
    A = np.block([
        [np.zeros((n, n)), np.eye(n)],
        [np.diag(-sys.omega ** 2), -D],
    ])
    G = np.vstack([np.zeros_like(sys.Btil), sys.Btil])
    Cf = np.hstack([sys.Ctil, np.zeros_like(sys.Ctil)])
    return A, G, Cf


def system_response(sys: ModalSystem, cfg: DamperConfig, check_stability: bool = False) -> float:
    """
    H2 response J(c, g) = sqrt(trace(C~ P11 C~^T)) of the full damped system.

    The damped operator is stable for positive gains; the dense solve is only
    confirmed afterwards through the sign of the diagonal of P11.

    Raises:
        StabilityError: the solution is not positive semidefinite
    """
    A, G, _ = first_order_matrices(sys, cfg)
    P = dense_lyapunov(A, G, check_stability=check_stability)
    n = sys.n
    P11 = P[:n, :n]
    if np.diag(P11).min(initial=0.0) < -1e-10 * max(np.abs(P11).max(initial=0.0), 1.0):
        raise StabilityError("full-order Gramian is indefinite")
    val = float(np.trace(sys.Ctil @ P11 @ sys.Ctil.T))
    return math.sqrt(max(val, 0.0))


# ==================== BALANCED TRUNCATION ====================

@dataclass(frozen=True)
class BalancedTruncation:
    model: SecondOrderModel
    W: np.ndarray
    T: np.ndarray
    hsv: np.ndarray


def balanced_truncation_fixed(
    sys: ModalSystem, cfg: DamperConfig, r: int, drop_tol: float = 1e-12,
) -> BalancedTruncation:
    """
    Position-velocity balanced truncation of the damped modal system at fixed (c, g).

    Args:
        sys: modal system
        cfg: damper configuration
        r: reduced order
        drop_tol: relative truncation of the Gramian factors

    Returns:
        BalancedTruncation with W^T T = I

    Raises:
        RankError: r exceeds the numerical rank of S^T R
    """
    if r < 1:
        raise InvalidInputError(f"reduced order must be positive, got {r}")
    n = sys.n
    A, G, Cf = first_order_matrices(sys, cfg)
    P = dense_lyapunov(A, G)
    Q = dense_lyapunov(A.T, Cf.T)

    R1 = psd_factor(P[:n, :n], drop_tol=drop_tol)
    S3 = psd_factor(Q[n:, n:], drop_tol=drop_tol)
    U, sigma, X = svd(S3.T @ R1)

    rank = int(np.sum(sigma > drop_tol * sigma[0])) if sigma.size else 0
    if r > rank:
        raise RankError(f"requested order {r} exceeds numerical rank {rank}")

    scale = 1.0 / np.sqrt(sigma[:r])
    W = S3 @ (U[:, :r] * scale)
    T = R1 @ (X[:, :r] * scale)
    D = full_damping(sys, cfg)
    model = SecondOrderModel(
        M=W.T @ T,
        D=W.T @ D @ T,
        K=W.T @ (sys.omega[:, None] ** 2 * T),
        B=W.T @ sys.Btil,
        C=sys.Ctil @ T,
    )
    return BalancedTruncation(model, W, T, sigma)
