"""
Dense matrix kernels
Symmetric/generalized eigendecomposition, SVD, rank-revealing orthonormalization,
small dense Lyapunov solves and trace helpers used by every other core module.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple
import logging

import numpy as np
import scipy.linalg

from app.core.exceptions import InvalidInputError, NotPositiveDefiniteError, StabilityError

logger = logging.getLogger(__name__)

DEFAULT_DROP_TOL = 1e-10


# ==================== BASIS TYPE ====================

@dataclass(frozen=True)
class EnrichmentEvent:
    """One step in the history of a reduced basis."""
    kind: str                      # "V0" | "VF" | "VH" | "import" | "orth"
    positions: Tuple[int, ...] = ()
    gains: Tuple[float, ...] = ()
    columns_added: int = 0
    dimension: int = 0


@dataclass(frozen=True)
class OrthoBasis:
    """
    Orthonormal column block V (n x r) plus the log of how it was built.

    An empty basis has shape (n, 0). Gramian bases carry weights, the square roots of
    the eigenvalues belonging to their columns; enrich scales by them before ranking.
    """
    V: np.ndarray
    events: Tuple[EnrichmentEvent, ...] = field(default_factory=tuple)
    weights: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.V.shape[0]

    @property
    def rank(self) -> int:
        return self.V.shape[1]

    @property
    def is_empty(self) -> bool:
        return self.V.shape[1] == 0

    @property
    def weighted(self) -> np.ndarray:
        return self.V if self.weights is None else self.V * self.weights

    def with_event(self, event: EnrichmentEvent) -> "OrthoBasis":
        return OrthoBasis(self.V, self.events + (event,), self.weights)

    def unweighted(self) -> "OrthoBasis":
        return OrthoBasis(self.V, self.events)

    def summary(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "rank": self.rank,
            "events": [e.kind for e in self.events],
        }


# ==================== VALIDATION HELPERS ====================

def as_matrix(A, name: str = "matrix") -> np.ndarray:
    """
    Convert input to a 2-D float/complex array and reject non-finite entries.
    """
    arr = np.asarray(A)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains NaN or Inf entries")
    if not np.iscomplexobj(arr):
        arr = arr.astype(float, copy=False)
    return arr


def check_symmetric(A: np.ndarray, name: str = "matrix", rtol: float = 1e-10) -> None:
    if A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {A.shape}")
    scale = max(np.abs(A).max(initial=0.0), 1.0)
    if np.abs(A - A.T).max(initial=0.0) > rtol * scale:
        raise InvalidInputError(f"{name} is not symmetric")


def symmetrize(X: np.ndarray) -> np.ndarray:
    """Return (X + X^T) / 2."""
    return 0.5 * (X + X.T)


def trace_product(A: np.ndarray, B: np.ndarray) -> float:
    """trace(A @ B) without forming the product."""
    return float(np.real(np.einsum("ij,ji->", A, B)))


# ==================== DECOMPOSITIONS ====================

def generalized_sym_eig(K, M) -> Tuple[np.ndarray, np.ndarray]:
    """
    Solve K phi = w2 M phi for symmetric positive definite K and M.

    Args:
        K: stiffness-like SPD matrix
        M: mass-like SPD matrix

    Returns:
        (w2, Phi): ascending positive eigenvalues and M-orthonormal eigenvectors,
        so that Phi^T M Phi = I and Phi^T K Phi = diag(w2).
    """
    K = as_matrix(K, "K")
    M = as_matrix(M, "M")
    check_symmetric(K, "K")
    check_symmetric(M, "M")
    if K.shape != M.shape:
        raise InvalidInputError(f"K and M shapes differ: {K.shape} vs {M.shape}")

    try:
        scipy.linalg.cholesky(M, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("M is not positive definite") from exc

    w2, Phi = scipy.linalg.eigh(K, M)
    if w2[0] <= 0.0:
        raise NotPositiveDefiniteError(f"K is not positive definite (smallest eigenvalue {w2[0]:.3e})")
    return w2, Phi


def svd(A) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Thin SVD A = U diag(sigma) X^T with nonincreasing singular values.

    Returns:
        (U, sigma, X) where X holds the right singular vectors as columns.
    """
    A = as_matrix(A, "A")
    U, sigma, Xt = scipy.linalg.svd(A, full_matrices=False)
    return U, sigma, Xt.conj().T


def orthonormalize(A, drop_tol: float = DEFAULT_DROP_TOL) -> OrthoBasis:
    """
    Rank-revealing orthonormal basis of the column span of A.

    Uses QR with column pivoting; a column is kept while the norm of its residual after
    projection onto the previously accepted columns exceeds drop_tol times the largest
    column norm of A. A zero matrix gives an empty basis.

    Args:
        A: n x k matrix with at least one column
        drop_tol: relative truncation tolerance

    Returns:
        OrthoBasis: orthonormal columns spanning the numerical range of A
    """
    A = as_matrix(A, "A")
    n, k = A.shape
    if k == 0:
        raise InvalidInputError("orthonormalize needs at least one column")

    col_norm = np.linalg.norm(A, axis=0).max(initial=0.0)
    if col_norm == 0.0:
        return OrthoBasis(np.zeros((n, 0), dtype=A.dtype))

    Q, R, _ = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > drop_tol * col_norm))
    return OrthoBasis(np.ascontiguousarray(Q[:, :rank]))


def orthogonal_complement_columns(V: np.ndarray, A: np.ndarray, drop_tol: float = DEFAULT_DROP_TOL) -> np.ndarray:
    """
    Columns that extend span(V) to span([V, A]).

    Two passes of block Gram-Schmidt against V, then a rank-revealing QR of the
    residual. The tolerance is relative to the largest column norm of A.
    """
    A = as_matrix(A, "A")
    col_norm = np.linalg.norm(A, axis=0).max(initial=0.0)
    if A.shape[1] == 0 or col_norm == 0.0:
        return np.zeros((A.shape[0], 0), dtype=A.dtype)

    R = A.copy()
    if V.shape[1] > 0:
        for _ in range(2):
            R = R - V @ (V.conj().T @ R)

    res_norm = np.linalg.norm(R, axis=0).max(initial=0.0)
    if res_norm <= drop_tol * col_norm:
        return np.zeros((A.shape[0], 0), dtype=A.dtype)

    Q, Rq, _ = scipy.linalg.qr(R, mode="economic", pivoting=True)
    rank = int(np.sum(np.abs(np.diag(Rq)) > drop_tol * col_norm))
    Q = Q[:, :rank]
    if V.shape[1] > 0 and rank > 0:
        Q = Q - V @ (V.conj().T @ Q)
        Q, _ = np.linalg.qr(Q)
    return Q


def principal_angles(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Principal angles (radians) between two orthonormal column spans."""
    if U.shape[1] == 0 or V.shape[1] == 0:
        return np.zeros(0)
    return scipy.linalg.subspace_angles(U, V)


def projection_residual(V: np.ndarray, x: np.ndarray) -> float:
    """Relative residual of projecting x onto span(V) (V orthonormal)."""
    x = np.asarray(x)
    nx = np.linalg.norm(x)
    if nx == 0.0:
        return 0.0
    if V.shape[1] == 0:
        return 1.0
    r = x - V @ (V.conj().T @ x)
    return float(np.linalg.norm(r) / nx)


# ==================== LYAPUNOV ====================

def dense_lyapunov(A, G, check_stability: bool = True) -> np.ndarray:
    """
    Solve A X + X A^T = -G G^T with a Schur-based (Bartels-Stewart) method.

    Args:
        A: square asymptotically stable matrix
        G: right-hand-side factor with A.shape[0] rows
        check_stability: confirm stability through the spectrum of A first

    Returns:
        np.ndarray: symmetric positive semidefinite solution X

    Raises:
        StabilityError: A has an eigenvalue with nonnegative real part, or the
            solve breaks down
    """
    A = as_matrix(A, "A")
    G = as_matrix(G, "G")
    if A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"A must be square, got shape {A.shape}")
    if G.shape[0] != A.shape[0]:
        raise InvalidInputError(f"G has {G.shape[0]} rows, A has {A.shape[0]}")

    if check_stability:
        abscissa = np.linalg.eigvals(A).real.max(initial=-np.inf)
        if abscissa >= 0.0:
            raise StabilityError(f"Lyapunov operator is not stable (spectral abscissa {abscissa:.3e})")

    try:
        X = scipy.linalg.solve_continuous_lyapunov(A, -(G @ G.conj().T))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise StabilityError(f"Lyapunov solve failed: {exc}") from exc

    if not np.all(np.isfinite(X)):
        raise StabilityError("Lyapunov solve produced non-finite entries")
    X = np.real_if_close(X, tol=1e6)
    return symmetrize(X)


def lyapunov_residual(A: np.ndarray, X: np.ndarray, G: np.ndarray) -> float:
    """Relative Frobenius residual of A X + X A^T + G G^T."""
    GG = G @ G.conj().T
    R = A @ X + X @ A.conj().T + GG
    scale = max(np.linalg.norm(GG), np.linalg.norm(A) * np.linalg.norm(X), np.finfo(float).tiny)
    return float(np.linalg.norm(R) / scale)


def kronecker_lyapunov(A: np.ndarray, G: np.ndarray) -> np.ndarray:
    """
    Brute-force solve of (I kron A + A kron I) vec(X) = -vec(G G^T).

    Only for small validation problems.
    """
    n = A.shape[0]
    I = np.eye(n)
    L = np.kron(I, A) + np.kron(A, I)
    rhs = -(G @ G.T).reshape(-1, order="F")
    x = np.linalg.solve(L, rhs)
    return symmetrize(x.reshape(n, n, order="F"))


def psd_factor(
    X: np.ndarray,
    drop_tol: float = 1e-12,
    max_rank: Optional[int] = None,
    energy_tol: Optional[float] = None,
) -> np.ndarray:
    """
    Low-rank factor R with X ~= R R^T for symmetric PSD X, columns by decreasing norm.

    Eigenvalues below drop_tol times the largest one are discarded. With energy_tol the
    factor is further cut to the shortest leading block whose discarded eigenvalues sum
    to at most energy_tol * trace(X).
    """
    X = symmetrize(np.asarray(X, dtype=float))
    if X.size == 0:
        return np.zeros((X.shape[0], 0))
    w, U = scipy.linalg.eigh(X)
    w_max = w[-1] if w.size else 0.0
    if w_max <= 0.0:
        return np.zeros((X.shape[0], 0))
    keep = w > drop_tol * w_max
    w, U = w[keep][::-1], U[:, keep][:, ::-1]
    if energy_tol is not None:
        # tail[k] = sum of the eigenvalues after the first k
        tail = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])
        total = float(np.sum(np.clip(np.diag(X), 0.0, None)))
        k = int(np.argmax(tail <= energy_tol * total))
        w, U = w[:max(k, 1)], U[:, :max(k, 1)]
    if max_rank is not None:
        w, U = w[:max_rank], U[:, :max_rank]
    return U * np.sqrt(w)
