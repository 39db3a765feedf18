"""
Vibrational system model
Physical second-order systems M x'' + D x' + K x = B u, y = C x, their modal form,
grounded damper geometry and the two benchmark families (mass chain and three-row
mass-spring system).
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple
import logging
import math

import numpy as np
import scipy.stats

from app.core.exceptions import InvalidInputError
from app.core.kernels import as_matrix, check_symmetric, dense_lyapunov, generalized_sym_eig

logger = logging.getLogger(__name__)

# Maps 0-based damper positions and the dimension n to the physical n x l matrix F(c).
ColumnProvider = Callable[[np.ndarray, int], np.ndarray]

DEFAULT_GAIN_BOUNDS = (1e-3, 1e6)


# ==================== DOMAIN TYPES ====================

@dataclass(frozen=True)
class DamperConfig:
    """
    Damper positions (1-based grid indices) and viscosities.

    Args:
        positions: l pairwise distinct integers
        gains: l positive reals
        gain_bounds: per-damper (lower, upper) box; defaults to DEFAULT_GAIN_BOUNDS
    """
    positions: Tuple[int, ...]
    gains: Tuple[float, ...]
    gain_bounds: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self):
        positions = tuple(int(p) for p in self.positions)
        gains = tuple(float(g) for g in self.gains)
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.gain_bounds) or \
            tuple(DEFAULT_GAIN_BOUNDS for _ in gains)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "gain_bounds", bounds)

        if len(positions) != len(gains):
            raise InvalidInputError(f"{len(positions)} positions but {len(gains)} gains")
        if len(bounds) != len(gains):
            raise InvalidInputError(f"{len(bounds)} gain bounds for {len(gains)} dampers")
        if len(set(positions)) != len(positions):
            raise InvalidInputError(f"damper positions must be distinct, got {list(positions)}")
        if any(p < 1 for p in positions):
            raise InvalidInputError(f"damper positions are 1-based, got {list(positions)}")
        for g, (lo, hi) in zip(gains, bounds):
            if not (g > 0.0 and math.isfinite(g)):
                raise InvalidInputError(f"damper gains must be positive, got {g}")
            if lo <= 0.0 or lo > hi:
                raise InvalidInputError(f"invalid gain bounds ({lo}, {hi})")
            if not lo <= g <= hi:
                raise InvalidInputError(f"gain {g} outside bounds ({lo}, {hi})")

    @property
    def ell(self) -> int:
        return len(self.positions)

    @classmethod
    def unbounded(cls, positions: Sequence[int], gains: Sequence[float]) -> "DamperConfig":
        """Configuration without a gain box (objective evaluations)."""
        box = (np.finfo(float).tiny, math.inf)
        return cls(tuple(positions), tuple(gains), tuple(box for _ in gains))

    def with_values(self, positions: Sequence[int], gains: Sequence[float]) -> "DamperConfig":
        return DamperConfig(tuple(positions), tuple(gains), self.gain_bounds)


@dataclass(frozen=True)
class PhysicalSystem:
    """
    Second-order system in physical coordinates.

    Internal damping is a multiple alpha of the critical damping; the matrix square
    roots of its definition are never formed.
    """
    M: np.ndarray
    K: np.ndarray
    B: np.ndarray
    C: np.ndarray
    alpha: float
    damper_count: int = 2
    gain_bounds: Tuple[float, float] = DEFAULT_GAIN_BOUNDS
    column_provider: Optional[ColumnProvider] = None
    label: str = "custom"

    def __post_init__(self):
        M = as_matrix(self.M, "M")
        K = as_matrix(self.K, "K")
        B = as_matrix(self.B, "B")
        C = as_matrix(self.C, "C")
        check_symmetric(M, "M")
        check_symmetric(K, "K")
        n = M.shape[0]
        if K.shape != (n, n):
            raise InvalidInputError(f"K has shape {K.shape}, expected {(n, n)}")
        if B.shape[0] != n:
            raise InvalidInputError(f"B has {B.shape[0]} rows, expected {n}")
        if C.shape[1] != n:
            raise InvalidInputError(f"C has {C.shape[1]} columns, expected {n}")
        if not self.alpha > 0.0:
            raise InvalidInputError(f"alpha must be positive, got {self.alpha}")
        for name, arr in (("M", M), ("K", K), ("B", B), ("C", C)):
            arr = np.array(arr, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.M.shape[0]


@dataclass(frozen=True)
class ModalSystem:
    """
    System in modal coordinates: x'' + (2 alpha Omega + F~ G F~^T) x' + Omega^2 x = B~ u.

    Immutable after construction and safe to share between threads.
    """
    omega: np.ndarray
    alpha: float
    Btil: np.ndarray
    Ctil: np.ndarray
    Phi: np.ndarray
    ell: int = 2
    gain_bounds: Tuple[float, float] = DEFAULT_GAIN_BOUNDS
    column_provider: Optional[ColumnProvider] = field(default=None, compare=False)
    label: str = "custom"

    def __post_init__(self):
        for name in ("omega", "Btil", "Ctil", "Phi"):
            arr = np.array(getattr(self, name), dtype=float, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.omega <= 0.0):
            raise InvalidInputError("eigenfrequencies must be positive")
        if not self.alpha > 0.0:
            raise InvalidInputError(f"alpha must be positive, got {self.alpha}")

    @property
    def n(self) -> int:
        return self.omega.shape[0]

    @property
    def m(self) -> int:
        return self.Btil.shape[1]

    @property
    def p(self) -> int:
        return self.Ctil.shape[0]

    def default_config(self, positions: Sequence[int], gains: Sequence[float]) -> DamperConfig:
        return DamperConfig(tuple(positions), tuple(gains), tuple(self.gain_bounds for _ in gains))


@dataclass(frozen=True)
class SecondOrderModel:
    """
    Generic (possibly reduced) second-order model M x'' + D x' + K x = B u, y = C x.
    """
    M: np.ndarray
    D: np.ndarray
    K: np.ndarray
    B: np.ndarray
    C: np.ndarray

    @property
    def order(self) -> int:
        return self.K.shape[0]

    def transfer(self, s: complex) -> np.ndarray:
        """G(s) = C (s^2 M + s D + K)^{-1} B."""
        A = s * s * self.M + s * self.D + self.K
        return self.C @ np.linalg.solve(A, self.B.astype(complex))

    def first_order(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Companion first-order realization (A, B, C) with state [x; x']."""
        r = self.order
        Minv_K = np.linalg.solve(self.M, self.K)
        Minv_D = np.linalg.solve(self.M, self.D)
        Minv_B = np.linalg.solve(self.M, self.B)
        A = np.block([[np.zeros((r, r)), np.eye(r)], [-Minv_K, -Minv_D]])
        B = np.vstack([np.zeros_like(Minv_B), Minv_B])
        C = np.hstack([self.C, np.zeros((self.C.shape[0], r))])
        return A, B, C

    def h2_norm(self) -> float:
        """sqrt(trace(C P11 C^T)) from the first-order controllability Gramian."""
        A, B, _ = self.first_order()
        P = dense_lyapunov(A, B)
        r = self.order
        val = float(np.trace(self.C @ P[:r, :r] @ self.C.T))
        return math.sqrt(max(val, 0.0))


# ==================== TRANSFORMATIONS ====================

def to_modal(sys: PhysicalSystem) -> ModalSystem:
    """
    Transform a physical system into modal coordinates.

    Args:
        sys: physical system with SPD M and K

    Returns:
        ModalSystem with Phi^T M Phi = I and Phi^T K Phi = diag(omega^2)
    """
    w2, Phi = generalized_sym_eig(sys.K, sys.M)
    omega = np.sqrt(w2)
    logger.debug(f"modal transform n={sys.n}: omega in [{omega[0]:.4e}, {omega[-1]:.4e}]")
    return ModalSystem(
        omega=omega,
        alpha=sys.alpha,
        Btil=Phi.T @ sys.B,
        Ctil=sys.C @ Phi,
        Phi=Phi,
        ell=sys.damper_count,
        gain_bounds=sys.gain_bounds,
        column_provider=sys.column_provider,
        label=sys.label,
    )


def validate_positions(positions: Sequence[int], n: int) -> np.ndarray:
    """
    Check 1-based positions and return them 0-based.
    """
    pos = np.asarray([int(p) for p in positions], dtype=int)
    if pos.size and (pos.min() < 1 or pos.max() > n):
        raise InvalidInputError(f"damper positions must lie in [1, {n}], got {pos.tolist()}")
    if len(set(pos.tolist())) != pos.size:
        raise InvalidInputError(f"duplicate damper positions {pos.tolist()}")
    return pos - 1


def damper_columns(sys: ModalSystem, positions: Sequence[int]) -> np.ndarray:
    """
    Modal damper geometry F~(c) = Phi^T F(c).

    For grounded dampers column j is row c_j of Phi, transposed.

    Returns:
        np.ndarray: n x l matrix
    """
    idx = validate_positions(positions, sys.n)
    if sys.column_provider is None:
        return sys.Phi[idx, :].T.copy()
    F = np.asarray(sys.column_provider(idx, sys.n), dtype=float)
    if F.shape != (sys.n, idx.size):
        raise InvalidInputError(f"column provider returned shape {F.shape}, expected {(sys.n, idx.size)}")
    return sys.Phi.T @ F


def full_damping(sys: ModalSystem, cfg: DamperConfig) -> np.ndarray:
    """
    Dense modal damping D~(c, g) = 2 alpha Omega + F~(c) G(g) F~(c)^T.
    """
    F = damper_columns(sys, cfg.positions)
    g = np.asarray(cfg.gains)
    return np.diag(2.0 * sys.alpha * sys.omega) + (F * g) @ F.T


def modal_model(sys: ModalSystem, cfg: DamperConfig) -> SecondOrderModel:
    """Full-order modal system as a SecondOrderModel."""
    n = sys.n
    return SecondOrderModel(
        M=np.eye(n),
        D=full_damping(sys, cfg),
        K=np.diag(sys.omega ** 2),
        B=np.array(sys.Btil),
        C=np.array(sys.Ctil),
    )


def internal_damping(phys: PhysicalSystem, modal: ModalSystem) -> np.ndarray:
    """
    Physical internal damping M Phi (2 alpha Omega) Phi^T M.

    Equal to the critical-damping multiple without forming matrix square roots.
    """
    MPhi = phys.M @ modal.Phi
    return (MPhi * (2.0 * modal.alpha * modal.omega)) @ MPhi.T


def physical_model(phys: PhysicalSystem, modal: ModalSystem, cfg: Optional[DamperConfig] = None) -> SecondOrderModel:
    """Physical-coordinate model with internal plus external damping."""
    D = internal_damping(phys, modal)
    if cfg is not None and cfg.ell:
        idx = validate_positions(cfg.positions, phys.n)
        if phys.column_provider is None:
            F = np.zeros((phys.n, idx.size))
            F[idx, np.arange(idx.size)] = 1.0
        else:
            F = np.asarray(phys.column_provider(idx, phys.n), dtype=float)
        D = D + (F * np.asarray(cfg.gains)) @ F.T
    return SecondOrderModel(M=np.array(phys.M), D=D, K=np.array(phys.K), B=np.array(phys.B), C=np.array(phys.C))


# ==================== BENCHMARK FAMILIES ====================

def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def scaled_index(reference_index: int, reference_n: int, n: int) -> int:
    """
    1-based index placed at the same relative location in a system of size n.
    """
    return min(max(_round_half_up(reference_index / reference_n * n), 1), n)


def _unit_rows(n: int, rows: Sequence[int]) -> np.ndarray:
    B = np.zeros((n, 1))
    for r in rows:
        B[r - 1, 0] = 1.0
    return B


def _output_matrix(n: int, cols: Sequence[int]) -> np.ndarray:
    C = np.zeros((len(cols), n))
    for i, c in enumerate(cols):
        C[i, c - 1] = 1.0
    return C


def make_example_1(
    n: int,
    alpha: float = 0.005,
    damper_count: int = 2,
    gain_bounds: Tuple[float, float] = DEFAULT_GAIN_BOUNDS,
    b_rows: Optional[Sequence[int]] = None,
    c_cols: Optional[Sequence[int]] = None,
) -> PhysicalSystem:
    """
    Single row of n masses coupled by consecutive springs.

    Masses are log-spaced from 0.1 to 10 over the first half and mirrored; stiffness is
    tridiagonal with diagonal (24, 40, ..., 40, 20) and off-diagonal -20. Forces act on
    the first, middle and last mass; outputs read three displacements. Index placements
    are those of the n = 1000 system scaled to n.

    Args:
        n: even number of masses (>= 2)
        alpha: internal damping coefficient

    Returns:
        PhysicalSystem
    """
    if n < 2 or n % 2:
        raise InvalidInputError(f"example 1 needs an even n >= 2, got {n}")

    half = np.logspace(-1, 1, n // 2)
    M = np.diag(np.concatenate([half, half[::-1]]))

    K = np.diag(np.full(n, 40.0)) + np.diag(np.full(n - 1, -20.0), 1) + np.diag(np.full(n - 1, -20.0), -1)
    K[0, 0] = 24.0
    K[-1, -1] = 20.0

    if b_rows is None:
        b_rows = sorted({1, scaled_index(500, 1000, n), n})
    if c_cols is None:
        c_cols = [scaled_index(10, 1000, n), scaled_index(500, 1000, n), scaled_index(990, 1000, n)]

    return PhysicalSystem(
        M=M, K=K, B=_unit_rows(n, b_rows), C=_output_matrix(n, c_cols),
        alpha=alpha, damper_count=damper_count, gain_bounds=gain_bounds,
        label=f"example1-n{n}",
    )


def make_example_2(
    n_row: int,
    alpha: float = 0.005,
    damper_count: int = 3,
    gain_bounds: Tuple[float, float] = DEFAULT_GAIN_BOUNDS,
    stiffness: Tuple[float, float, float, float] = (20.0, 10.0, 5.0, 20.0),
    c_cols: Optional[Sequence[int]] = None,
) -> PhysicalSystem:
    """
    Three rows of n_row masses joined at one common mass (n = 3 n_row + 1).

    Row i has stiffness k_i * tridiag(-1, 2, -1); its last mass couples to the common
    mass with entry k_i; the common mass has diagonal k1 + k2 + k3 + k4. Masses are
    log-spaced between 1e3 and 1e5 (ceil(n/2) rising, floor(n/2) falling). All masses
    are forced; three displacements are observed.
    """
    if n_row < 1:
        raise InvalidInputError(f"example 2 needs n_row >= 1, got {n_row}")
    n = 3 * n_row + 1
    k1, k2, k3, k4 = stiffness

    rising = np.logspace(3, 5, math.ceil(n / 2))
    falling = np.logspace(3, 5, n // 2)[::-1]
    M = np.diag(np.concatenate([rising, falling]))

    K = np.zeros((n, n))
    tri = 2.0 * np.eye(n_row) - np.eye(n_row, k=1) - np.eye(n_row, k=-1)
    for i, k in enumerate((k1, k2, k3)):
        sl = slice(i * n_row, (i + 1) * n_row)
        K[sl, sl] = k * tri
        K[(i + 1) * n_row - 1, n - 1] = k
        K[n - 1, (i + 1) * n_row - 1] = k
    K[n - 1, n - 1] = k1 + k2 + k3 + k4

    if c_cols is None:
        c_cols = [scaled_index(10, 901, n), scaled_index(450, 901, n), scaled_index(891, 901, n)]

    return PhysicalSystem(
        M=M, K=K, B=np.ones((n, 1)), C=_output_matrix(n, c_cols),
        alpha=alpha, damper_count=damper_count, gain_bounds=gain_bounds,
        label=f"example2-n{n}",
    )


def make_random_system(
    n: int,
    rng: np.random.Generator,
    alpha: float = 0.02,
    m: int = 1,
    p: int = 2,
    damper_count: int = 2,
) -> ModalSystem:
    """
    Random modal system with a Haar-distributed orthogonal Phi and omega in [0.5, 5].

    Used by the oracle suite; M = Phi^{-T} Phi^{-1} is never formed.
    """
    if n < 1:
        raise InvalidInputError(f"n must be positive, got {n}")
    Phi = scipy.stats.ortho_group.rvs(n, random_state=rng) if n > 1 else np.ones((1, 1))
    omega = np.sort(rng.uniform(0.5, 5.0, n))
    return ModalSystem(
        omega=omega,
        alpha=alpha,
        Btil=rng.standard_normal((n, m)),
        Ctil=rng.standard_normal((p, n)),
        Phi=Phi,
        ell=damper_count,
        label=f"random-n{n}",
    )
