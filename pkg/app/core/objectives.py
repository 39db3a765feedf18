"""
Response evaluators and position objectives
Full and reduced H2 response evaluators plus the two ways of turning continuous
optimizer variables into damper positions: rounding and multilinear interpolation.
"""

from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import itertools
import logging
import math
import threading

import numpy as np

from app.core.exceptions import EarlyExit, InvalidInputError
from app.core.gramian import system_response
from app.core.indicator import IndicatorContext, delta_terms, projected_damper_columns
from app.core.kernels import dense_lyapunov
from app.core.model import DamperConfig, ModalSystem

logger = logging.getLogger(__name__)

POSITIONS = "positions"
JOINT = "positions+gains"
ROUNDED = "rounded"
INTERPOLATED = "interpolated"


# ==================== EVALUATORS ====================

@dataclass(frozen=True)
class DeltaRecord:
    positions: Tuple[int, ...]
    delta: float
    relative: float
    accepted: bool


class ResponseEvaluator:
    """
    Base class: maps (positions, gains) to J and counts solves.

    Counters are guarded by a lock so corners may be evaluated concurrently.
    """

    label = "base"

    def __init__(self, sys: ModalSystem):
        self.sys = sys
        self._lock = threading.Lock()
        self.full_solves = 0
        self.reduced_solves = 0

    def response(self, positions: Sequence[int], gains: Sequence[float]) -> float:
        raise NotImplementedError

    def _count(self, attr: str) -> None:
        with self._lock:
            setattr(self, attr, getattr(self, attr) + 1)


class FullEvaluator(ResponseEvaluator):
    """J(c, g) from the dense 2n x 2n Lyapunov solve."""

    label = "full"

    def response(self, positions: Sequence[int], gains: Sequence[float]) -> float:
        self._count("full_solves")
        return system_response(self.sys, DamperConfig.unbounded(positions, gains))


class ReducedEvaluator(ResponseEvaluator):
    """
    J_r(c, g) of the one-sided projection onto the current basis.

    With delta_tol set every evaluation first checks the relative indicator and
    raises EarlyExit when it reaches delta_tol.
    """

    label = "reduced"

    def __init__(self, sys: ModalSystem, ctx: IndicatorContext, delta_tol: Optional[float] = None):
        super().__init__(sys)
        self.ctx = ctx
        self.delta_tol = delta_tol
        self.delta_history: List[DeltaRecord] = []

    def check_indicator(self, positions: Sequence[int], gains: Sequence[float]) -> None:
        terms = delta_terms(self.ctx, self.sys, positions)
        rel = terms.relative
        accepted = rel < self.delta_tol
        with self._lock:
            self.delta_history.append(DeltaRecord(tuple(int(p) for p in positions), terms.delta, rel, accepted))
        if not accepted:
            logger.info(f"indicator {rel:.3e} >= {self.delta_tol:.1e} at positions {list(positions)}")
            raise EarlyExit(
                f"relative indicator {rel:.3e} at {list(positions)}",
                positions=tuple(int(p) for p in positions),
                gains=tuple(float(g) for g in gains),
                value=rel,
            )

    def response(self, positions: Sequence[int], gains: Sequence[float]) -> float:
        if self.delta_tol is not None:
            self.check_indicator(positions, gains)
        self._count("reduced_solves")
        ctx = self.ctx
        r = ctx.rank
        FV = projected_damper_columns(ctx, self.sys, positions)
        Dr = 2.0 * ctx.alpha * ctx.VtOmV + (FV * np.asarray(gains, dtype=float)) @ FV.T
        A = np.block([[np.zeros((r, r)), np.eye(r)], [-ctx.VtOm2V, -Dr]])
        P = dense_lyapunov(A, np.vstack([np.zeros_like(ctx.Br), ctx.Br]), check_stability=False)
        val = float(np.trace(ctx.Cr @ P[:r, :r] @ ctx.Cr.T))
        return math.sqrt(max(val, 0.0))


# ==================== PARAMETERIZATION ====================

@dataclass(frozen=True)
class ObjectiveSpec:
    """
    How optimizer variables map to damper configurations.

    In joint mode the variable vector is [c_1..c_l, log g_1..log g_l]; otherwise it
    holds the positions only and fixed_gains are used.
    """
    n: int
    ell: int
    fixed_gains: Tuple[float, ...]
    gain_bounds: Tuple[Tuple[float, float], ...]
    mode: str = POSITIONS
    position_objective: str = ROUNDED
    corner_cap: int = 6
    threads: int = 1

    def __post_init__(self):
        if self.mode not in (POSITIONS, JOINT):
            raise InvalidInputError(f"unknown mode {self.mode!r}")
        if self.position_objective not in (ROUNDED, INTERPOLATED):
            raise InvalidInputError(f"unknown position objective {self.position_objective!r}")
        if len(self.fixed_gains) != self.ell or len(self.gain_bounds) != self.ell:
            raise InvalidInputError("fixed gains and gain bounds need one entry per damper")
        if self.position_objective == INTERPOLATED:
            if self.n < 2:
                raise InvalidInputError("interpolated objective needs n >= 2")
            if self.ell > self.corner_cap:
                raise InvalidInputError(
                    f"interpolated objective with l={self.ell} needs 2^{self.ell} corners; cap is {self.corner_cap}"
                )

    @property
    def joint(self) -> bool:
        return self.mode == JOINT

    def encode(self, positions: Sequence[float], gains: Optional[Sequence[float]] = None) -> np.ndarray:
        c = np.asarray(positions, dtype=float)
        if not self.joint:
            return c
        g = np.asarray(gains if gains is not None else self.fixed_gains, dtype=float)
        return np.concatenate([c, np.log(g)])

    def split(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Continuous positions and gains (clipped to their bounds) from a variable vector."""
        x = np.asarray(x, dtype=float)
        c = x[: self.ell]
        if not self.joint:
            return c, np.asarray(self.fixed_gains, dtype=float)
        lo = np.array([b[0] for b in self.gain_bounds])
        hi = np.array([b[1] for b in self.gain_bounds])
        return c, np.clip(np.exp(x[self.ell:]), lo, hi)


# ==================== ROUNDING ====================

def round_positions(c: Sequence[float], n: int) -> Tuple[int, ...]:
    """
    Round half up, clamp to [1, n] and move a damper that lands on an occupied
    position to the nearest free integer relative to its continuous value.
    """
    c = np.asarray(c, dtype=float)
    if c.size > n:
        raise InvalidInputError(f"{c.size} dampers do not fit on {n} positions")
    taken = set()
    out = []
    for x in c:
        k = min(max(int(math.floor(x + 0.5)), 1), n)
        if k in taken:
            free = [j for j in range(1, n + 1) if j not in taken]
            k = min(free, key=lambda j: (abs(j - x), j))
        taken.add(k)
        out.append(k)
    return tuple(out)


def rounded_objective(evaluator: ResponseEvaluator, spec: ObjectiveSpec, x: np.ndarray) -> float:
    """J at the rounded positions."""
    c, g = spec.split(x)
    return evaluator.response(round_positions(c, spec.n), g)


# ==================== INTERPOLATION ====================

def merge_coincident(positions: Sequence[int], gains: Sequence[float]) -> Tuple[Tuple[int, ...], Tuple[float, ...]]:
    """Combine dampers sharing a position into one with the summed gain."""
    merged: Dict[int, float] = {}
    for p, g in zip(positions, gains):
        merged[int(p)] = merged.get(int(p), 0.0) + float(g)
    return tuple(merged.keys()), tuple(merged.values())


def interpolation_corners(c: np.ndarray) -> List[Tuple[Tuple[int, ...], float]]:
    """Integer corners of the cell containing c with their multilinear weights (zero weights skipped)."""
    base = np.floor(c).astype(int)
    frac = c - base
    corners = []
    for bits in itertools.product((0, 1), repeat=c.size):
        w = 1.0
        for b, t in zip(bits, frac):
            w *= t if b else 1.0 - t
        if w > 0.0:
            corners.append((tuple(int(k + b) for k, b in zip(base, bits)), w))
    return corners


def clamp_interpolated(c: np.ndarray, n: int) -> Tuple[np.ndarray, bool]:
    clipped = np.clip(c, 1.0, float(n - 1))
    return clipped, bool(np.any(clipped != c))


def interpolated_position_objective(
    evaluator: ResponseEvaluator,
    spec: ObjectiveSpec,
    x: np.ndarray,
    executor: Optional[Executor] = None,
    notes: Optional[List[str]] = None,
) -> float:
    """
    Multilinear interpolation of J over the 2^l integer corners around c.

    c is clamped to [1, n - 1]; coincident corner positions are merged.
    """
    c, g = spec.split(x)
    c, clamped = clamp_interpolated(c, spec.n)
    if clamped and notes is not None:
        notes.append(f"positions clamped to [1, {spec.n - 1}]")

    corners = interpolation_corners(c)

    def corner_value(item):
        pos, w = item
        merged_pos, merged_g = merge_coincident(pos, g)
        return w * evaluator.response(merged_pos, merged_g)

    if executor is not None and len(corners) > 1:
        values = list(executor.map(corner_value, corners))
    else:
        values = [corner_value(item) for item in corners]
    return float(sum(values))


def configuration_of(spec: ObjectiveSpec, x: np.ndarray) -> Tuple[Tuple[int, ...], Tuple[float, ...]]:
    """Integer positions and gains reported for a variable vector."""
    c, g = spec.split(x)
    if spec.position_objective == INTERPOLATED:
        c, _ = clamp_interpolated(c, spec.n)
    return round_positions(c, spec.n), tuple(float(v) for v in g)


# ==================== OBJECTIVE ====================

@dataclass
class PositionObjective:
    """
    Callable objective for the simplex search.

    Holds the corner executor when threads > 1; use as a context manager.
    """
    evaluator: ResponseEvaluator
    spec: ObjectiveSpec
    warnings: List[str] = field(default_factory=list)
    evaluations: int = 0
    _executor: Optional[ThreadPoolExecutor] = None

    def __enter__(self) -> "PositionObjective":
        if self.spec.position_objective == INTERPOLATED and self.spec.threads > 1:
            self._executor = ThreadPoolExecutor(max_workers=self.spec.threads)
        return self

    def __exit__(self, *exc) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __call__(self, x: np.ndarray) -> float:
        self.evaluations += 1
        if self.spec.position_objective == ROUNDED:
            return rounded_objective(self.evaluator, self.spec, x)
        notes: List[str] = []
        val = interpolated_position_objective(self.evaluator, self.spec, x, self._executor, notes)
        for note in notes:
            if note not in self.warnings:
                logger.warning(note)
                self.warnings.append(note)
        return val

    def minimizer(self, x: np.ndarray) -> Tuple[Tuple[int, ...], Tuple[float, ...]]:
        return configuration_of(self.spec, x)
