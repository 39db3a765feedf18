"""
Nelder-Mead simplex search
Derivative-free minimizer with a per-iteration trace and cooperative early exit:
an objective raising EarlyExit aborts the search with the best point so far.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List
import logging

import numpy as np

from app.core.exceptions import EarlyExit, InvalidInputError, SimplexAborted

logger = logging.getLogger(__name__)

REFLECT = 1.0
EXPAND = 2.0
CONTRACT = 0.5
SHRINK = 0.5
INITIAL_STEP = 0.05
ZERO_STEP = 0.00025


@dataclass
class SimplexResult:
    x: np.ndarray
    f: float
    n_eval: int
    iterations: int
    converged: bool
    reason: str
    trace: List[Dict[str, Any]] = field(default_factory=list)


def initial_simplex(x0: np.ndarray) -> np.ndarray:
    """x0 plus one vertex per coordinate, perturbed by 5% (or 0.00025 for zeros)."""
    d = x0.size
    simplex = np.tile(x0, (d + 1, 1))
    for i in range(d):
        simplex[i + 1, i] = x0[i] * (1.0 + INITIAL_STEP) if x0[i] != 0.0 else ZERO_STEP
    return simplex


def nelder_mead(
    f: Callable[[np.ndarray], float],
    x0,
    tol_opt: float = 1e-3,
    max_eval: int = 2000,
) -> SimplexResult:
    """
    Minimize f starting from x0.

    Stops when the spread of the simplex values is at most tol_opt * max(1, |f_best|)
    and the simplex diameter is at most tol_opt * max(1, |x_best|_inf), when all
    values coincide, or when max_eval evaluations have been spent.

    Raises:
        SimplexAborted: f raised EarlyExit; carries the best vertex and the trace
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size == 0:
        raise InvalidInputError("nelder_mead needs at least one variable")
    if tol_opt <= 0.0 or max_eval < 1:
        raise InvalidInputError("tol_opt must be positive and max_eval at least 1")

    trace: List[Dict[str, Any]] = []
    n_eval = 0
    simplex = initial_simplex(x0)
    values = np.full(simplex.shape[0], np.inf)
    best_x, best_f = x0.copy(), np.inf

    def evaluate(x: np.ndarray) -> float:
        nonlocal n_eval, best_x, best_f
        try:
            val = float(f(x))
        except EarlyExit as exc:
            raise SimplexAborted(best_x.copy(), best_f, x.copy(), trace, exc) from exc
        n_eval += 1
        if val < best_f:
            best_x, best_f = x.copy(), val
        return val

    for i in range(simplex.shape[0]):
        values[i] = evaluate(simplex[i])

    iteration = 0
    step = "initial"
    while True:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        trace.append({
            "iteration": iteration,
            "n_eval": n_eval,
            "f_best": float(values[0]),
            "x_best": simplex[0].tolist(),
            "step": step,
        })

        spread = float(np.max(np.abs(values - values[0])))
        diameter = float(np.max(np.abs(simplex - simplex[0])))
        if spread == 0.0 or (
            spread <= tol_opt * max(1.0, abs(values[0]))
            and diameter <= tol_opt * max(1.0, float(np.max(np.abs(simplex[0]))))
        ):
            return SimplexResult(simplex[0].copy(), float(values[0]), n_eval, iteration, True, "converged", trace)
        if n_eval >= max_eval:
            logger.warning(f"Nelder-Mead hit max_eval={max_eval} (spread {spread:.3e}, diameter {diameter:.3e})")
            return SimplexResult(simplex[0].copy(), float(values[0]), n_eval, iteration, False, "max-eval", trace)

        iteration += 1
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]

        xr = centroid + REFLECT * (centroid - worst)
        fr = evaluate(xr)
        if fr < values[0]:
            xe = centroid + EXPAND * (xr - centroid)
            fe = evaluate(xe)
            if fe < fr:
                simplex[-1], values[-1], step = xe, fe, "expand"
            else:
                simplex[-1], values[-1], step = xr, fr, "reflect"
            continue
        if fr < values[-2]:
            simplex[-1], values[-1], step = xr, fr, "reflect"
            continue

        if fr < values[-1]:
            xc = centroid + CONTRACT * (xr - centroid)
            fc = evaluate(xc)
            if fc <= fr:
                simplex[-1], values[-1], step = xc, fc, "contract-outside"
                continue
        else:
            xc = centroid + CONTRACT * (worst - centroid)
            fc = evaluate(xc)
            if fc < values[-1]:
                simplex[-1], values[-1], step = xc, fc, "contract-inside"
                continue

        step = "shrink"
        for i in range(1, simplex.shape[0]):
            simplex[i] = simplex[0] + SHRINK * (simplex[i] - simplex[0])
            values[i] = evaluate(simplex[i])
