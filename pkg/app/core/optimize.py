"""
Damper optimization drivers
Full-order reference optimization, reduced-basis optimization with a posteriori
enrichment, and reduced-basis optimization guarded by the Gramian error indicator.
"""

from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple
import logging
import time

import numpy as np

from app.core.config import Settings, get_settings
from app.core.exceptions import DampOptError, InvalidInputError, LivelockError, SimplexAborted
from app.core.indicator import build_indicator_context
from app.core.irka import sym2irka
from app.core.kernels import EnrichmentEvent, OrthoBasis
from app.core.model import DamperConfig, ModalSystem
from app.core.nelder_mead import SimplexResult, nelder_mead
from app.core.objectives import (
    POSITIONS, ROUNDED, DeltaRecord, FullEvaluator, ObjectiveSpec, PositionObjective,
    ReducedEvaluator, ResponseEvaluator, configuration_of,
)
from app.core.subspace import build_V0, build_VF, build_VH, enrich

logger = logging.getLogger(__name__)

ENRICH_VF = "VF"
ENRICH_VH = "VH"

OPT_CONVERGED = "opt-converged"
OUTER_CONVERGED = "outer-converged"
DELTA_RESTARTED = "delta-triggered(restarted)"
MAX_ITER = "max-iter"


@dataclass(frozen=True)
class DriverOptions:
    """Tolerances and limits shared by the three drivers."""
    tol_opt: float = 1e-3
    tol_err1: float = 1e-2
    tol_err2: float = 1e-4
    max_eval: int = 2000
    max_outer_iter: int = 30
    irka_order: int = 30
    irka_max_iter: int = 50
    irka_shift_tol: float = 1e-4
    orth_drop_tol: float = 1e-10
    enrich_drop_tol: float = 3e-3
    gramian_drop_tol: float = 1e-12
    v0_energy_tol: float = 1e-4
    corner_cap: int = 6
    threads: int = 1
    seed: int = 0

    @classmethod
    def from_settings(cls, settings: Optional[Settings] = None, **overrides: Any) -> "DriverOptions":
        s = settings or get_settings()
        base = cls(
            tol_opt=s.TOL_OPT,
            tol_err1=s.TOL_ERR1,
            tol_err2=s.TOL_ERR2,
            max_eval=s.MAX_EVAL,
            max_outer_iter=s.MAX_OUTER_ITER,
            irka_order=s.IRKA_ORDER,
            irka_max_iter=s.IRKA_MAX_ITER,
            irka_shift_tol=s.IRKA_SHIFT_TOL,
            orth_drop_tol=s.ORTH_DROP_TOL,
            enrich_drop_tol=s.ENRICH_DROP_TOL,
            gramian_drop_tol=s.GRAMIAN_DROP_TOL,
            v0_energy_tol=s.V0_ENERGY_TOL,
            corner_cap=s.INTERP_CORNER_CAP,
            threads=s.NUM_THREADS,
        )
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return replace(base, **overrides)


@dataclass
class OptimizationReport:
    """Outcome of one driver run."""
    method: str
    mode: str
    position_objective: str
    n: int
    initial_positions: Tuple[int, ...]
    initial_gains: Tuple[float, ...]
    system: str = ""
    label: str = ""
    positions: Tuple[int, ...] = ()
    gains: Tuple[float, ...] = ()
    objective: float = float("nan")
    termination_reason: str = OPT_CONVERGED
    inner_converged: bool = True
    outer_iterations: int = 0
    dimension: int = 0
    full_solves: int = 0
    reduced_solves: int = 0
    trace: List[Dict[str, Any]] = field(default_factory=list)
    enrichment: List[EnrichmentEvent] = field(default_factory=list)
    delta_history: List[DeltaRecord] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    basis: Optional[OrthoBasis] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "system": self.system,
            "method": self.method,
            "mode": self.mode,
            "position_objective": self.position_objective,
            "n": self.n,
            "initial_positions": list(self.initial_positions),
            "initial_gains": list(self.initial_gains),
            "positions": list(self.positions),
            "gains": list(self.gains),
            "objective": self.objective,
            "termination_reason": self.termination_reason,
            "inner_converged": self.inner_converged,
            "outer_iterations": self.outer_iterations,
            "dimension": self.dimension,
            "full_solves": self.full_solves,
            "reduced_solves": self.reduced_solves,
            "trace": self.trace,
            "enrichment": [
                {
                    "kind": e.kind,
                    "positions": list(e.positions),
                    "gains": list(e.gains),
                    "columns_added": e.columns_added,
                    "dimension": e.dimension,
                }
                for e in self.enrichment
            ],
            "delta_history": [
                {"positions": list(d.positions), "delta": d.delta, "relative": d.relative, "accepted": d.accepted}
                for d in self.delta_history
            ],
            "timings": dict(self.timings),
            "warnings": list(self.warnings),
        }


# ==================== HELPERS ====================

def make_objective_spec(
    sys: ModalSystem, cfg0: DamperConfig, mode: str, position_objective: str, options: DriverOptions,
) -> ObjectiveSpec:
    if cfg0.ell == 0:
        raise InvalidInputError("at least one damper is required")
    return ObjectiveSpec(
        n=sys.n,
        ell=cfg0.ell,
        fixed_gains=cfg0.gains,
        gain_bounds=cfg0.gain_bounds,
        mode=mode,
        position_objective=position_objective,
        corner_cap=options.corner_cap,
        threads=options.threads,
    )


def relative_change(new: Sequence[float], old: Sequence[float]) -> float:
    """|new - old| / |new| (absolute when new is zero)."""
    a = np.asarray(new, dtype=float)
    b = np.asarray(old, dtype=float)
    diff = float(np.linalg.norm(a - b))
    na = float(np.linalg.norm(a))
    return diff / na if na > 0.0 else diff


def enrichment_basis(
    sys: ModalSystem, kind: str, positions: Sequence[int], gains: Sequence[float], options: DriverOptions,
) -> OrthoBasis:
    """V_F(c) or V_H(c, g) at the given configuration."""
    if kind == ENRICH_VF:
        return build_VF(sys, positions, options.gramian_drop_tol)
    if kind == ENRICH_VH:
        cfg = DamperConfig.unbounded(positions, gains)
        irka = sym2irka(
            sys, cfg, options.irka_order,
            max_iter=options.irka_max_iter,
            shift_tol=options.irka_shift_tol,
            drop_tol=options.orth_drop_tol,
            seed=options.seed,
        )
        return build_VH(sys, cfg, irka.state.shifts, options.orth_drop_tol)
    raise InvalidInputError(f"unknown enrichment {kind!r}")


def _run_inner(objective: PositionObjective, x0: np.ndarray, options: DriverOptions) -> SimplexResult:
    return nelder_mead(objective, x0, tol_opt=options.tol_opt, max_eval=options.max_eval)


def _tag(trace: List[Dict[str, Any]], outer: int) -> List[Dict[str, Any]]:
    return [dict(entry, outer=outer) for entry in trace]


def _collect(report: OptimizationReport, evaluator: ResponseEvaluator) -> None:
    report.full_solves += evaluator.full_solves
    report.reduced_solves += evaluator.reduced_solves
    if isinstance(evaluator, ReducedEvaluator):
        report.delta_history.extend(evaluator.delta_history)


@contextmanager
def _attach_partial(report: OptimizationReport) -> Iterator[None]:
    """Hand the report built so far to any solver error escaping a driver."""
    try:
        yield
    except DampOptError as exc:
        exc.partial_report = report
        raise


# ==================== DRIVERS ====================

def optimize_full(
    sys: ModalSystem,
    cfg0: DamperConfig,
    mode: str = POSITIONS,
    position_objective: str = ROUNDED,
    options: Optional[DriverOptions] = None,
) -> OptimizationReport:
    """
    Nelder-Mead on the full-order response; every evaluation is a dense 2n Lyapunov solve.
    """
    options = options or DriverOptions.from_settings()
    spec = make_objective_spec(sys, cfg0, mode, position_objective, options)
    report = OptimizationReport(
        "full", mode, position_objective, sys.n, cfg0.positions, cfg0.gains,
        system=sys.label, dimension=sys.n,
    )
    logger.info(f"full optimization n={sys.n} mode={mode} start={list(cfg0.positions)}")

    t0 = time.perf_counter()
    evaluator = FullEvaluator(sys)
    with _attach_partial(report), PositionObjective(evaluator, spec) as objective:
        try:
            res = _run_inner(objective, spec.encode(cfg0.positions, cfg0.gains), options)
        finally:
            _collect(report, evaluator)
        report.positions, report.gains = objective.minimizer(res.x)
        report.warnings.extend(objective.warnings)
    elapsed = time.perf_counter() - t0

    report.objective = res.f
    report.inner_converged = res.converged
    report.trace = _tag(res.trace, 0)
    report.timings = {"basis": 0.0, "optimization": elapsed, "total": elapsed}
    logger.info(f"full optimization done: positions={list(report.positions)} J={res.f:.6e} in {elapsed:.2f}s")
    return report


def optimize_rbm(
    sys: ModalSystem,
    cfg0: DamperConfig,
    enrichment: str = ENRICH_VF,
    mode: str = POSITIONS,
    position_objective: str = ROUNDED,
    options: Optional[DriverOptions] = None,
    initial_basis: Optional[OrthoBasis] = None,
) -> OptimizationReport:
    """
    Reduced-basis optimization with enrichment at each inner optimizer.

    Alternates a full inner optimization on the current basis with one enrichment at the
    rounded minimizer until consecutive minimizers agree to tol_err1.
    """
    options = options or DriverOptions.from_settings()
    spec = make_objective_spec(sys, cfg0, mode, position_objective, options)
    report = OptimizationReport(
        f"rbm-{enrichment}", mode, position_objective, sys.n, cfg0.positions, cfg0.gains,
        system=sys.label,
    )
    with _attach_partial(report):
        _rbm_loop(sys, cfg0, spec, enrichment, options, initial_basis, report)
    return report


def _rbm_loop(
    sys: ModalSystem,
    cfg0: DamperConfig,
    spec: ObjectiveSpec,
    enrichment: str,
    options: DriverOptions,
    initial_basis: Optional[OrthoBasis],
    report: OptimizationReport,
) -> None:
    t_basis = time.perf_counter()
    basis = initial_basis if initial_basis is not None else build_V0(
        sys, options.orth_drop_tol, options.gramian_drop_tol, options.v0_energy_tol,
    )
    t_basis = time.perf_counter() - t_basis
    t_opt = 0.0

    x = spec.encode(cfg0.positions, cfg0.gains)
    prev_c, prev_g = cfg0.positions, cfg0.gains
    outer = 0
    while True:
        report.dimension = basis.rank
        report.enrichment = list(basis.events)
        t = time.perf_counter()
        ctx = build_indicator_context(sys, basis)
        t_basis += time.perf_counter() - t

        t = time.perf_counter()
        evaluator = ReducedEvaluator(sys, ctx)
        with PositionObjective(evaluator, spec) as objective:
            try:
                res = _run_inner(objective, x, options)
            finally:
                _collect(report, evaluator)
            c_star, g_star = objective.minimizer(res.x)
            report.warnings.extend(w for w in objective.warnings if w not in report.warnings)
        t_opt += time.perf_counter() - t
        report.trace.extend(_tag(res.trace, outer))

        err = relative_change(c_star, prev_c)
        if spec.joint:
            err += relative_change(g_star, prev_g)
        logger.info(f"outer {outer}: positions={list(c_star)} J_r={res.f:.6e} change={err:.3e} dim={basis.rank}")

        if err <= options.tol_err1:
            report.termination_reason = OUTER_CONVERGED
            break
        if outer >= options.max_outer_iter:
            report.termination_reason = MAX_ITER
            logger.warning(f"reduced optimization stopped after {outer} enrichments")
            break

        outer += 1
        t = time.perf_counter()
        basis = enrich(basis, enrichment_basis(sys, enrichment, c_star, g_star, options), options.enrich_drop_tol)
        t_basis += time.perf_counter() - t
        x, prev_c, prev_g = res.x, c_star, g_star

    report.positions, report.gains = c_star, g_star
    report.objective = res.f
    report.inner_converged = res.converged
    report.outer_iterations = outer
    report.dimension = basis.rank
    report.enrichment = list(basis.events)
    report.basis = basis
    report.timings = {"basis": t_basis, "optimization": t_opt, "total": t_basis + t_opt}


def optimize_rbm_delta(
    sys: ModalSystem,
    cfg0: DamperConfig,
    enrichment: str = ENRICH_VF,
    mode: str = POSITIONS,
    position_objective: str = ROUNDED,
    options: Optional[DriverOptions] = None,
    initial_basis: Optional[OrthoBasis] = None,
) -> OptimizationReport:
    """
    Reduced-basis optimization guarded by the relative Gramian indicator.

    Every evaluation checks the indicator first; when it reaches tol_err2 the inner run
    stops, the basis is enriched at the offending configuration and the search restarts
    from there. Finishes when one inner run completes without a trigger.

    Raises:
        LivelockError: the same configuration triggers twice without the basis growing
    """
    options = options or DriverOptions.from_settings()
    spec = make_objective_spec(sys, cfg0, mode, position_objective, options)
    report = OptimizationReport(
        f"rbm-delta-{enrichment}", mode, position_objective, sys.n, cfg0.positions, cfg0.gains,
        system=sys.label,
    )
    with _attach_partial(report):
        _rbm_delta_loop(sys, cfg0, spec, enrichment, options, initial_basis, report)
    logger.info(
        f"indicator-guarded optimization done: positions={list(report.positions)} "
        f"restarts={report.outer_iterations} dim={report.dimension}"
    )
    return report


def _rbm_delta_loop(
    sys: ModalSystem,
    cfg0: DamperConfig,
    spec: ObjectiveSpec,
    enrichment: str,
    options: DriverOptions,
    initial_basis: Optional[OrthoBasis],
    report: OptimizationReport,
) -> None:
    t_basis = time.perf_counter()
    basis = initial_basis if initial_basis is not None else build_V0(
        sys, options.orth_drop_tol, options.gramian_drop_tol, options.v0_energy_tol,
    )
    t_basis = time.perf_counter() - t_basis
    t_opt = 0.0

    x = spec.encode(cfg0.positions, cfg0.gains)
    stalled = set()
    restarts = 0
    res: Optional[SimplexResult] = None
    best_x, best_f = x, float("nan")
    while True:
        report.dimension = basis.rank
        report.enrichment = list(basis.events)
        t = time.perf_counter()
        ctx = build_indicator_context(sys, basis)
        t_basis += time.perf_counter() - t

        t = time.perf_counter()
        evaluator = ReducedEvaluator(sys, ctx, delta_tol=options.tol_err2)
        objective = PositionObjective(evaluator, spec)
        try:
            with objective:
                res = _run_inner(objective, x, options)
        except SimplexAborted as exc:
            t_opt += time.perf_counter() - t
            _collect(report, evaluator)
            report.trace.extend(_tag(exc.trace, restarts))
            if np.isfinite(exc.f_best):
                best_x, best_f = exc.x_best, exc.f_best

            if restarts >= options.max_outer_iter:
                report.termination_reason = MAX_ITER
                logger.warning(f"indicator-guarded optimization stopped after {restarts} restarts")
                break

            c_t, g_t = exc.cause.positions, exc.cause.gains
            t = time.perf_counter()
            addition = enrichment_basis(sys, enrichment, c_t, g_t, options)
            grown = enrich(basis, addition, options.enrich_drop_tol)
            if grown.rank == basis.rank and addition.weights is not None:
                logger.info(f"weighted enrichment at {list(c_t)} added nothing, retrying unweighted")
                grown = enrich(basis, addition.unweighted(), options.orth_drop_tol)
            t_basis += time.perf_counter() - t
            if grown.rank == basis.rank:
                if c_t in stalled:
                    raise LivelockError(f"indicator keeps triggering at {list(c_t)} without basis growth")
                stalled.add(c_t)
            basis = grown
            x = exc.x_trigger
            restarts += 1
            report.outer_iterations = restarts
            continue
        except DampOptError:
            _collect(report, evaluator)
            raise

        t_opt += time.perf_counter() - t
        _collect(report, evaluator)
        report.trace.extend(_tag(res.trace, restarts))
        report.warnings.extend(w for w in objective.warnings if w not in report.warnings)
        report.termination_reason = DELTA_RESTARTED if restarts else OPT_CONVERGED
        best_x, best_f = res.x, res.f
        break

    report.positions, report.gains = configuration_of(spec, best_x)
    report.objective = best_f
    report.inner_converged = res is not None and res.converged and report.termination_reason != MAX_ITER
    report.outer_iterations = restarts
    report.dimension = basis.rank
    report.enrichment = list(basis.events)
    report.basis = basis
    report.timings = {"basis": t_basis, "optimization": t_opt, "total": t_basis + t_opt}
