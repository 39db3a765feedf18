"""
Bench Service - Business logic for building systems and running damper optimizations
Bridges run configurations, the numerical drivers and the report writers
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple
import logging
import re

import numpy as np
from pydantic import ValidationError

from app.core.config import Settings, get_settings
from app.core.exceptions import ConfigError, DampOptError
from app.core.model import (
    ModalSystem, PhysicalSystem, make_example_1, make_example_2, to_modal, validate_positions,
)
from app.core.optimize import (
    DriverOptions, OptimizationReport, optimize_full, optimize_rbm, optimize_rbm_delta,
)
from app.core.subspace import import_basis
from app.models.schemas import (
    ComparisonColumn, ComparisonTable, Method, OptimizationReportModel, RunConfig,
    SystemSpec, SystemSummary,
)
from app.utils import report_writer
from app.utils.matrix_io import load_basis, load_system_definition, save_basis

logger = logging.getLogger(__name__)

DESK_N_EXAMPLE_1 = 100
DESK_N_ROW_EXAMPLE_2 = 34


@dataclass
class BatchItem:
    """Outcome of one configuration in a batch."""
    index: int
    label: str
    report: Optional[OptimizationReportModel] = None
    error: Optional[str] = None
    error_type: Optional[str] = None

    @property
    def success(self) -> bool:
        return self.error is None


def _rows(A: np.ndarray, axis: int) -> List[int]:
    return [int(i) + 1 for i in np.flatnonzero(np.any(np.asarray(A) != 0.0, axis=axis))]


def _relative_error(value: Sequence[float], reference: Sequence[float]) -> float:
    a = np.asarray(value, dtype=float)
    b = np.asarray(reference, dtype=float)
    if a.shape != b.shape:
        return float("nan")
    nb = float(np.linalg.norm(b))
    diff = float(np.linalg.norm(a - b))
    return diff / nb if nb > 0.0 else diff


class BenchService:
    """
    Service class for benchmark systems, optimization runs and comparisons.
    Acts as a bridge between the CLI / API routes and the numerical core.
    """

    # ==================== SYSTEMS ====================

    @staticmethod
    def build_system(spec: SystemSpec, settings: Optional[Settings] = None) -> Tuple[PhysicalSystem, ModalSystem]:
        """
        Build a benchmark or file-defined system and its modal form.

        Args:
            spec (SystemSpec): system selection
            settings (Settings, optional): for the full-scale threshold

        Returns:
            Tuple: (physical system, modal system)
        """
        settings = settings or get_settings()

        if spec.file is not None:
            data = load_system_definition(spec.file)
            phys = PhysicalSystem(
                M=data["M"], K=data["K"], B=data["B"], C=data["C"], alpha=data["alpha"],
                damper_count=spec.damper_count or data["damper_count"],
                gain_bounds=data["gain_bounds"], label=data["label"],
            )
        elif spec.example == 1:
            n = spec.n or DESK_N_EXAMPLE_1
            BenchService._check_scale(n, spec.full_scale, settings)
            phys = make_example_1(
                n, alpha=spec.alpha, damper_count=spec.damper_count or 2,
                gain_bounds=spec.gain_bounds, b_rows=spec.b_rows, c_cols=spec.c_cols,
            )
        else:
            n_row = spec.n_row or DESK_N_ROW_EXAMPLE_2
            BenchService._check_scale(3 * n_row + 1, spec.full_scale, settings)
            phys = make_example_2(
                n_row, alpha=spec.alpha, damper_count=spec.damper_count or 3,
                gain_bounds=spec.gain_bounds, c_cols=spec.c_cols,
            )

        if phys.n < 2:
            raise ConfigError(f"systems need n >= 2, got n={phys.n}")
        if spec.file is not None:
            BenchService._check_scale(phys.n, spec.full_scale, settings)
        return phys, to_modal(phys)

    @staticmethod
    def _check_scale(n: int, full_scale: bool, settings: Settings) -> None:
        if n <= settings.FULL_SCALE_N:
            return
        if not full_scale:
            raise ConfigError(
                f"n={n} exceeds FULL_SCALE_N={settings.FULL_SCALE_N}; pass full_scale to run it anyway"
            )
        logger.warning(f"full-scale system n={n}: full-order runs may take hours")

    @staticmethod
    def summarize(phys: PhysicalSystem, modal: ModalSystem) -> SystemSummary:
        return SystemSummary(
            label=modal.label,
            n=modal.n,
            m=modal.m,
            p=modal.p,
            alpha=modal.alpha,
            omega_min=float(modal.omega[0]),
            omega_max=float(modal.omega[-1]),
            b_rows=_rows(phys.B, axis=1),
            c_cols=_rows(phys.C, axis=0),
        )

    # ==================== RUNS ====================

    @staticmethod
    def load_config(path: str, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """Read a JSON run configuration, applying non-None top-level overrides."""
        file = Path(path)
        if not file.exists():
            raise ConfigError(f"Run configuration not found: {path}")
        try:
            cfg = RunConfig.model_validate_json(file.read_text(encoding="utf-8"))
            if overrides:
                data = cfg.model_dump()
                for key, value in overrides.items():
                    if value is None:
                        continue
                    if key == "system":
                        data["system"] = {**data["system"], **value}
                    else:
                        data[key] = value
                if overrides.get("c0") is not None and overrides.get("g0") is None \
                        and len(data["g0"] or []) != len(data["c0"]):
                    data["g0"] = None
                if (overrides.get("system") or {}).get("file") is not None:
                    data["system"]["example"] = None
                cfg = RunConfig.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"Invalid run configuration {path}: {e}") from e
        return cfg

    @staticmethod
    def driver_options(cfg: RunConfig, settings: Optional[Settings] = None) -> DriverOptions:
        return DriverOptions.from_settings(
            settings,
            tol_opt=cfg.tol_opt,
            tol_err1=cfg.tol_err1,
            tol_err2=cfg.tol_err2,
            max_eval=cfg.max_eval,
            max_outer_iter=cfg.max_outer_iter,
            irka_order=cfg.irka_order,
            threads=cfg.threads,
            seed=cfg.seed,
        )

    @staticmethod
    def execute(cfg: RunConfig, settings: Optional[Settings] = None) -> OptimizationReport:
        """
        Build the system and run the configured driver.

        Raises:
            ConfigError: configuration does not fit the system
            DampOptError: numerical failure (carries partial_report when a driver had started)
        """
        settings = settings or get_settings()
        _, modal = BenchService.build_system(cfg.system, settings)
        if cfg.system.damper_count is not None and cfg.system.damper_count != len(cfg.c0):
            raise ConfigError(f"system expects {cfg.system.damper_count} dampers, c0 has {len(cfg.c0)}")
        try:
            validate_positions(cfg.c0, modal.n)
        except DampOptError as e:
            raise ConfigError(str(e)) from e

        cfg0 = modal.default_config(cfg.c0, cfg.g0)
        options = BenchService.driver_options(cfg, settings)
        mode = cfg.mode.value
        objective = cfg.position_objective.value
        logger.info(f"run {cfg.run_label}: system={modal.label} method={cfg.method.value} mode={mode}")

        if cfg.method == Method.FULL:
            report = optimize_full(modal, cfg0, mode, objective, options)
        else:
            initial = None
            if cfg.basis_in:
                initial = import_basis(load_basis(cfg.basis_in, modal.n), modal.n, options.orth_drop_tol)
            driver = optimize_rbm_delta if cfg.method.guarded else optimize_rbm
            report = driver(modal, cfg0, cfg.method.enrichment, mode, objective, options, initial)
            if cfg.basis_out and report.basis is not None:
                save_basis(cfg.basis_out, report.basis)
        report.label = cfg.run_label
        return report

    @staticmethod
    def to_model(report: OptimizationReport) -> OptimizationReportModel:
        return OptimizationReportModel.model_validate(report.to_dict())

    @staticmethod
    def run(cfg: RunConfig, settings: Optional[Settings] = None) -> OptimizationReportModel:
        """
        Run one configuration; writes the output files when cfg.output is set.

        On a numerical failure with cfg.output set, the partial trace is flushed
        before the error propagates.
        """
        try:
            model = BenchService.to_model(BenchService.execute(cfg, settings))
        except DampOptError as e:
            if cfg.output and e.partial_report is not None:
                partial = BenchService.to_model(e.partial_report)
                partial.label = cfg.run_label
                partial.warnings.append(f"failed: {e}")
                BenchService.write_outputs(cfg.output, [partial])
                logger.error(f"run {cfg.run_label} failed, partial trace written to {cfg.output}")
            raise
        if cfg.output:
            BenchService.write_outputs(cfg.output, [model])
        return model

    @staticmethod
    def batch(configs: Sequence[RunConfig], threads: Optional[int] = None) -> List[BatchItem]:
        """
        Run independent configurations in a thread pool.

        Failures are captured per configuration; a failed run keeps its partial report
        when the driver had started.
        """
        workers = max(1, threads or get_settings().NUM_THREADS)

        def one(index: int, cfg: RunConfig) -> BatchItem:
            item = BatchItem(index=index, label=cfg.run_label)
            try:
                item.report = BenchService.to_model(BenchService.execute(cfg))
            except DampOptError as e:
                item.error, item.error_type = str(e), type(e).__name__
                if e.partial_report is not None:
                    item.report = BenchService.to_model(e.partial_report)
                    item.report.label = cfg.run_label
                    item.report.warnings.append(f"failed: {e}")
                logger.error(f"Config {index} ({cfg.run_label}): {e}")
            except Exception as e:
                item.error, item.error_type = str(e), type(e).__name__
                logger.exception(f"Config {index} ({cfg.run_label}) crashed")
            return item

        if workers == 1 or len(configs) == 1:
            return [one(i, c) for i, c in enumerate(configs)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda ic: one(*ic), enumerate(configs)))

    # ==================== COMPARISON ====================

    @staticmethod
    def compare(reports: Sequence[OptimizationReportModel]) -> List[ComparisonTable]:
        """
        Join reports on (system, mode) and compute errors and acceleration against the
        full-order run of each group.
        """
        groups: Dict[Tuple[str, str], List[OptimizationReportModel]] = {}
        for r in reports:
            groups.setdefault((r.system, r.mode), []).append(r)

        tables = []
        for (system, mode), members in groups.items():
            baseline = next((r for r in members if r.method == "full"), None)
            notices = []
            if baseline is None:
                notices.append("no full-order baseline: errors and acceleration omitted")
            base_time = baseline.timings.get("total") if baseline is not None else None

            columns = []
            for r in members:
                time_total = float(r.timings.get("total", float("nan")))
                col = ComparisonColumn(
                    label=r.label or r.method,
                    method=r.method,
                    time=time_total,
                    dimension=r.dimension,
                    positions=r.positions,
                    gains=r.gains,
                )
                if baseline is not None:
                    col.error_position = _relative_error(r.positions, baseline.positions)
                    col.error_gain = _relative_error(r.gains, baseline.gains)
                    if base_time is not None and time_total > 0.0:
                        col.acceleration = float(base_time) / time_total
                    else:
                        notices.append(f"{col.label}: no timing, acceleration omitted")
                columns.append(col)

            tables.append(ComparisonTable(
                system=system, mode=mode,
                baseline=(baseline.label or baseline.method) if baseline is not None else None,
                columns=columns, notices=notices,
            ))
        return tables

    # ==================== OUTPUT ====================

    @staticmethod
    def write_outputs(out_dir: str, reports: Sequence[OptimizationReportModel]) -> Dict[str, Path]:
        """
        Write results.csv, trace.csv, timings.csv, comparison.csv, table.txt and one
        JSON report per run into out_dir.
        """
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        tables = BenchService.compare(reports)
        paths = {
            "results": report_writer.write_results_csv(out / "results.csv", reports),
            "trace": report_writer.write_trace_csv(out / "trace.csv", reports),
            "timings": report_writer.write_timings_csv(out / "timings.csv", reports),
            "comparison": report_writer.write_comparison_csv(out / "comparison.csv", tables),
            "table": report_writer.write_table(out / "table.txt", tables),
        }
        seen: Dict[str, int] = {}
        for r in reports:
            stem = re.sub(r"[^A-Za-z0-9_.+-]", "_", r.label or r.method)
            seen[stem] = seen.get(stem, 0) + 1
            if seen[stem] > 1:
                stem = f"{stem}-{seen[stem]}"
            report_writer.write_report_json(out / "reports" / f"{stem}.json", r)
        logger.info(f"wrote {len(reports)} report(s) to {out}")
        return paths
