"""
Report writers - comparison tables, result/trace/timing CSV files and JSON reports
"""

from typing import Any, Dict, Iterable, List, Optional, Sequence
import csv
import logging
from pathlib import Path

from app.models.schemas import ComparisonTable, OptimizationReportModel

logger = logging.getLogger(__name__)

RESULT_FIELDS = [
    "label", "system", "method", "mode", "position_objective", "n",
    "initial_positions", "initial_gains", "positions", "gains", "objective",
    "termination_reason", "inner_converged", "outer_iterations", "dimension",
    "full_solves", "reduced_solves",
]
TRACE_FIELDS = ["label", "outer", "iteration", "n_eval", "f_best", "x_best", "step"]
TIMING_FIELDS = ["label", "basis", "optimization", "total"]
COMPARISON_FIELDS = [
    "system", "mode", "label", "method", "time", "dimension", "positions", "gains",
    "error_position", "error_gain", "acceleration",
]


def fmt_float(val: Optional[float]) -> str:
    """Round-trip exact float text for machine-readable files."""
    if val is None:
        return ""
    return format(float(val), ".17g")


def fmt_list(values: Sequence[Any]) -> str:
    return ";".join(fmt_float(v) if isinstance(v, float) else str(v) for v in values)


def fmt(val: Any, digits: int = 4) -> str:
    """Format a value for the human-readable table, '--' for None."""
    if val is None:
        return "--"
    if isinstance(val, float):
        return f"{val:.{digits}g}"
    if isinstance(val, (list, tuple)):
        return ", ".join(fmt(v, digits) for v in val)
    return str(val)


# ==================== CSV ====================

def _write_rows(path: Path, fieldnames: List[str], rows: Iterable[Dict[str, Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path


def result_row(report: OptimizationReportModel) -> Dict[str, Any]:
    return {
        "label": report.label,
        "system": report.system,
        "method": report.method,
        "mode": report.mode,
        "position_objective": report.position_objective,
        "n": report.n,
        "initial_positions": fmt_list(report.initial_positions),
        "initial_gains": fmt_list([float(g) for g in report.initial_gains]),
        "positions": fmt_list(report.positions),
        "gains": fmt_list([float(g) for g in report.gains]),
        "objective": fmt_float(report.objective),
        "termination_reason": report.termination_reason,
        "inner_converged": int(report.inner_converged),
        "outer_iterations": report.outer_iterations,
        "dimension": report.dimension,
        "full_solves": report.full_solves,
        "reduced_solves": report.reduced_solves,
    }


def write_results_csv(path: Path, reports: Sequence[OptimizationReportModel]) -> Path:
    """One row per run; contains no wall-clock values so reruns are byte-identical."""
    return _write_rows(Path(path), RESULT_FIELDS, (result_row(r) for r in reports))


def write_trace_csv(path: Path, reports: Sequence[OptimizationReportModel]) -> Path:
    rows = (
        {
            "label": r.label,
            "outer": t.outer,
            "iteration": t.iteration,
            "n_eval": t.n_eval,
            "f_best": fmt_float(t.f_best),
            "x_best": fmt_list([float(v) for v in t.x_best]),
            "step": t.step,
        }
        for r in reports
        for t in r.trace
    )
    return _write_rows(Path(path), TRACE_FIELDS, rows)


def write_timings_csv(path: Path, reports: Sequence[OptimizationReportModel]) -> Path:
    rows = (
        {"label": r.label, **{k: fmt_float(r.timings.get(k)) for k in TIMING_FIELDS[1:]}}
        for r in reports
    )
    return _write_rows(Path(path), TIMING_FIELDS, rows)


def write_comparison_csv(path: Path, tables: Sequence[ComparisonTable]) -> Path:
    """Every number shown by render_table, at full precision."""
    rows = (
        {
            "system": t.system,
            "mode": t.mode,
            "label": c.label,
            "method": c.method,
            "time": fmt_float(c.time),
            "dimension": c.dimension,
            "positions": fmt_list(c.positions),
            "gains": fmt_list([float(g) for g in c.gains]),
            "error_position": fmt_float(c.error_position),
            "error_gain": fmt_float(c.error_gain),
            "acceleration": fmt_float(c.acceleration),
        }
        for t in tables
        for c in t.columns
    )
    return _write_rows(Path(path), COMPARISON_FIELDS, rows)


def write_report_json(path: Path, report: OptimizationReportModel) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    return path


def read_report_json(path: Path) -> OptimizationReportModel:
    return OptimizationReportModel.model_validate_json(Path(path).read_text(encoding="utf-8"))


# ==================== TABLE ====================

def render_table(table: ComparisonTable) -> str:
    """
    Plain-text table with one column per method and the rows
    Time / Dimension / Position / Gain / Error position / Error gain / Acceleration.
    """
    header = ["", *[c.label for c in table.columns]]
    rows = [
        ["Time", *[fmt(c.time) for c in table.columns]],
        ["Dimension", *[str(c.dimension) for c in table.columns]],
        ["Position", *[fmt(c.positions) for c in table.columns]],
        ["Gain", *[fmt([float(g) for g in c.gains], 5) for c in table.columns]],
        ["Error position", *[fmt(c.error_position, 2) for c in table.columns]],
        ["Error gain", *[fmt(c.error_gain, 2) for c in table.columns]],
        ["Acceleration", *[fmt(c.acceleration, 3) for c in table.columns]],
    ]
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]

    def line(cells: List[str]) -> str:
        return "  ".join(cell.ljust(w) for cell, w in zip(cells, widths)).rstrip()

    out = [f"{table.system} ({table.mode})", line(header), line(["-" * w for w in widths])]
    out.extend(line(r) for r in rows)
    out.extend(f"note: {n}" for n in table.notices)
    return "\n".join(out) + "\n"


def write_table(path: Path, tables: Sequence[ComparisonTable]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(render_table(t) for t in tables), encoding="utf-8")
    return path
