"""
DampOpt command line
Subcommands: run | compare | validate | make-system | serve
"""

from pathlib import Path
from typing import Any, Dict, List, Optional
import argparse
import json
import logging
import sys

from pydantic import ValidationError

from app.core.config import get_settings
from app.core.exceptions import ConfigError, DampOptError, InvalidInputError, NotPositiveDefiniteError
from app.models.schemas import Method, Mode, PositionObjectiveKind, RunConfig, SystemSpec
from app.services.bench_service import BenchService
from app.services.validation_service import ValidationService
from app.utils import report_writer
from app.utils.matrix_io import MatrixLoader, save_json

logger = logging.getLogger("app.cli")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

USAGE_ERRORS = {ConfigError.__name__, InvalidInputError.__name__, NotPositiveDefiniteError.__name__}


def _configure_logging() -> None:
    settings = get_settings()
    logging.basicConfig(
        level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[logging.StreamHandler(sys.stderr)],
    )


# ==================== ARGUMENTS ====================

def _add_system_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("system")
    group.add_argument("--example", type=int, choices=(1, 2))
    group.add_argument("--n", type=int, help="example 1 dimension (even)")
    group.add_argument("--n-row", dest="n_row", type=int, help="example 2 masses per row")
    group.add_argument("--system-file", dest="system_file", help="JSON system definition")
    group.add_argument("--alpha", type=float)
    group.add_argument("--damper-count", dest="damper_count", type=int)
    group.add_argument(
        "--full-scale", dest="full_scale", action="store_true",
        help="allow dimensions above FULL_SCALE_N",
    )


def _parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="dampopt",
        description="Reduced-basis optimization of external dampers in vibrational systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one or more optimization configurations")
    run.add_argument("configs", nargs="*", type=Path, help="JSON RunConfig files (batch when several)")
    _add_system_args(run)
    run.add_argument("--method", choices=[m.value for m in Method])
    run.add_argument("--mode", choices=[m.value for m in Mode])
    run.add_argument("--position-objective", dest="position_objective", choices=[p.value for p in PositionObjectiveKind])
    run.add_argument("--c0", type=int, nargs="+", help="initial 1-based positions")
    run.add_argument("--g0", type=float, nargs="+", help="initial gains")
    run.add_argument("--tol-opt", dest="tol_opt", type=float)
    run.add_argument("--tol-err1", dest="tol_err1", type=float)
    run.add_argument("--tol-err2", dest="tol_err2", type=float)
    run.add_argument("--max-eval", dest="max_eval", type=int)
    run.add_argument("--max-outer-iter", dest="max_outer_iter", type=int)
    run.add_argument("--irka-order", dest="irka_order", type=int)
    run.add_argument("--threads", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--label")
    run.add_argument("--basis-in", dest="basis_in")
    run.add_argument("--basis-out", dest="basis_out")
    run.add_argument("--output", help="output directory")

    compare = sub.add_parser("compare", help="compare JSON reports")
    compare.add_argument("reports", nargs="+", type=Path)
    compare.add_argument("--output", help="directory for comparison.csv and table.txt")

    validate = sub.add_parser("validate", help="run the oracle suite")
    validate.add_argument("--seed", type=int, default=0)
    validate.add_argument("--out-json", dest="out_json", type=Path)

    make = sub.add_parser("make-system", help="build a system and print its summary")
    _add_system_args(make)
    make.add_argument("--output", help="directory for matrix files and system.json")

    serve = sub.add_parser("serve", help="start the HTTP API")
    serve.add_argument("--host", default="0.0.0.0")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--reload", action="store_true")

    return parser.parse_args(argv)


def _system_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    over = {
        "example": args.example,
        "n": args.n,
        "n_row": args.n_row,
        "file": args.system_file,
        "alpha": args.alpha,
        "damper_count": args.damper_count,
        "full_scale": True if args.full_scale else None,
    }
    over = {k: v for k, v in over.items() if v is not None}
    if "file" in over:
        over["example"] = None
    return over


def _run_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    over: Dict[str, Any] = {
        key: getattr(args, key)
        for key in (
            "method", "mode", "position_objective", "c0", "g0", "tol_opt", "tol_err1",
            "tol_err2", "max_eval", "max_outer_iter", "irka_order", "threads", "seed",
            "label", "basis_in", "basis_out",
        )
    }
    system = _system_overrides(args)
    if system:
        over["system"] = system
    return {k: v for k, v in over.items() if v is not None}


def _system_spec(args: argparse.Namespace) -> SystemSpec:
    try:
        return SystemSpec.model_validate(_system_overrides(args))
    except ValidationError as e:
        raise ConfigError(f"Invalid system options: {e}") from e


# ==================== COMMANDS ====================

def _cmd_run(args: argparse.Namespace) -> int:
    settings = get_settings()
    overrides = _run_overrides(args)
    if args.configs:
        configs = [BenchService.load_config(str(p), overrides) for p in args.configs]
    else:
        if "c0" not in overrides:
            raise ConfigError("--c0 is required when no configuration file is given")
        try:
            configs = [RunConfig.model_validate(overrides)]
        except ValidationError as e:
            raise ConfigError(f"Invalid run options: {e}") from e

    out_dir = args.output or (configs[0].output if len(configs) == 1 else None) or settings.OUTPUT_DIR
    configs = [c.model_copy(update={"output": None}) for c in configs]

    items = BenchService.batch(configs, threads=args.threads if len(configs) > 1 else 1)
    reports = [i.report for i in items if i.report is not None]
    if reports:
        BenchService.write_outputs(out_dir, reports)
    finished = [i.report for i in items if i.success]
    for table in BenchService.compare(finished):
        print(report_writer.render_table(table))

    failed = [i for i in items if not i.success]
    for item in failed:
        print(f"run {item.label} failed: {item.error_type}: {item.error}", file=sys.stderr)
    if not failed:
        return EXIT_OK
    if any(i.error_type in USAGE_ERRORS for i in failed):
        return EXIT_USAGE
    return EXIT_FAILURE


def _cmd_compare(args: argparse.Namespace) -> int:
    reports = []
    for path in args.reports:
        if not path.exists():
            raise ConfigError(f"Report not found: {path}")
        try:
            reports.append(report_writer.read_report_json(path))
        except ValidationError as e:
            raise ConfigError(f"Invalid report {path}: {e}") from e
    tables = BenchService.compare(reports)
    for table in tables:
        print(report_writer.render_table(table))
    if args.output:
        out = Path(args.output)
        report_writer.write_comparison_csv(out / "comparison.csv", tables)
        report_writer.write_table(out / "table.txt", tables)
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    summary = ValidationService.validate(seed=args.seed)
    for prop in summary.properties:
        shown = f"{prop.value:.3e}" if prop.value is not None else prop.error
        status = "PASS" if prop.passed else "FAIL"
        print(f"{status}  {prop.name:<36} {shown} (threshold {prop.threshold:.0e}, {prop.seconds:.2f}s)")
    print("all properties pass" if summary.passed else "some properties FAILED")
    if args.out_json is not None:
        args.out_json.parent.mkdir(parents=True, exist_ok=True)
        args.out_json.write_text(summary.model_dump_json(indent=2), encoding="utf-8")
    return EXIT_OK if summary.passed else EXIT_FAILURE


def _cmd_make_system(args: argparse.Namespace) -> int:
    spec = _system_spec(args)
    phys, modal = BenchService.build_system(spec)
    summary = BenchService.summarize(phys, modal)
    print(json.dumps(summary.model_dump(), indent=2))
    if args.output:
        out = Path(args.output)
        for name in ("M", "K", "B", "C"):
            MatrixLoader.save(str(out / f"{name}.txt"), getattr(phys, name), header=f"{modal.label} {name}")
        save_json(str(out / "system.json"), {
            "label": modal.label,
            "M": "M.txt", "K": "K.txt", "B": "B.txt", "C": "C.txt",
            "alpha": modal.alpha,
            "damper_count": modal.ell,
            "gain_bounds": list(modal.gain_bounds),
        })
        logger.info(f"system files written to {out}")
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("app.main:app", host=args.host, port=args.port, reload=args.reload, log_level="info")
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "compare": _cmd_compare,
    "validate": _cmd_validate,
    "make-system": _cmd_make_system,
    "serve": _cmd_serve,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = _parse_args(argv)
    _configure_logging()
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InvalidInputError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DampOptError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    raise SystemExit(main())
