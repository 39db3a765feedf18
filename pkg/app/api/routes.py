"""
API Routes - All endpoint definitions
Handles HTTP requests and returns responses
"""

from fastapi import APIRouter, HTTPException, status
from starlette.concurrency import run_in_threadpool
import logging

from app.models.schemas import (
    SystemSpec, SystemResponse,
    RunConfig, RunResponse,
    CompareRequest, CompareResponse,
    ValidateRequest, ValidateResponse,
    HealthCheckResponse, ErrorResponse,
)
from app.services.bench_service import BenchService
from app.services.validation_service import ValidationService
from app.core.config import get_settings
from app.core.exceptions import DampOptError

logger = logging.getLogger(__name__)
settings = get_settings()

# Create router
router = APIRouter()

ERROR_RESPONSES = {
    400: {"model": ErrorResponse, "description": "Invalid request or numerical failure"},
    500: {"model": ErrorResponse, "description": "Server error"},
}


def _bad_request(e: Exception, what: str) -> HTTPException:
    logger.error(f"Validation error in {what}: {str(e)}")
    return HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))


def _server_error(e: Exception, what: str) -> HTTPException:
    logger.exception(f"Error in {what}: {str(e)}")
    return HTTPException(
        status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
        detail=f"{what} failed: {str(e)}",
    )


# ==================== HEALTH CHECK ====================

@router.get(
    "/health",
    response_model=HealthCheckResponse,
    tags=["Health"],
    summary="Health check endpoint"
)
async def health_check():
    """
    Check API health status.
    """
    return HealthCheckResponse(
        status="healthy",
        version=settings.APP_VERSION,
        services={
            "api": "operational",
            "solver": "operational",
        }
    )


# ==================== SYSTEMS ====================

@router.post(
    "/systems",
    response_model=SystemResponse,
    tags=["Systems"],
    summary="Build a vibrational system and summarize it",
    responses=ERROR_RESPONSES,
)
async def make_system(request: SystemSpec):
    """
    Build one of the benchmark systems (or a file-defined one) and return its
    dimension, eigenfrequency range and input/output placements.
    """
    try:
        phys, modal = await run_in_threadpool(BenchService.build_system, request)
        return SystemResponse(
            message=f"System {modal.label} built",
            system=BenchService.summarize(phys, modal),
        )
    except (DampOptError, ValueError) as e:
        raise _bad_request(e, "system construction")
    except Exception as e:
        raise _server_error(e, "System construction")


# ==================== RUNS ====================

@router.post(
    "/runs",
    response_model=RunResponse,
    tags=["Optimization"],
    summary="Run one damper optimization",
    responses=ERROR_RESPONSES,
)
async def run_optimization(request: RunConfig):
    """
    Run the configured driver (full, vf, vf-delta, vh, vh-delta) and return the report.

    File outputs (output, basis_in, basis_out) are available from the command line only.
    """
    if request.output or request.basis_in or request.basis_out:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail="output and basis files are not available through the API",
        )
    try:
        logger.info(f"Run requested: method={request.method.value} mode={request.mode.value} c0={request.c0}")
        report = await run_in_threadpool(BenchService.run, request)
        return RunResponse(
            message=f"Optimization finished: {report.termination_reason}",
            report=report,
        )
    except (DampOptError, ValueError) as e:
        raise _bad_request(e, "optimization run")
    except Exception as e:
        raise _server_error(e, "Optimization run")


# ==================== COMPARISON ====================

@router.post(
    "/compare",
    response_model=CompareResponse,
    tags=["Optimization"],
    summary="Compare optimization reports",
    responses=ERROR_RESPONSES,
)
async def compare_reports(request: CompareRequest):
    """
    Join reports on system and mode; errors and acceleration are computed against the
    full-order run of each group.
    """
    try:
        tables = BenchService.compare(request.reports)
        return CompareResponse(
            message=f"{len(tables)} comparison table(s)",
            tables=tables,
        )
    except (DampOptError, ValueError) as e:
        raise _bad_request(e, "comparison")
    except Exception as e:
        raise _server_error(e, "Comparison")


# ==================== VALIDATION ====================

@router.post(
    "/validate",
    response_model=ValidateResponse,
    tags=["Validation"],
    summary="Run the oracle suite",
    responses=ERROR_RESPONSES,
)
async def validate(request: ValidateRequest):
    """
    Compare the structured solvers with dense brute-force computations on small
    random instances.
    """
    try:
        summary = await run_in_threadpool(ValidationService.validate, request.seed)
        return ValidateResponse(
            success=summary.passed,
            message="All properties pass" if summary.passed else "Some properties failed",
            summary=summary,
        )
    except Exception as e:
        raise _server_error(e, "Validation")
