"""
Pydantic models for request/response validation
Defines run configurations, system definitions, reports and API payloads
"""

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Optional, List, Dict, Any, Tuple
from datetime import datetime
from enum import Enum


# ==================== ENUMS ====================

class Method(str, Enum):
    """Optimization drivers"""
    FULL = "full"
    VF = "vf"
    VF_DELTA = "vf-delta"
    VH = "vh"
    VH_DELTA = "vh-delta"

    @property
    def enrichment(self) -> Optional[str]:
        if self in (Method.VF, Method.VF_DELTA):
            return "VF"
        if self in (Method.VH, Method.VH_DELTA):
            return "VH"
        return None

    @property
    def guarded(self) -> bool:
        return self in (Method.VF_DELTA, Method.VH_DELTA)


class Mode(str, Enum):
    """Optimized parameters"""
    POSITIONS = "positions"
    JOINT = "positions+gains"


class PositionObjectiveKind(str, Enum):
    """Treatment of continuous positions"""
    ROUNDED = "rounded"
    INTERPOLATED = "interpolated"


# ==================== BASE MODELS ====================

class BaseResponse(BaseModel):
    """Base response model"""
    success: bool = True
    message: Optional[str] = None
    timestamp: datetime = Field(default_factory=datetime.now)


# ==================== SYSTEM MODELS ====================

class SystemSpec(BaseModel):
    """Which vibrational system to build"""
    example: Optional[int] = Field(1, description="Benchmark family (1 or 2); None when file is given")
    n: Optional[int] = Field(None, description="Dimension for example 1 (even)")
    n_row: Optional[int] = Field(None, description="Masses per row for example 2")
    file: Optional[str] = Field(None, description="JSON system definition file")
    alpha: float = Field(0.005, gt=0, lt=1)
    damper_count: Optional[int] = Field(None, ge=1)
    gain_bounds: Tuple[float, float] = (1e-3, 1e6)
    b_rows: Optional[List[int]] = None
    c_cols: Optional[List[int]] = None
    full_scale: bool = Field(False, description="Allow dimensions above FULL_SCALE_N")

    @field_validator("example")
    @classmethod
    def known_example(cls, v):
        if v is not None and v not in (1, 2):
            raise ValueError("example must be 1 or 2")
        return v

    @field_validator("gain_bounds")
    @classmethod
    def positive_bounds(cls, v):
        lo, hi = v
        if lo <= 0 or lo > hi:
            raise ValueError("gain bounds must satisfy 0 < lower <= upper")
        return v

    @model_validator(mode="after")
    def check_size(self):
        if self.file is None and self.example is None:
            raise ValueError("either example or file is required")
        if self.file is None:
            if self.example == 1 and self.n is not None and (self.n < 2 or self.n % 2):
                raise ValueError("example 1 needs an even n >= 2")
            if self.example == 2 and self.n_row is not None and self.n_row < 1:
                raise ValueError("example 2 needs n_row >= 1")
        return self

    model_config = ConfigDict(
        json_schema_extra={"example": {"example": 1, "n": 100, "alpha": 0.005}}
    )


class SystemDefinition(BaseModel):
    """
    Custom system file: matrices inline or as paths to whitespace matrix text files
    (relative to the definition file).
    """
    label: str = "custom"
    M: Any
    K: Any
    B: Any
    C: Any
    alpha: float = Field(0.005, gt=0, lt=1)
    damper_count: int = Field(2, ge=1)
    gain_bounds: Tuple[float, float] = (1e-3, 1e6)


class SystemSummary(BaseModel):
    """Built system overview"""
    label: str
    n: int
    m: int
    p: int
    alpha: float
    omega_min: float
    omega_max: float
    b_rows: List[int]
    c_cols: List[int]


# ==================== RUN CONFIG ====================

class RunConfig(BaseModel):
    """One optimization run"""
    system: SystemSpec = Field(default_factory=SystemSpec)
    method: Method = Method.FULL
    mode: Mode = Mode.POSITIONS
    position_objective: PositionObjectiveKind = PositionObjectiveKind.ROUNDED
    c0: List[int] = Field(..., min_length=1, description="Initial 1-based damper positions")
    g0: Optional[List[float]] = Field(None, description="Initial gains (default 1000 each)")
    tol_opt: Optional[float] = Field(None, gt=0)
    tol_err1: Optional[float] = Field(None, gt=0)
    tol_err2: Optional[float] = Field(None, gt=0)
    max_eval: Optional[int] = Field(None, ge=1)
    max_outer_iter: Optional[int] = Field(None, ge=0)
    irka_order: Optional[int] = Field(None, ge=1)
    threads: Optional[int] = Field(None, ge=1)
    seed: int = 0
    output: Optional[str] = None
    label: Optional[str] = None
    basis_in: Optional[str] = None
    basis_out: Optional[str] = None

    @model_validator(mode="after")
    def check_dampers(self):
        if self.g0 is None:
            self.g0 = [1000.0] * len(self.c0)
        if len(self.g0) != len(self.c0):
            raise ValueError("c0 and g0 need the same length")
        if any(g <= 0 for g in self.g0):
            raise ValueError("initial gains must be positive")
        if len(set(self.c0)) != len(self.c0):
            raise ValueError("initial positions must be distinct")
        if self.method == Method.FULL and (self.basis_in or self.basis_out):
            raise ValueError("basis files apply to reduced methods only")
        return self

    @property
    def run_label(self) -> str:
        return self.label or f"{self.method.value}-{self.mode.value.replace('+', '-')}"

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "system": {"example": 1, "n": 100},
                "method": "vf",
                "mode": "positions",
                "c0": [20, 40],
                "g0": [1000, 1000],
            }
        }
    )


# ==================== REPORT MODELS ====================

class TraceEntry(BaseModel):
    """One simplex iteration"""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    outer: int = 0
    iteration: int
    n_eval: int
    f_best: float
    x_best: List[float]
    step: str


class EnrichmentRecord(BaseModel):
    """One basis event"""
    kind: str
    positions: List[int] = []
    gains: List[float] = []
    columns_added: int = 0
    dimension: int = 0


class DeltaRecordModel(BaseModel):
    """One indicator evaluation"""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    positions: List[int]
    delta: float
    relative: float
    accepted: bool


class OptimizationReportModel(BaseModel):
    """Serialized outcome of one driver run"""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    label: str = ""
    system: str = ""
    method: str
    mode: str
    position_objective: str
    n: int
    initial_positions: List[int]
    initial_gains: List[float]
    positions: List[int]
    gains: List[float]
    objective: float
    termination_reason: str
    inner_converged: bool
    outer_iterations: int
    dimension: int
    full_solves: int
    reduced_solves: int
    trace: List[TraceEntry] = []
    enrichment: List[EnrichmentRecord] = []
    delta_history: List[DeltaRecordModel] = []
    timings: Dict[str, float] = {}
    warnings: List[str] = []


# ==================== COMPARISON MODELS ====================

class ComparisonColumn(BaseModel):
    """One method in a comparison table"""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    label: str
    method: str
    time: float
    dimension: int
    positions: List[int]
    gains: List[float]
    error_position: Optional[float] = None
    error_gain: Optional[float] = None
    acceleration: Optional[float] = None


class ComparisonTable(BaseModel):
    """Reports joined on system and mode"""
    system: str
    mode: str
    baseline: Optional[str] = None
    columns: List[ComparisonColumn]
    notices: List[str] = []


# ==================== VALIDATION MODELS ====================

class PropertyResult(BaseModel):
    """Outcome of one oracle check"""
    name: str
    passed: bool
    value: Optional[float] = None
    threshold: float
    seconds: float
    error: Optional[str] = None


class ValidationSummary(BaseModel):
    """Outcome of the oracle suite"""
    passed: bool
    properties: List[PropertyResult]


# ==================== API MODELS ====================

class SystemResponse(BaseResponse):
    """Response for system construction"""
    system: SystemSummary


class RunResponse(BaseResponse):
    """Response for an optimization run"""
    report: OptimizationReportModel


class CompareRequest(BaseModel):
    """Reports to compare"""
    reports: List[OptimizationReportModel] = Field(..., min_length=1)


class CompareResponse(BaseResponse):
    """Comparison tables, one per system/mode"""
    tables: List[ComparisonTable]


class ValidateRequest(BaseModel):
    """Oracle suite options"""
    seed: int = 0


class ValidateResponse(BaseResponse):
    """Oracle suite results"""
    summary: ValidationSummary


# ==================== ERROR MODELS ====================

class ErrorDetail(BaseModel):
    """Detailed error information"""
    field: Optional[str] = None
    message: str
    type: Optional[str] = None


class ErrorResponse(BaseModel):
    """Error response model"""
    success: bool = False
    error: str
    details: Optional[List[ErrorDetail]] = None
    timestamp: datetime = Field(default_factory=datetime.now)

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "success": False,
                "error": "Validation error",
                "details": [
                    {
                        "field": "body.c0",
                        "message": "List should have at least 1 item after validation, not 0",
                        "type": "too_short"
                    }
                ],
                "timestamp": "2024-11-30T10:30:00"
            }
        }
    )


# ==================== HEALTH CHECK MODELS ====================

class HealthCheckResponse(BaseModel):
    """Health check response"""
    status: str = "healthy"
    version: str
    timestamp: datetime = Field(default_factory=datetime.now)
    services: Dict[str, str] = {
        "api": "operational",
        "solver": "unknown"
    }
