"""Response data models"""

from typing import List, Optional

from pydantic import BaseModel, Field

from app.models.report import AggregateStats, ReportRow


class SimulationResult(BaseModel):
    """Rows and aggregate of a simulation block"""

    rows: List[ReportRow] = Field(default_factory=list, description="One record per run")
    aggregate: AggregateStats = Field(..., description="Mean, sigma and max across runs")
    losses: int = Field(default=0, description="LOSS_DETECTED events across runs")
    processing_time_ms: float = Field(..., description="Processing time in milliseconds")


class SimulationResponse(BaseModel):
    """Success response wrapper"""

    success: bool = Field(default=True, description="Operation success status")
    message: str = Field(..., description="Response message")
    data: Optional[SimulationResult] = Field(None, description="Simulation result data")
    request_id: str = Field(..., description="Unique request identifier")


class OfflineResult(BaseModel):
    """Offline routing outcome"""

    slots: int = Field(..., description="Slots used")
    batches: int = Field(..., description="Batches of g colors")
    conflicts: int = Field(..., description="Conflicts observed by the engine")
    schedule: dict = Field(..., description="Per-packet itineraries")


class OfflineResponse(BaseModel):
    success: bool = Field(default=True, description="Operation success status")
    message: str = Field(..., description="Response message")
    data: Optional[OfflineResult] = Field(None, description="Offline routing result")
    request_id: str = Field(..., description="Unique request identifier")


class BaselineResponse(BaseModel):
    """Deterministic baseline slot count"""

    n: int
    d: int
    g: int
    slots: int = Field(..., description="Slot count of the deterministic baseline router")


class ErrorDetail(BaseModel):
    """Error details"""

    code: str = Field(..., description="Error code")
    detail: str = Field(..., description="Detailed error message")


class ErrorResponse(BaseModel):
    """Error response wrapper"""

    success: bool = Field(default=False, description="Operation success status")
    message: str = Field(..., description="Error message")
    error: ErrorDetail = Field(..., description="Error details")
    request_id: str = Field(..., description="Unique request identifier")


class HTTPErrorResponse(BaseModel):
    """Body of an HTTPException raised by the API routes"""

    detail: ErrorResponse


class HealthResponse(BaseModel):
    """Health check response"""

    status: str = Field(..., description="Service status")
    version: str = Field(..., description="Application version")


class ReadinessResponse(BaseModel):
    """Readiness check response"""

    status: str = Field(..., description="Service status")
    engine_ok: bool = Field(..., description="All routers passed the POPS(2,2) self-check")
    sorting_plans_cached: int = Field(..., ge=0, description="Compiled sorting plans held in memory")
    max_service_n: int = Field(..., description="Largest network the service will simulate")
    version: str = Field(..., description="Application version")
