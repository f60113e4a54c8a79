"""Simulation endpoints"""

import logging
import time
import uuid

from fastapi import APIRouter, HTTPException, Query, status

from app.config import settings
from app.models.experiment import ExperimentSpec
from app.models.network import NetworkConfig
from app.models.request import OfflineRequest, SimulationRequest
from app.models.response import (
    BaselineResponse,
    ErrorDetail,
    ErrorResponse,
    HTTPErrorResponse,
    OfflineResponse,
    OfflineResult,
    SimulationResponse,
    SimulationResult,
)
from app.services.analysis_service import baseline_ds_slots
from app.services.experiment_service import run_experiment
from app.services.offline_router import route_offline
from app.services.permutation_service import uniform_permutation
from app.utils.exceptions import PopsError

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/api/v1", tags=["Simulation"])

ERROR_RESPONSES = {
    status.HTTP_400_BAD_REQUEST: {"model": HTTPErrorResponse, "description": "Invalid configuration or permutation"},
    status.HTTP_413_REQUEST_ENTITY_TOO_LARGE: {"model": HTTPErrorResponse, "description": "Network above MAX_SERVICE_N"},
    status.HTTP_500_INTERNAL_SERVER_ERROR: {"model": HTTPErrorResponse, "description": "Invariant violated"},
}


def _error(status_code: int, message: str, code: str, detail: str, request_id: str) -> HTTPException:
    body = ErrorResponse(message=message, error=ErrorDetail(code=code, detail=detail), request_id=request_id)
    return HTTPException(status_code=status_code, detail=body.model_dump())


def _check_size(d: int, g: int, request_id: str) -> None:
    if d * g > settings.max_service_n:
        raise _error(
            status.HTTP_413_REQUEST_ENTITY_TOO_LARGE,
            "Network too large",
            "NETWORK_TOO_LARGE",
            f"n = {d * g} exceeds the service limit of {settings.max_service_n}",
            request_id,
        )


@router.post(
    "/simulate",
    response_model=SimulationResponse,
    responses=ERROR_RESPONSES,
    status_code=status.HTTP_200_OK,
    summary="Randomized routing runs",
    description="Run a block of seeded randomized routing runs and return per-run rows with their aggregate",
)
def simulate(request: SimulationRequest) -> SimulationResponse:
    """
    Run randomized routing on POPS(d, g)

    Args:
        request: Network shape, protocol and run count

    Returns:
        SimulationResponse with one row per run and the aggregate

    Raises:
        HTTPException: 400 on invalid configurations, 500 on invariant violations
    """
    request_id = str(uuid.uuid4())
    start_time = time.time()
    _check_size(request.d, request.g, request_id)

    try:
        logger.info(f"[{request_id}] Simulating POPS({request.d},{request.g}) x{request.runs}")
        spec = ExperimentSpec(
            d=request.d,
            g=request.g,
            protocol=request.protocol,
            schedule=request.schedule,
            loss_policy=request.loss_policy,
            immediate_exit=request.immediate_exit,
            perm_source=request.perm_source,
            runs=request.runs,
            seed=request.seed,
            max_steps=settings.max_steps,
        )
        report = run_experiment(spec)
        processing_time_ms = (time.time() - start_time) * 1000
        logger.info(f"[{request_id}] Completed {request.runs} runs in {processing_time_ms:.2f}ms")
        return SimulationResponse(
            message="Simulation completed successfully",
            data=SimulationResult(
                rows=report.rows,
                aggregate=report.aggregate,
                losses=report.losses,
                processing_time_ms=processing_time_ms,
            ),
            request_id=request_id,
        )

    except PopsError as e:
        if e.exit_code == 1:
            logger.warning(f"[{request_id}] Rejected: {e}")
            raise _error(status.HTTP_400_BAD_REQUEST, "Invalid simulation request", e.code, str(e), request_id)
        logger.error(f"[{request_id}] Simulation failed: {e}")
        raise _error(status.HTTP_500_INTERNAL_SERVER_ERROR, "Simulation failed", e.code, str(e), request_id)

    except Exception as e:
        logger.error(f"[{request_id}] Unexpected error: {str(e)}", exc_info=True)
        raise _error(status.HTTP_500_INTERNAL_SERVER_ERROR, "Internal server error", "INTERNAL_ERROR", str(e), request_id)


@router.post(
    "/offline",
    response_model=OfflineResponse,
    responses=ERROR_RESPONSES,
    status_code=status.HTTP_200_OK,
    summary="Offline routing",
    description="Route one permutation with the edge-coloring schedule",
)
def offline(request: OfflineRequest) -> OfflineResponse:
    request_id = str(uuid.uuid4())
    _check_size(request.d, request.g, request_id)

    try:
        cfg = NetworkConfig(request.d, request.g)
        perm = request.perm if request.perm is not None else uniform_permutation(cfg.n, request.seed)
        schedule, stats = route_offline(perm, cfg)
        logger.info(f"[{request_id}] Offline routing on {cfg}: {stats.slots} slots")
        return OfflineResponse(
            message="Offline routing completed successfully",
            data=OfflineResult(
                slots=stats.slots,
                batches=schedule.batch_count,
                conflicts=sum(stats.slot_conflicts),
                schedule=schedule.dump().model_dump(),
            ),
            request_id=request_id,
        )

    except PopsError as e:
        if e.exit_code == 1:
            logger.warning(f"[{request_id}] Rejected: {e}")
            raise _error(status.HTTP_400_BAD_REQUEST, "Invalid offline request", e.code, str(e), request_id)
        logger.error(f"[{request_id}] Offline routing failed: {e}")
        raise _error(status.HTTP_500_INTERNAL_SERVER_ERROR, "Offline routing failed", e.code, str(e), request_id)


@router.get(
    "/baseline",
    response_model=BaselineResponse,
    responses={status.HTTP_400_BAD_REQUEST: ERROR_RESPONSES[status.HTTP_400_BAD_REQUEST]},
    summary="Deterministic baseline slot count",
)
def baseline(
    d: int = Query(..., ge=1, description="Processors per group"),
    g: int = Query(..., ge=1, description="Number of groups"),
) -> BaselineResponse:
    request_id = str(uuid.uuid4())
    try:
        cfg = NetworkConfig(d, g)
        return BaselineResponse(n=cfg.n, d=d, g=g, slots=baseline_ds_slots(cfg))
    except PopsError as e:
        raise _error(status.HTTP_400_BAD_REQUEST, "Invalid network", e.code, str(e), request_id)
