"""Health check endpoints"""

from fastapi import APIRouter, Request, Response, status

from app import __version__
from app.config import settings
from app.models.response import HealthResponse, ReadinessResponse
from app.services.experiment_service import engine_self_check
from app.services.sorting_service import get_sorter

router = APIRouter(tags=["Health"])


@router.get(
    "/health",
    response_model=HealthResponse,
    status_code=status.HTTP_200_OK,
    summary="Health check",
    description="Liveness check; does not touch the simulator",
)
def health_check() -> HealthResponse:
    return HealthResponse(status="healthy", version=__version__)


@router.get(
    "/health/ready",
    response_model=ReadinessResponse,
    status_code=status.HTTP_200_OK,
    summary="Readiness check",
    description="Reports the startup self-check of the slot engine and the routers",
)
def readiness_check(request: Request, response: Response) -> ReadinessResponse:
    """
    Readiness check endpoint

    Runs the self-check on first use when the application started without its lifespan.

    Returns:
        ReadinessResponse with the self-check result and cache state; 503 when the check failed
    """
    engine_ok = getattr(request.app.state, "engine_ok", None)
    if engine_ok is None:
        engine_ok = engine_self_check()
        request.app.state.engine_ok = engine_ok
    if not engine_ok:
        response.status_code = status.HTTP_503_SERVICE_UNAVAILABLE

    return ReadinessResponse(
        status="ready" if engine_ok else "not_ready",
        engine_ok=engine_ok,
        sorting_plans_cached=get_sorter.cache_info().currsize,
        max_service_n=settings.max_service_n,
        version=__version__,
    )
