"""FastAPI application entry point"""

import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from app import __version__
from app.api import health, simulation
from app.config import settings
from app.models.experiment import Protocol
from app.models.network import NetworkConfig
from app.services.experiment_service import engine_self_check
from app.services.sorting_service import get_sorter
from app.utils.exceptions import PopsError

logging.basicConfig(
    level=getattr(logging, settings.log_level.upper()),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)

logger = logging.getLogger(__name__)


def warm_sorting_plan(g: int) -> bool:
    """Compile the POPS(g, g) sorting plan ahead of the first request"""
    if g * g > settings.max_service_n:
        return False
    try:
        get_sorter(NetworkConfig(g, g))
    except PopsError as e:
        logger.info(f"No sorting plan for g = {g}: {e}")
        return False
    logger.info(f"Sorting plan for POPS({g},{g}) compiled")
    return True


@asynccontextmanager
async def lifespan(app: FastAPI):
    """
    Run the engine self-check and compile the default sorting plan on startup
    """
    logger.info(f"Starting {settings.app_name} v{__version__}")
    logger.info(f"Default network: POPS({settings.d},{settings.g}), protocol {settings.protocol}")
    logger.info(f"Largest served network: n = {settings.max_service_n}")

    app.state.engine_ok = engine_self_check()
    if not app.state.engine_ok:
        logger.error("Engine self-check failed; readiness will report not_ready")
    warm_sorting_plan(settings.g)

    yield

    get_sorter.cache_clear()
    logger.info("Application shutdown completed")


app = FastAPI(
    title=settings.app_name,
    description="Simulator for permutation routing on Partitioned Optical Passive Star networks",
    version=__version__,
    lifespan=lifespan,
    docs_url="/docs" if settings.debug else None,
    redoc_url="/redoc" if settings.debug else None,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(health.router)
app.include_router(simulation.router)


@app.get("/", tags=["Root"])
async def root():
    """Service information"""
    return {
        "service": settings.app_name,
        "version": __version__,
        "status": "running",
        "routers": ["randomized", "offline", "sorting"],
        "protocols": [p.value for p in Protocol],
        "docs": "/docs" if settings.debug else "disabled",
    }


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(
        "app.main:app",
        host=settings.host,
        port=settings.port,
        workers=settings.workers,
        reload=settings.debug,
        log_level=settings.log_level.lower()
    )
