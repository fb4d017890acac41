from fastapi import FastAPI
from contextlib import asynccontextmanager
import logging

from app import __version__
from app.core.config import settings
from app.api import surrogate

# Configure logging
logging.basicConfig(level=settings.log_level)
logger = logging.getLogger(__name__)

@asynccontextmanager
async def lifespan(app: FastAPI):
    # Startup
    logger.info("Starting bi-fidelity reconstruction service...")
    if settings.surrogate_dir:
        surrogate.store.load(settings.surrogate_dir)
    else:
        logger.warning("KINETIC_UQ_SURROGATE_DIR is unset; reconstruction endpoints return 404")
    yield
    # Shutdown
    surrogate.store.clear()
    logger.info("Shutting down bi-fidelity reconstruction service...")

app = FastAPI(
    title="Kinetic UQ Surrogate Service",
    description="Online stage of the bi-fidelity surrogate for the multiscale Boltzmann equation",
    version=__version__,
    lifespan=lifespan
)

# Include API routes
app.include_router(surrogate.router, prefix="/api/v1/surrogate", tags=["surrogate"])

@app.get("/")
async def root():
    return {"message": "Kinetic UQ surrogate service is running"}

@app.get("/health")
async def health_check():
    return {"status": "healthy", "surrogate_loaded": surrogate.store.surrogate is not None}
