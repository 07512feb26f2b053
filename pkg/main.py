"""
MIA Shield - Main Application
HTTP surface for membership-inference defenses and attacks
"""

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from dotenv import load_dotenv
import logging

from app import __version__
from app.api import attacks, datasets, experiments, game, models
from app.config import configure_logging, get_settings
from app.models.experiment import PRESETS

# Load environment variables
load_dotenv()

configure_logging()
logger = logging.getLogger(__name__)
settings = get_settings()

# Initialize FastAPI app
app = FastAPI(
    title="MIA Shield",
    version=__version__,
    description="Split-AI and self-distillation defenses against membership inference, with the attacks that test them",
    docs_url="/docs",
    redoc_url="/redoc"
)

# CORS configuration
app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.cors_origins.split(","),
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(datasets.router, tags=["Datasets"])
app.include_router(models.router, tags=["Models"])
app.include_router(attacks.router, tags=["Attacks"])
app.include_router(game.router, tags=["Security Game"])
app.include_router(experiments.router, tags=["Experiments"])


# Root endpoint
@app.get("/")
async def root():
    """Service information and capabilities"""
    return {
        "service": "MIA Shield",
        "version": __version__,
        "tagline": "Membership-inference defenses and attacks",
        "defenses": ["undefended", "aoao", "splitai", "distilled"],
        "attacks": ["direct", "label_only", "adaptive", "indirect", "replay"],
        "presets": sorted(PRESETS),
        "endpoints": {
            "datasets": ["/datasets/generate"],
            "models": ["/models/train"],
            "attacks": ["/attacks/run", "/attacks/score"],
            "game": ["/game/run"],
            "experiments": ["/experiments/run", "/experiments/report"]
        },
        "documentation": "/docs"
    }


# Health check
@app.get("/health")
async def health():
    """Health check endpoint"""
    return {
        "status": "healthy",
        "version": __version__,
        "n_jobs": settings.n_jobs,
        "output_dir": settings.output_dir
    }


# Global exception handler
@app.exception_handler(Exception)
async def global_exception_handler(request: Request, exc: Exception):
    logger.error(f"Global exception: {str(exc)}", exc_info=True)
    return JSONResponse(
        status_code=500,
        content={"detail": {"error": "Internal server error"}}
    )


# Startup event
@app.on_event("startup")
async def startup_event():
    logger.info(f"🚀 Starting MIA Shield v{__version__}")
    logger.info(f"🧵 Parallel jobs: {settings.n_jobs}")
    logger.info(f"📁 Output directory: {settings.output_dir}")
    logger.info("✅ Ready!")


# Run with: python main.py
if __name__ == "__main__":
    import uvicorn

    uvicorn.run(
        "main:app",
        host=settings.host,
        port=settings.port,
        reload=True,
        log_level=settings.log_level.lower()
    )
