# Routers package for the shelf search simulator API

from .health import router as health_router
from .scenes import router as scenes_router
from .rollouts import router as rollouts_router

__all__ = [
    "health_router",
    "scenes_router",
    "rollouts_router",
]
