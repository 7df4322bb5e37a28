import logging

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from shelfsearch.config import (
    API_HOST,
    API_PORT,
    API_TITLE,
    API_VERSION,
    CORS_ALLOW_CREDENTIALS,
    CORS_ALLOW_HEADERS,
    CORS_ALLOW_METHODS,
    CORS_ORIGINS,
    LOG_LEVEL,
)
from shelfsearch.routers import health_router, rollouts_router, scenes_router

logging.basicConfig(level=getattr(logging, LOG_LEVEL))

# Create FastAPI application
app = FastAPI(title=API_TITLE, version=API_VERSION)

# Add CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=CORS_ORIGINS,
    allow_credentials=CORS_ALLOW_CREDENTIALS,
    allow_methods=CORS_ALLOW_METHODS,
    allow_headers=CORS_ALLOW_HEADERS,
)

# Include routers
app.include_router(health_router)
app.include_router(scenes_router)
app.include_router(rollouts_router)


# Root endpoint
@app.get("/")
def read_root():
    return {
        "message": "Welcome to the Shelf Search Simulator API",
        "version": API_VERSION,
        "docs": "/docs",
        "redoc": "/redoc"
    }


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host=API_HOST, port=API_PORT)
