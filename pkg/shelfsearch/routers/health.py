from fastapi import APIRouter

from shelfsearch import config
from shelfsearch.models.scene import Scene, ShelfSpec
from shelfsearch.services.render import render_depth

router = APIRouter(tags=["Health"])


@router.get("/health")
def health_check():
    """Basic API health check"""
    return {"status": "healthy", "message": "Shelf Search Simulator API is running"}


@router.get("/health/render")
def render_health_check():
    """Render an empty shelf to check the numeric stack"""
    try:
        shelf = ShelfSpec()
        image, _ = render_depth(Scene(shelf=shelf, objects=(), target_id="target"), 16, 16)
        return {
            "status": "healthy",
            "message": "Renderer is working",
            "background_ok": bool((image.data == shelf.back_depth).all()),
            "defaults": {
                "image": [config.IMAGE_WIDTH_PX, config.IMAGE_HEIGHT_PX],
                "placement_grid": [config.PLACEMENT_NX, config.PLACEMENT_NZ, config.PLACEMENT_NTHETA],
                "policies": config.POLICY_NAMES,
            },
        }
    except Exception as e:
        return {
            "status": "unhealthy",
            "message": "Renderer failed",
            "error": str(e),
        }
