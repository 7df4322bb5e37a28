import json
import logging

from fastapi import APIRouter, HTTPException, status

from shelfsearch.exceptions import SceneFormatError, SceneGenerationError
from shelfsearch.models.api import GenerateSceneRequest, ValidateSceneRequest, ValidationResponse
from shelfsearch.services.scene import generate_scene, load_scene, scene_to_document, validate_scene

router = APIRouter(prefix="/scenes", tags=["Scenes"])

logger = logging.getLogger(__name__)


@router.post("/generate")
def create_scene(request: GenerateSceneRequest):
    """Generate a random scene and return its document"""
    try:
        scene = generate_scene(request.generation, request.shelf)
        logger.info(f"Generated scene with seed {request.generation.seed}, {request.generation.n_occluders} occluders")
        return scene_to_document(scene).model_dump(mode="json")
    except SceneGenerationError as e:
        logger.error(f"Scene generation failed: {str(e)}")
        raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(e))
    except Exception as e:
        logger.error(f"Error generating scene: {str(e)}")
        raise HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=str(e))


@router.post("/validate", response_model=ValidationResponse)
def check_scene(request: ValidateSceneRequest):
    """List every violated scene invariant"""
    try:
        scene = load_scene(json.dumps(request.document), validate=False)
        violations = validate_scene(scene, request.blade_thickness)
        return ValidationResponse(valid=not violations, violations=violations)
    except SceneFormatError as e:
        logger.error(f"Malformed scene document: {str(e)}")
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    except Exception as e:
        logger.error(f"Error validating scene: {str(e)}")
        raise HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=str(e))
