import json
import logging

from fastapi import APIRouter, HTTPException, status

from shelfsearch.exceptions import (
    PushPreconditionError,
    SceneFormatError,
    SceneGenerationError,
    SceneValidationError,
)
from shelfsearch.models.api import RolloutRequest
from shelfsearch.models.sim import RolloutRecord
from shelfsearch.services.policy import make_policy
from shelfsearch.services.scene import generate_scene, load_scene
from shelfsearch.services.sim import rollout

router = APIRouter(prefix="/rollouts", tags=["Rollouts"])

logger = logging.getLogger(__name__)


@router.post("", response_model=RolloutRecord)
def run_rollout(request: RolloutRequest):
    """Run one policy on one scene, given as a document or generated from a config"""
    if (request.document is None) == (request.generation is None):
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST,
                            detail="Provide exactly one of document or generation")
    # Dumping images is a CLI feature
    cfg = request.config.model_copy(update={"dump_dir": None})
    try:
        policy = make_policy(request.policy, cfg)
        if request.document is not None:
            scene = load_scene(json.dumps(request.document))
        else:
            generation = request.generation.model_copy(update={
                "blade_thickness": cfg.blade_thickness, "width_px": cfg.width_px, "height_px": cfg.height_px,
            })
            scene = generate_scene(generation, request.shelf)

        logger.info(f"Running {policy.name} rollout, max {cfg.max_steps} steps")
        record = rollout(scene, policy, cfg)
        if not request.include_steps:
            record = record.model_copy(update={"steps": []})
        return record
    except (SceneFormatError, SceneValidationError, PushPreconditionError, ValueError) as e:
        logger.error(f"Rejected rollout request: {str(e)}")
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    except SceneGenerationError as e:
        logger.error(f"Scene generation failed: {str(e)}")
        raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(e))
    except Exception as e:
        logger.error(f"Error running rollout: {str(e)}")
        raise HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=str(e))
