from typing import Any, Dict, List, Optional

from pydantic import BaseModel

from shelfsearch.models.scene import GenerationConfig, ShelfSpec
from shelfsearch.models.sim import RolloutConfig


class GenerateSceneRequest(BaseModel):
    generation: GenerationConfig = GenerationConfig()
    shelf: ShelfSpec = ShelfSpec()


class ValidateSceneRequest(BaseModel):
    document: Dict[str, Any]
    blade_thickness: float = 0.0


class ValidationResponse(BaseModel):
    valid: bool
    violations: List[str]


class RolloutRequest(BaseModel):
    # Either a scene document or a generation config
    document: Optional[Dict[str, Any]] = None
    generation: Optional[GenerationConfig] = None
    shelf: ShelfSpec = ShelfSpec()
    policy: str = "dar"
    config: RolloutConfig = RolloutConfig()
    include_steps: bool = True
