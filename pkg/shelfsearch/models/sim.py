from enum import Enum
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from shelfsearch import config
from shelfsearch.models.geometry import Direction, Point2


class HaltReason(str, Enum):
    WALL = "wall"
    TARGET_CONTACT = "target_contact"
    DISTANCE_EXHAUSTED = "distance_exhausted"


class TerminationReason(str, Enum):
    REVEALED = "revealed"
    STEP_BUDGET = "step_budget"
    NO_FEASIBLE_ACTION = "no_feasible_action"
    # The rollout raised; only benchmark records carry it
    ERROR = "error"


class PushAction(BaseModel):
    """Lateral push: direction, distance, and blade insertion point (x lateral, z insertion depth)"""
    model_config = ConfigDict(frozen=True)

    direction: Direction
    distance: float = Field(ge=0.0)
    start: Point2
    segment_id: Optional[int] = None


class PushOutcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    moved: List[Tuple[str, float]]
    halted_by: HaltReason
    realized_distance: float = Field(ge=0.0)
    pushed_id: Optional[str] = None

    def displacement_of(self, object_id: str) -> float:
        for oid, dx in self.moved:
            if oid == object_id:
                return dx
        return 0.0


class RolloutConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_steps: int = Field(config.MAX_STEPS, ge=0)
    reveal_threshold: float = Field(config.REVEAL_THRESHOLD, gt=0.0, le=1.0)
    blade_thickness: float = Field(config.BLADE_THICKNESS, ge=0.0)
    width_px: int = Field(config.IMAGE_WIDTH_PX, ge=1)
    height_px: int = Field(config.IMAGE_HEIGHT_PX, ge=1)
    discontinuity_threshold: float = Field(config.DISCONTINUITY_THRESHOLD, gt=0.0)
    placement_grid: Tuple[int, int, int] = (config.PLACEMENT_NX, config.PLACEMENT_NZ, config.PLACEMENT_NTHETA)
    full_rotation: bool = config.PLACEMENT_FULL_ROTATION
    target_contact_policy: Literal["halt", "push_through"] = config.TARGET_CONTACT_POLICY
    entropy_normalize: bool = config.ENTROPY_NORMALIZE
    dump_dir: Optional[str] = None


class StepRecord(BaseModel):
    step: int
    observation_digest: str
    action: Optional[PushAction] = None
    pushed_segment: Optional[int] = None
    entropy_before: float
    entropy_after: Optional[float] = None
    visible_fraction: float
    outcome: Optional[PushOutcome] = None
    rejected_actions: int = 0
    n_consistent: int = 0


class RolloutRecord(BaseModel):
    policy: str
    scene_digest: str
    success: bool
    steps_taken: int = Field(ge=0)
    termination_reason: TerminationReason
    final_visible_fraction: float
    steps: List[StepRecord] = []
    metadata: Dict[str, object] = {}
