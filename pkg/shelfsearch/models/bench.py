import hashlib
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from shelfsearch import config
from shelfsearch.models.scene import GenerationConfig, ShelfSpec
from shelfsearch.models.sim import RolloutConfig


class BenchConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    base_seed: int = Field(config.BASE_SEED, ge=0, lt=2**64)
    scenes_per_cell: int = Field(config.SCENES_PER_CELL, gt=0)
    occluder_counts: List[int] = list(config.OCCLUDER_COUNTS)
    policies: List[str] = list(config.POLICY_NAMES)
    max_steps: int = Field(config.MAX_STEPS, ge=0)
    reveal_threshold: float = Field(config.REVEAL_THRESHOLD, gt=0.0, le=1.0)
    regeneration_attempts: int = Field(config.SCENE_REGENERATION_ATTEMPTS, ge=1)
    node_budget: int = Field(config.DER_NODE_BUDGET, ge=1)
    shelf: ShelfSpec = ShelfSpec()
    generation: GenerationConfig = GenerationConfig()
    rollout: RolloutConfig = RolloutConfig()
    out_dir: str = config.OUTPUT_DIR
    workers: int = Field(config.WORKERS, ge=1)
    dump_images: bool = False

    @field_validator("occluder_counts")
    @classmethod
    def _check_counts(cls, v: List[int]) -> List[int]:
        if not v:
            raise ValueError("occluder_counts must not be empty")
        if any(c < 0 for c in v):
            raise ValueError("occluder counts must be non-negative")
        return v

    @field_validator("policies")
    @classmethod
    def _check_policies(cls, v: List[str]) -> List[str]:
        if not v:
            raise ValueError("policies must not be empty")
        unknown = [p for p in v if p not in config.POLICY_NAMES]
        if unknown:
            raise ValueError(f"unknown policies {unknown}; expected a subset of {config.POLICY_NAMES}")
        return v

    def rollout_config(self) -> RolloutConfig:
        return self.rollout.model_copy(update={"max_steps": self.max_steps, "reveal_threshold": self.reveal_threshold})

    def digest(self) -> str:
        # Where results go and how many processes compute them do not change the results
        canonical = self.model_dump_json(exclude={"out_dir", "workers", "dump_images"})
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class CellStats(BaseModel):
    occluders: Optional[int] = None  # None marks the per-policy average row
    policy: str
    n_scenes: int
    n_success: int
    success_rate: float = Field(ge=0.0, le=1.0)
    mean_steps: Optional[float] = None
    std_steps: Optional[float] = None
    mean_steps_all: Optional[float] = None
    n_failures_no_action: int = 0
    n_failures_budget: int = 0
    terminations: Dict[str, int] = {}


class SceneExclusion(BaseModel):
    occluders: int
    scene_index: int
    seeds: List[int]
    reason: str


class BenchReport(BaseModel):
    config: BenchConfig
    config_digest: str
    cells: List[CellStats]
    averages: List[CellStats] = []
    exclusions: List[SceneExclusion] = []
    reference: Dict[str, Dict[str, List[float]]] = {}
    wall_clock_seconds: Optional[float] = None
