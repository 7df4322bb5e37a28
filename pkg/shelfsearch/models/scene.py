from enum import Enum
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, model_validator

from shelfsearch import config
from shelfsearch.models.geometry import Footprint, Pose2


class ShelfSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    width: PositiveFloat = config.SHELF_WIDTH
    depth: PositiveFloat = config.SHELF_DEPTH
    height: PositiveFloat = config.SHELF_HEIGHT

    @property
    def back_depth(self) -> float:
        # Background value of the depth image: the shelf back wall
        return self.depth


class ObjectKind(str, Enum):
    CUBOID = "cuboid"
    CYLINDER = "cylinder"
    TARGET = "target"


class ObjectSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    kind: ObjectKind
    footprint: Footprint
    height: PositiveFloat
    pose: Pose2
    is_target: bool = False

    def moved(self, dx: float) -> "ObjectSpec":
        return self.model_copy(update={"pose": self.pose.shifted(dx)})


class Scene(BaseModel):
    model_config = ConfigDict(frozen=True)

    shelf: ShelfSpec
    objects: Tuple[ObjectSpec, ...]
    target_id: str

    @property
    def target(self) -> ObjectSpec:
        return self.get(self.target_id)

    def get(self, object_id: str) -> ObjectSpec:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(object_id)

    def index_of(self, object_id: str) -> int:
        for i, obj in enumerate(self.objects):
            if obj.id == object_id:
                return i
        raise KeyError(object_id)

    def with_displacements(self, displacements: dict) -> "Scene":
        objects = tuple(
            obj.moved(displacements[obj.id]) if obj.id in displacements else obj
            for obj in self.objects
        )
        return self.model_copy(update={"objects": objects})

    def without(self, object_id: str) -> "Scene":
        objects = tuple(obj for obj in self.objects if obj.id != object_id)
        return self.model_copy(update={"objects": objects})


class GenerationConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int = Field(0, ge=0, lt=2**64)
    n_occluders: int = Field(4, ge=0)
    cuboid_side_range: Tuple[PositiveFloat, PositiveFloat] = config.CUBOID_SIDE_RANGE
    cuboid_height: PositiveFloat = config.CUBOID_HEIGHT
    cylinder_radius_range: Tuple[PositiveFloat, PositiveFloat] = config.CYLINDER_RADIUS_RANGE
    cylinder_height_range: Tuple[PositiveFloat, PositiveFloat] = config.CYLINDER_HEIGHT_RANGE
    cylinder_sides: int = Field(config.CYLINDER_SIDES, ge=3)
    cylinder_fraction: float = Field(config.CYLINDER_FRACTION, ge=0.0, le=1.0)
    target_side: PositiveFloat = config.TARGET_SIDE
    target_aspect_ratio: PositiveFloat = config.TARGET_ASPECT_RATIO
    blade_thickness: float = Field(config.BLADE_THICKNESS, ge=0.0)
    require_full_occlusion: bool = config.REQUIRE_FULL_OCCLUSION
    target_grid: Optional[Tuple[int, int, int]] = (
        config.PLACEMENT_NX, config.PLACEMENT_NZ, config.PLACEMENT_NTHETA
    )
    retry_cap: int = Field(config.GENERATION_RETRY_CAP, ge=1)
    width_px: int = Field(config.IMAGE_WIDTH_PX, ge=1)
    height_px: int = Field(config.IMAGE_HEIGHT_PX, ge=1)

    @model_validator(mode="after")
    def _check_ranges(self) -> "GenerationConfig":
        for name in ("cuboid_side_range", "cylinder_radius_range", "cylinder_height_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is empty: {lo} > {hi}")
        if self.target_grid is not None and min(self.target_grid) < 1:
            raise ValueError("target_grid dimensions must be positive")
        return self


# Scene document (wire format, "format": 1)

class PoseDocument(BaseModel):
    x: float
    z: float
    theta: float


class ObjectDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str
    kind: ObjectKind
    vertices: List[Tuple[float, float]]
    height: float
    pose: PoseDocument
    is_target: bool


class ShelfDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    width: float
    depth: float
    height: float


class SceneDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format: Literal[1]
    shelf: ShelfDocument
    target_id: str
    objects: List[ObjectDocument]
