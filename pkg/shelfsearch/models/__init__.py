# Models package for the shelf search simulator

from .geometry import Direction, Point2, Pose2, Footprint
from .scene import ShelfSpec, ObjectKind, ObjectSpec, Scene, GenerationConfig, SceneDocument
from .sim import HaltReason, TerminationReason, PushAction, PushOutcome, RolloutConfig, StepRecord, RolloutRecord
from .policy import PolicyConfig
from .bench import BenchConfig, CellStats, SceneExclusion, BenchReport
from .api import GenerateSceneRequest, ValidateSceneRequest, ValidationResponse, RolloutRequest

__all__ = [
    "Direction", "Point2", "Pose2", "Footprint",
    "ShelfSpec", "ObjectKind", "ObjectSpec", "Scene", "GenerationConfig", "SceneDocument",
    "HaltReason", "TerminationReason", "PushAction", "PushOutcome", "RolloutConfig", "StepRecord", "RolloutRecord",
    "PolicyConfig",
    "BenchConfig", "CellStats", "SceneExclusion", "BenchReport",
    "GenerateSceneRequest", "ValidateSceneRequest", "ValidationResponse", "RolloutRequest",
]
