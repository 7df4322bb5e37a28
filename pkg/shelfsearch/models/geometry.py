import math
from enum import Enum
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

TWO_PI = 2.0 * math.pi


class Direction(str, Enum):
    LEFT = "left"
    RIGHT = "right"

    @property
    def sign(self) -> float:
        return -1.0 if self is Direction.LEFT else 1.0


class Point2(BaseModel):
    """x is lateral (positive rightward from the camera), z is depth into the shelf"""
    model_config = ConfigDict(frozen=True)

    x: float
    z: float

    @field_validator("x", "z")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("coordinates must be finite")
        return v


class Pose2(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: float = 0.0
    z: float = 0.0
    theta: float = 0.0

    @field_validator("theta")
    @classmethod
    def _wrap_theta(cls, v: float) -> float:
        wrapped = math.fmod(v, TWO_PI)
        if wrapped < 0.0:
            wrapped += TWO_PI
        # fmod can land exactly on 2*pi after the negative shift
        return 0.0 if wrapped >= TWO_PI else wrapped

    @property
    def translation(self) -> Point2:
        return Point2(x=self.x, z=self.z)

    @property
    def rotation(self) -> float:
        return self.theta

    def shifted(self, dx: float) -> "Pose2":
        return Pose2(x=self.x + dx, z=self.z, theta=self.theta)


def signed_area(vertices: np.ndarray) -> float:
    x, z = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(z, -1)) - np.dot(np.roll(x, -1), z))


def is_convex_ccw(vertices: np.ndarray, tol: float = 1e-12) -> bool:
    edges = np.roll(vertices, -1, axis=0) - vertices
    nxt = np.roll(edges, -1, axis=0)
    cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
    return bool(np.all(cross >= -tol))


class Footprint(BaseModel):
    """Convex counter-clockwise polygon in the object-local x-z frame"""
    model_config = ConfigDict(frozen=True)

    vertices: Tuple[Tuple[float, float], ...]

    @model_validator(mode="after")
    def _check_polygon(self) -> "Footprint":
        if len(self.vertices) < 3:
            raise ValueError("a footprint needs at least 3 vertices")
        arr = self.array
        if not np.all(np.isfinite(arr)):
            raise ValueError("footprint vertices must be finite")
        if signed_area(arr) <= 0.0:
            raise ValueError("footprint must be non-degenerate and counter-clockwise")
        if not is_convex_ccw(arr):
            raise ValueError("footprint must be convex")
        return self

    @property
    def array(self) -> np.ndarray:
        # Not cached: model equality and hashing must only see the vertex tuple
        return np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)

    @classmethod
    def from_array(cls, vertices: np.ndarray) -> "Footprint":
        return cls(vertices=tuple((float(x), float(z)) for x, z in vertices))

    @property
    def area(self) -> float:
        return signed_area(self.array)
