import hashlib
import json
import logging
import math
from functools import lru_cache
from typing import List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from shelfsearch.config import CONTACT_TOLERANCE
from shelfsearch.exceptions import SceneFormatError, SceneGenerationError, SceneValidationError
from shelfsearch.models.geometry import Footprint, Pose2
from shelfsearch.models.scene import (
    GenerationConfig,
    ObjectDocument,
    ObjectKind,
    ObjectSpec,
    PoseDocument,
    Scene,
    SceneDocument,
    ShelfDocument,
    ShelfSpec,
)
from shelfsearch.services.geometry import (
    penetration_depth,
    polygons_intersect,
    posed_vertices,
    rectangle,
    regular_polygon,
)
from shelfsearch.services.occupancy import OccupancyOracle, build_placement_grid
from shelfsearch.services.render import render_depth
from shelfsearch.services.seeding import make_rng

logger = logging.getLogger(__name__)

TARGET_ID = "target"
SCENE_FORMAT = 1
# Continuous target draws tried against one set of occluders before redrawing them
_CONTINUOUS_TARGET_DRAWS = 200


def target_footprint(cfg: GenerationConfig) -> Footprint:
    return rectangle(cfg.target_side, cfg.target_side * cfg.target_aspect_ratio)


def sample_object(rng: np.random.Generator, cfg: GenerationConfig, shelf: ShelfSpec, object_id: str) -> ObjectSpec:
    """Draw one occluder: class, dimensions and pose, all uniform within the configured ranges"""
    if rng.random() < cfg.cylinder_fraction:
        radius = float(rng.uniform(*cfg.cylinder_radius_range))
        height = float(rng.uniform(*cfg.cylinder_height_range))
        footprint = regular_polygon(radius, cfg.cylinder_sides)
        kind = ObjectKind.CYLINDER
    else:
        side = float(rng.uniform(*cfg.cuboid_side_range))
        height = cfg.cuboid_height
        footprint = rectangle(side, side)
        kind = ObjectKind.CUBOID
    pose = Pose2(
        x=float(rng.uniform(0.0, shelf.width)),
        z=float(rng.uniform(0.0, shelf.depth)),
        theta=float(rng.uniform(0.0, 2.0 * math.pi)),
    )
    return ObjectSpec(id=object_id, kind=kind, footprint=footprint, height=height, pose=pose)


def _fits_shelf(verts: np.ndarray, shelf: ShelfSpec, clearance: float) -> bool:
    return bool(
        verts[:, 0].min() >= clearance
        and verts[:, 0].max() <= shelf.width - clearance
        and verts[:, 1].min() >= 0.0
        and verts[:, 1].max() <= shelf.depth
    )


def _is_free(verts: np.ndarray, placed: Sequence[np.ndarray]) -> bool:
    return not any(polygons_intersect(verts, other) for other in placed)


@lru_cache(maxsize=16)
def _target_oracle(footprint: Footprint, height: float, shelf: ShelfSpec, grid_shape, clearance: float,
                   width_px: int, height_px: int) -> OccupancyOracle:
    grid = build_placement_grid(shelf, footprint, *grid_shape, wall_clearance=clearance)
    return OccupancyOracle(grid, footprint, height, width_px, height_px)


def _strictly_hidden(oracle: OccupancyOracle, occluders: Scene, cfg: GenerationConfig) -> np.ndarray:
    """Placements whose every pixel lies strictly behind the occluder-only render"""
    obs, _ = render_depth(occluders, cfg.width_px, cfg.height_px)
    band_max = obs.data[: oracle.band_rows, :].max(axis=0, initial=-np.inf)
    return np.all(~oracle.spans | (band_max[None, :] < oracle.entries), axis=1)


class _Attempts:
    def __init__(self, cap: int):
        self.cap = cap
        self.used = 0

    def spend(self, constraint: str):
        self.used += 1
        if self.used > self.cap:
            raise SceneGenerationError(constraint, self.cap)


def generate_scene(cfg: GenerationConfig, shelf: Optional[ShelfSpec] = None) -> Scene:
    """
    Random shelf scene: occluders first (rejection-sampled for collisions and wall clearance),
    then the target, drawn uniformly among admissible poses (hidden ones when full occlusion
    is required). Deterministic for a given seed.
    """
    shelf = shelf or ShelfSpec()
    rng = make_rng(cfg.seed)
    attempts = _Attempts(cfg.retry_cap)
    t_footprint = target_footprint(cfg)
    t_height = cfg.target_side

    oracle = None
    if cfg.target_grid is not None:
        oracle = _target_oracle(t_footprint, t_height, shelf, tuple(cfg.target_grid), cfg.blade_thickness,
                                cfg.width_px, cfg.height_px)
        if oracle.n_placements == 0:
            raise SceneGenerationError("target placement grid fits inside the shelf", 0)

    while True:
        occluders: List[ObjectSpec] = []
        placed: List[np.ndarray] = []
        for i in range(cfg.n_occluders):
            while True:
                attempts.spend(f"collision-free placement of occluder {i}")
                obj = sample_object(rng, cfg, shelf, f"occluder-{i}")
                verts = posed_vertices(obj.footprint, obj.pose)
                if _fits_shelf(verts, shelf, cfg.blade_thickness) and _is_free(verts, placed):
                    occluders.append(obj)
                    placed.append(verts)
                    break

        base = Scene(shelf=shelf, objects=tuple(occluders), target_id=TARGET_ID)
        if oracle is not None:
            pose = _draw_grid_target(rng, cfg, oracle, base, placed, attempts)
        else:
            pose = _draw_continuous_target(rng, cfg, t_footprint, t_height, base, placed, attempts)
        if pose is None:
            logger.debug(f"Seed {cfg.seed}: no admissible target pose, redrawing occluders")
            continue

        target = ObjectSpec(id=TARGET_ID, kind=ObjectKind.TARGET, footprint=t_footprint,
                            height=t_height, pose=pose, is_target=True)
        scene = Scene(shelf=shelf, objects=tuple(occluders) + (target,), target_id=TARGET_ID)
        logger.debug(f"Generated scene seed={cfg.seed} with {cfg.n_occluders} occluders in {attempts.used} attempts")
        return scene


def _draw_grid_target(rng, cfg, oracle, base, placed, attempts) -> Optional[Pose2]:
    attempts.spend("target placement" + (" with full occlusion" if cfg.require_full_occlusion else ""))
    admissible = np.ones(oracle.n_placements, dtype=bool)
    if cfg.require_full_occlusion:
        admissible &= _strictly_hidden(oracle, base, cfg)
    free = [k for k in np.flatnonzero(admissible) if _is_free(oracle.placement_vertices(k), placed)]
    if not free:
        return None
    return oracle.grid.placements[free[int(rng.integers(len(free)))]]


def _draw_continuous_target(rng, cfg, footprint, height, base, placed, attempts) -> Optional[Pose2]:
    shelf = base.shelf
    for _ in range(_CONTINUOUS_TARGET_DRAWS):
        attempts.spend("target placement" + (" with full occlusion" if cfg.require_full_occlusion else ""))
        pose = Pose2(
            x=float(rng.uniform(0.0, shelf.width)),
            z=float(rng.uniform(0.0, shelf.depth)),
            theta=float(rng.uniform(0.0, 2.0 * math.pi)),
        )
        verts = posed_vertices(footprint, pose)
        if not (_fits_shelf(verts, shelf, cfg.blade_thickness) and _is_free(verts, placed)):
            continue
        if not cfg.require_full_occlusion:
            return pose
        target = ObjectSpec(id=TARGET_ID, kind=ObjectKind.TARGET, footprint=footprint,
                            height=height, pose=pose, is_target=True)
        scene = base.model_copy(update={"objects": base.objects + (target,)})
        _, masks = render_depth(scene, cfg.width_px, cfg.height_px)
        if masks[TARGET_ID].is_empty:
            return pose
    return None


def validate_scene(scene: Scene, blade_thickness: float = 0.0) -> List[str]:
    """
    Every broken scene invariant as a human-readable violation naming the object ids.
    Touching objects are allowed (pushed objects end in contact); overlap is not.
    """
    violations: List[str] = []
    shelf = scene.shelf
    tol = CONTACT_TOLERANCE

    targets = [obj.id for obj in scene.objects if obj.is_target]
    if len(targets) != 1:
        violations.append(f"target: expected exactly one target, found {len(targets)} ({', '.join(targets)})")
    ids = [obj.id for obj in scene.objects]
    if scene.target_id not in ids:
        violations.append(f"target: target_id {scene.target_id} names no object")
    elif not scene.get(scene.target_id).is_target:
        violations.append(f"target: object {scene.target_id} is named target_id but is not marked as target")
    duplicates = sorted({i for i in ids if ids.count(i) > 1})
    for dup in duplicates:
        violations.append(f"ids: object id {dup} is used more than once")

    posed = [posed_vertices(obj.footprint, obj.pose) for obj in scene.objects]
    for obj, verts in zip(scene.objects, posed):
        x_lo, x_hi = verts[:, 0].min(), verts[:, 0].max()
        z_lo, z_hi = verts[:, 1].min(), verts[:, 1].max()
        if x_lo < -tol or x_hi > shelf.width + tol or z_lo < -tol or z_hi > shelf.depth + tol:
            violations.append(f"bounds: object {obj.id} leaves the shelf")
            continue
        if x_lo < blade_thickness - tol:
            violations.append(f"clearance: object {obj.id} is closer than {blade_thickness} m to the left wall")
        if x_hi > shelf.width - blade_thickness + tol:
            violations.append(f"clearance: object {obj.id} is closer than {blade_thickness} m to the right wall")

    for i in range(len(posed)):
        for j in range(i + 1, len(posed)):
            if penetration_depth(posed[i], posed[j]) > tol:
                violations.append(f"objects intersect: {scene.objects[i].id} and {scene.objects[j].id}")
    return violations


def scene_to_document(scene: Scene) -> SceneDocument:
    return SceneDocument(
        format=SCENE_FORMAT,
        shelf=ShelfDocument(width=scene.shelf.width, depth=scene.shelf.depth, height=scene.shelf.height),
        target_id=scene.target_id,
        objects=[
            ObjectDocument(
                id=obj.id,
                kind=obj.kind,
                vertices=[tuple(v) for v in obj.footprint.vertices],
                height=obj.height,
                pose=PoseDocument(x=obj.pose.x, z=obj.pose.z, theta=obj.pose.theta),
                is_target=obj.is_target,
            )
            for obj in scene.objects
        ],
    )


def save_scene(scene: Scene) -> str:
    """Scene document as indented JSON with a fixed field order"""
    return json.dumps(scene_to_document(scene).model_dump(mode="json"), indent=2) + "\n"


def _location(error: dict) -> str:
    return ".".join(str(part) for part in error.get("loc", ())) or "document"


def scene_from_document(doc: SceneDocument) -> Scene:
    objects = []
    for i, od in enumerate(doc.objects):
        try:
            footprint = Footprint(vertices=tuple(tuple(v) for v in od.vertices))
        except ValidationError as e:
            raise SceneFormatError(e.errors()[0]["msg"], f"objects.{i}.vertices") from e
        try:
            objects.append(ObjectSpec(
                id=od.id,
                kind=od.kind,
                footprint=footprint,
                height=od.height,
                pose=Pose2(x=od.pose.x, z=od.pose.z, theta=od.pose.theta),
                is_target=od.is_target,
            ))
        except ValidationError as e:
            first = e.errors()[0]
            raise SceneFormatError(first["msg"], f"objects.{i}.{_location(first)}") from e
    try:
        shelf = ShelfSpec(width=doc.shelf.width, depth=doc.shelf.depth, height=doc.shelf.height)
    except ValidationError as e:
        first = e.errors()[0]
        raise SceneFormatError(first["msg"], f"shelf.{_location(first)}") from e
    return Scene(shelf=shelf, objects=tuple(objects), target_id=doc.target_id)


def load_scene(text: str, validate: bool = True) -> Scene:
    """Parse a scene document; structural problems raise SceneFormatError, broken invariants
    SceneValidationError"""
    try:
        doc = SceneDocument.model_validate_json(text)
    except ValidationError as e:
        first = e.errors()[0]
        raise SceneFormatError(first["msg"], _location(first)) from e
    scene = scene_from_document(doc)
    if validate:
        violations = validate_scene(scene)
        if violations:
            raise SceneValidationError(violations)
    return scene


def scene_digest(scene: Scene) -> str:
    return hashlib.sha256(save_scene(scene).encode("utf-8")).hexdigest()[:16]
