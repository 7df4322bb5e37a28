"""
Exact target occupancy distribution consistent with a depth observation.

Every candidate target placement on a fixed grid is rendered alone and kept when it
agrees with the observation: wherever the placed target would be frontmost it must be
the visible target, everywhere else it must sit behind the observed surface, and every
visible target pixel must be explained by it. The occupancy grid is the normalized sum
of the masks of the kept placements.

Because objects are extruded and the camera is orthographic, a placement's mask is a
band of rows (y below the target height) over the columns its footprint spans, with
one depth per column. The oracle therefore reduces the pixel test to per-column
statistics of the observation and evaluates all placements at once.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from shelfsearch import config
from shelfsearch.exceptions import BeliefError
from shelfsearch.models.geometry import Footprint, Pose2
from shelfsearch.models.scene import ObjectSpec, ShelfSpec
from shelfsearch.services.geometry import posed_vertices, vertical_line_span
from shelfsearch.services.render import DepthImage, PixelMask, image_axes

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PlacementGrid:
    shelf: ShelfSpec
    n_x: int
    n_z: int
    n_theta: int
    full_rotation: bool
    placements: Tuple[Pose2, ...]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.n_x, self.n_z, self.n_theta


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    values: np.ndarray
    flagged: bool = False

    @classmethod
    def zeros(cls, width_px: int, height_px: int) -> "OccupancyGrid":
        return cls(np.zeros((height_px, width_px)), flagged=True)


@dataclass(frozen=True, eq=False)
class OccupancyProfile:
    values: np.ndarray
    flagged: bool = False


@dataclass(frozen=True, eq=False)
class BeliefState:
    history_min: np.ndarray
    step_index: int = 0


@dataclass(frozen=True, eq=False)
class OccupancyResult:
    grid: OccupancyGrid
    n_consistent: int
    consistent: np.ndarray

    @property
    def flagged(self) -> bool:
        return self.grid.flagged


def build_placement_grid(
    shelf: ShelfSpec,
    footprint: Footprint,
    n_x: int = config.PLACEMENT_NX,
    n_z: int = config.PLACEMENT_NZ,
    n_theta: int = config.PLACEMENT_NTHETA,
    full_rotation: bool = config.PLACEMENT_FULL_ROTATION,
    wall_clearance: float = 0.0,
) -> PlacementGrid:
    """Cell-centred translations over the shelf and evenly spaced rotations, kept only
    when the posed footprint stays inside the shelf (and wall_clearance from the sides)"""
    xs = (np.arange(n_x) + 0.5) * shelf.width / n_x
    zs = (np.arange(n_z) + 0.5) * shelf.depth / n_z
    span = 2.0 * math.pi if full_rotation else math.pi
    thetas = np.arange(n_theta) * span / n_theta

    placements = []
    for x in xs:
        for z in zs:
            for theta in thetas:
                pose = Pose2(x=float(x), z=float(z), theta=float(theta))
                verts = posed_vertices(footprint, pose)
                if (verts[:, 0].min() >= wall_clearance
                        and verts[:, 0].max() <= shelf.width - wall_clearance
                        and verts[:, 1].min() >= 0.0
                        and verts[:, 1].max() <= shelf.depth):
                    placements.append(pose)
    return PlacementGrid(shelf, n_x, n_z, n_theta, full_rotation, tuple(placements))


class OccupancyOracle:
    """Precomputed per-placement column depths for one (target, grid, image size)"""

    def __init__(self, grid: PlacementGrid, footprint: Footprint, target_height: float,
                 width_px: int = config.IMAGE_WIDTH_PX, height_px: int = config.IMAGE_HEIGHT_PX):
        self.grid = grid
        self.footprint = footprint
        self.target_height = target_height
        self.width_px = width_px
        self.height_px = height_px
        _, _, xs, ys = image_axes(grid.shelf, width_px, height_px)
        self.band_rows = int(np.count_nonzero(ys <= target_height))
        # One renderer depth quantum, the same step the 16-bit image export uses
        self.tolerance = grid.shelf.back_depth / config.PGM_MAX_LEVEL

        if grid.placements:
            self.entries = np.vstack([
                vertical_line_span(posed_vertices(footprint, pose), xs)[0] for pose in grid.placements
            ])
        else:
            self.entries = np.empty((0, width_px))
        self.spans = np.isfinite(self.entries)
        logger.debug(f"Oracle ready: {len(grid.placements)} placements, {self.band_rows} target rows")

    @property
    def n_placements(self) -> int:
        return self.entries.shape[0]

    def placement_vertices(self, k: int) -> np.ndarray:
        return posed_vertices(self.footprint, self.grid.placements[k])

    def _column_checks(self, entries: np.ndarray, spans: np.ndarray,
                       obs: DepthImage, visible: PixelMask) -> np.ndarray:
        if obs.data.shape != (self.height_px, self.width_px) or visible.membership.shape != obs.data.shape:
            raise BeliefError(
                f"observation {obs.data.shape} / visible mask {visible.membership.shape} "
                f"do not match oracle image {(self.height_px, self.width_px)}"
            )
        vis = visible.membership
        if vis[self.band_rows:, :].any():
            # Visible target pixels above the target's height cannot be explained
            return np.zeros(entries.shape[0], dtype=bool)

        band_obs = obs.data[: self.band_rows, :]
        band_vis = vis[: self.band_rows, :]
        hidden_max = np.where(band_vis, -np.inf, band_obs).max(axis=0, initial=-np.inf)
        vis_min = np.where(band_vis, band_obs, np.inf).min(axis=0, initial=np.inf)
        vis_max = np.where(band_vis, band_obs, -np.inf).max(axis=0, initial=-np.inf)
        vis_cols = band_vis.any(axis=0)

        tol = self.tolerance
        behind = hidden_max[None, :] <= entries + tol
        matches = (vis_min[None, :] >= entries - tol) & (vis_max[None, :] <= entries + tol)
        column_ok = ~spans | (behind & matches)
        explained = ~(vis_cols[None, :] & ~spans)
        return (column_ok & explained).all(axis=1)

    def consistent_placements(self, obs: DepthImage, visible: PixelMask) -> np.ndarray:
        return self._column_checks(self.entries, self.spans, obs, visible)

    def evaluate(self, obs: DepthImage, visible: PixelMask) -> OccupancyResult:
        consistent = self.consistent_placements(obs, visible)
        n_consistent = int(consistent.sum())
        if n_consistent == 0:
            logger.debug("No placement is consistent with the observation")
            return OccupancyResult(OccupancyGrid.zeros(self.width_px, self.height_px), 0, consistent)

        # Fixed-order reduction keeps the normalizing sum independent of evaluation order
        coverage = self.spans[consistent].sum(axis=0, dtype=np.float64)
        values = np.zeros((self.height_px, self.width_px))
        values[: self.band_rows, :] = coverage[None, :]
        values /= values.sum()
        return OccupancyResult(OccupancyGrid(values), n_consistent, consistent)


@lru_cache(maxsize=32)
def get_oracle(
    footprint: Footprint,
    target_height: float,
    shelf: ShelfSpec,
    grid_shape: Tuple[int, int, int] = (config.PLACEMENT_NX, config.PLACEMENT_NZ, config.PLACEMENT_NTHETA),
    full_rotation: bool = config.PLACEMENT_FULL_ROTATION,
    width_px: int = config.IMAGE_WIDTH_PX,
    height_px: int = config.IMAGE_HEIGHT_PX,
) -> OccupancyOracle:
    grid = build_placement_grid(shelf, footprint, *grid_shape, full_rotation=full_rotation)
    return OccupancyOracle(grid, footprint, target_height, width_px, height_px)


def _oracle_for(target: ObjectSpec, grid: PlacementGrid, obs: DepthImage) -> OccupancyOracle:
    oracle = get_oracle(target.footprint, target.height, grid.shelf, grid.shape,
                        grid.full_rotation, obs.width_px, obs.height_px)
    if oracle.grid.placements != grid.placements:
        oracle = OccupancyOracle(grid, target.footprint, target.height, obs.width_px, obs.height_px)
    return oracle


def placement_consistent(placement: Pose2, target: ObjectSpec, obs: DepthImage, visible: PixelMask,
                         shelf: Optional[ShelfSpec] = None) -> bool:
    """Whether the target placed at `placement` agrees with the observation and visible mask"""
    shelf = shelf or ShelfSpec(width=obs.width_px * obs.pitch_x, depth=obs.back_depth,
                               height=obs.height_px * obs.pitch_y)
    grid = PlacementGrid(shelf, 1, 1, 1, False, (placement,))
    oracle = OccupancyOracle(grid, target.footprint, target.height, obs.width_px, obs.height_px)
    return bool(oracle.consistent_placements(obs, visible)[0])


def occupancy_grid(obs: DepthImage, visible: PixelMask, target: ObjectSpec, grid: PlacementGrid) -> OccupancyGrid:
    """Normalized sum of the masks of every consistent placement; flagged all-zero when none is"""
    return _oracle_for(target, grid, obs).evaluate(obs, visible).grid


def initial_belief(grid: OccupancyGrid) -> BeliefState:
    return BeliefState(history_min=grid.values.copy(), step_index=0)


def update_belief(belief: Optional[BeliefState], new_grid: OccupancyGrid) -> BeliefState:
    """Pointwise history minimum"""
    if belief is None:
        return initial_belief(new_grid)
    if belief.history_min.shape != new_grid.values.shape:
        raise BeliefError(f"belief shape {belief.history_min.shape} != grid shape {new_grid.values.shape}")
    return BeliefState(np.minimum(belief.history_min, new_grid.values), belief.step_index + 1)


def collapse_profile(belief: BeliefState) -> OccupancyProfile:
    values = belief.history_min.sum(axis=0)
    return OccupancyProfile(values, flagged=not bool(np.any(values > 0.0)))


def entropy(profile: OccupancyProfile, normalize: bool = config.ENTROPY_NORMALIZE) -> float:
    """Natural-log entropy of the column profile, renormalized unless normalize=False"""
    p = np.asarray(profile.values, dtype=np.float64)
    if np.any(p < 0.0):
        raise BeliefError("occupancy profile has negative entries")
    total = p.sum()
    if total <= 0.0:
        return 0.0
    if normalize:
        p = p / total
    nz = p[p > 0.0]
    return max(0.0, float(-(nz * np.log(nz)).sum()))
