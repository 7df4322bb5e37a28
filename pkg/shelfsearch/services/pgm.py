"""
16-bit PGM dumps of observations, occupancy grids and belief profiles.

Images are written top-down, so the shelf floor (row 0 of the arrays) ends up at the
bottom of the picture.
"""
import logging
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from shelfsearch.config import PGM_MAX_LEVEL
from shelfsearch.services.occupancy import OccupancyGrid
from shelfsearch.services.render import DepthImage

logger = logging.getLogger(__name__)

# Height in pixels of each profile band drawn under the depth image
PROFILE_BAND_PX = 32


def _save(path: Path, levels: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # int32 arrays become mode "I", which PPM saves as 16-bit big-endian P5
    pixels = np.clip(np.flipud(levels), 0, PGM_MAX_LEVEL).astype(np.int32)
    Image.fromarray(pixels).save(path, format="PPM")
    logger.debug(f"Wrote {pixels.shape[1]}x{pixels.shape[0]} PGM to {path}")
    return path


def depth_levels(depth: DepthImage) -> np.ndarray:
    """Depth quantized to 16-bit levels, the back wall at full scale"""
    return np.rint(depth.data / depth.back_depth * PGM_MAX_LEVEL).astype(np.int64)


def write_pgm(path: Path, depth: DepthImage) -> Path:
    return _save(path, depth_levels(depth))


def write_occupancy_pgm(path: Path, grid: OccupancyGrid) -> Path:
    """Occupancy grid scaled so its largest value is full white"""
    peak = grid.values.max(initial=0.0)
    levels = np.zeros_like(grid.values) if peak <= 0.0 else grid.values / peak * PGM_MAX_LEVEL
    return _save(path, np.rint(levels))


def _profile_band(profile: Optional[np.ndarray], width_px: int, scale: float) -> np.ndarray:
    band = np.zeros((PROFILE_BAND_PX, width_px))
    if profile is None or scale <= 0.0:
        return band
    heights = np.rint(np.asarray(profile) / scale * PROFILE_BAND_PX).astype(int)
    rows = np.arange(PROFILE_BAND_PX)[:, None]
    band[rows < heights[None, :]] = PGM_MAX_LEVEL
    return band


def write_profile_overlay_pgm(
    path: Path,
    depth: DepthImage,
    previous: Optional[np.ndarray],
    current: Optional[np.ndarray],
    history_min: Optional[np.ndarray],
) -> Path:
    """
    Depth image with three bar-chart bands underneath: the previous step's profile, the
    current oracle profile and the history-minimum profile, on a shared scale.
    """
    profiles = [p for p in (previous, current, history_min) if p is not None]
    scale = max((float(np.max(p)) for p in profiles), default=0.0)
    bands = [_profile_band(p, depth.width_px, scale) for p in (history_min, current, previous)]
    stacked = np.vstack(bands + [depth_levels(depth)])
    return _save(path, stacked)
