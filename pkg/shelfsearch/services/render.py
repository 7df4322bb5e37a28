"""
Orthographic front-view rendering of a shelf scene.

The camera looks along +z. Pixel (i, j) covers lateral coordinate x = (i + 0.5) * pitch_x
and height y = (j + 0.5) * pitch_y; arrays are indexed data[j, i] with row 0 at the shelf
floor. An object covers a pixel when the column line x meets its footprint and its height
reaches y; the pixel takes the nearest entry depth. Equal depths go to the earlier object
in scene order.
"""
import hashlib
import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from shelfsearch.config import DISCONTINUITY_THRESHOLD, IMAGE_HEIGHT_PX, IMAGE_WIDTH_PX
from shelfsearch.exceptions import RenderError
from shelfsearch.models.scene import ObjectSpec, Scene, ShelfSpec
from shelfsearch.services.geometry import posed_vertices, vertical_line_span

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DepthImage:
    data: np.ndarray
    pitch_x: float
    pitch_y: float
    back_depth: float

    @property
    def width_px(self) -> int:
        return self.data.shape[1]

    @property
    def height_px(self) -> int:
        return self.data.shape[0]

    @property
    def column_centers(self) -> np.ndarray:
        return (np.arange(self.width_px) + 0.5) * self.pitch_x

    @property
    def row_centers(self) -> np.ndarray:
        return (np.arange(self.height_px) + 0.5) * self.pitch_y

    @property
    def foreground(self) -> np.ndarray:
        return self.data < self.back_depth

    def with_data(self, data: np.ndarray) -> "DepthImage":
        return DepthImage(data=data, pitch_x=self.pitch_x, pitch_y=self.pitch_y, back_depth=self.back_depth)

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.data, dtype="<f8").tobytes()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class PixelMask:
    membership: np.ndarray

    @classmethod
    def empty(cls, width_px: int, height_px: int) -> "PixelMask":
        return cls(np.zeros((height_px, width_px), dtype=bool))

    @property
    def width_px(self) -> int:
        return self.membership.shape[1]

    @property
    def height_px(self) -> int:
        return self.membership.shape[0]

    @property
    def count(self) -> int:
        return int(self.membership.sum())

    @property
    def is_empty(self) -> bool:
        return not self.membership.any()

    def columns(self) -> np.ndarray:
        return np.flatnonzero(self.membership.any(axis=0))


@dataclass(frozen=True, eq=False)
class Segment:
    id: int
    mask: PixelMask
    column_span: Tuple[int, int]
    front_depth: float
    far_depth: float
    # Front depth plus observed width, where the object is expected to end
    rear_depth: float

    @property
    def columns(self) -> np.ndarray:
        return self.mask.columns()


def image_axes(shelf: ShelfSpec, width_px: int, height_px: int) -> Tuple[float, float, np.ndarray, np.ndarray]:
    if width_px <= 0 or height_px <= 0:
        raise RenderError(f"image size must be positive, got {width_px}x{height_px}")
    pitch_x = shelf.width / width_px
    pitch_y = shelf.height / height_px
    xs = (np.arange(width_px) + 0.5) * pitch_x
    ys = (np.arange(height_px) + 0.5) * pitch_y
    return pitch_x, pitch_y, xs, ys


def entry_depths(obj: ObjectSpec, xs: np.ndarray) -> np.ndarray:
    """Nearest footprint depth along each column line, inf where the column misses"""
    z_min, _ = vertical_line_span(posed_vertices(obj.footprint, obj.pose), xs)
    return z_min


def render_depth(
    scene: Scene,
    width_px: int = IMAGE_WIDTH_PX,
    height_px: int = IMAGE_HEIGHT_PX,
) -> Tuple[DepthImage, Dict[str, PixelMask]]:
    """Depth image of the scene plus, per object, the pixels where it is the nearest surface"""
    pitch_x, pitch_y, xs, ys = image_axes(scene.shelf, width_px, height_px)
    back = scene.shelf.back_depth
    depth = np.full((height_px, width_px), back, dtype=np.float64)
    owner = np.full((height_px, width_px), -1, dtype=np.int32)

    for k, obj in enumerate(scene.objects):
        entry = entry_depths(obj, xs)
        rows = ys <= obj.height
        candidate = np.where(rows[:, None], entry[None, :], np.inf)
        closer = candidate < depth
        depth[closer] = candidate[closer]
        owner[closer] = k

    masks = {obj.id: PixelMask(owner == k) for k, obj in enumerate(scene.objects)}
    image = DepthImage(data=depth, pitch_x=pitch_x, pitch_y=pitch_y, back_depth=back)
    return image, masks


def render_alone(
    scene: Scene,
    object_id: str,
    width_px: int = IMAGE_WIDTH_PX,
    height_px: int = IMAGE_HEIGHT_PX,
) -> Tuple[DepthImage, PixelMask]:
    lone = scene.model_copy(update={"objects": (scene.get(object_id),)})
    image, masks = render_depth(lone, width_px, height_px)
    return image, masks[object_id]


def target_visible_mask(
    scene: Scene,
    width_px: int = IMAGE_WIDTH_PX,
    height_px: int = IMAGE_HEIGHT_PX,
) -> PixelMask:
    _, masks = render_depth(scene, width_px, height_px)
    return masks[scene.target_id]


def visible_fraction(
    scene: Scene,
    width_px: int = IMAGE_WIDTH_PX,
    height_px: int = IMAGE_HEIGHT_PX,
) -> float:
    """Share of the target's unoccluded projection that is currently frontmost"""
    visible = target_visible_mask(scene, width_px, height_px)
    return fraction_of_target(scene, visible, width_px, height_px)


def fraction_of_target(scene: Scene, visible: PixelMask, width_px: int, height_px: int) -> float:
    _, alone = render_alone(scene, scene.target_id, width_px, height_px)
    if alone.count == 0:
        raise RenderError(f"target renders to zero pixels at {width_px}x{height_px}")
    return visible.count / alone.count


def segment_observation(depth: DepthImage, discontinuity_threshold: float = DISCONTINUITY_THRESHOLD) -> List[Segment]:
    """
    Partition foreground pixels into segments. 4-neighbours share a segment when their
    depths differ by less than the threshold.
    """
    data = depth.data
    fg = depth.foreground
    n = int(fg.sum())
    if n == 0:
        return []

    index = np.full(data.shape, -1, dtype=np.int64)
    index[fg] = np.arange(n)

    horizontal = fg[:, :-1] & fg[:, 1:] & (np.abs(data[:, 1:] - data[:, :-1]) < discontinuity_threshold)
    vertical = fg[:-1, :] & fg[1:, :] & (np.abs(data[1:, :] - data[:-1, :]) < discontinuity_threshold)
    hr, hc = np.nonzero(horizontal)
    vr, vc = np.nonzero(vertical)
    src = np.concatenate([index[hr, hc], index[vr, vc]])
    dst = np.concatenate([index[hr, hc + 1], index[vr + 1, vc]])
    graph = coo_matrix((np.ones(src.shape[0], dtype=np.int8), (src, dst)), shape=(n, n))
    n_components, labels = connected_components(graph, directed=False)

    label_image = np.full(data.shape, -1, dtype=np.int64)
    label_image[fg] = labels

    found = []
    for label in range(n_components):
        member = label_image == label
        cols = np.flatnonzero(member.any(axis=0))
        rows = np.flatnonzero(member.any(axis=1))
        found.append((int(cols[0]), int(rows[0]), label, member, cols))
    found.sort(key=lambda item: item[:3])

    segments = []
    for seg_id, (x_min, _, _, member, cols) in enumerate(found):
        x_max = int(cols[-1])
        values = data[member]
        observed_width = (x_max - x_min + 1) * depth.pitch_x
        segments.append(Segment(
            id=seg_id,
            mask=PixelMask(member),
            column_span=(x_min, x_max),
            front_depth=float(values.min()),
            far_depth=float(values.max()) + observed_width,
            rear_depth=float(values.min()) + observed_width,
        ))
    logger.debug(f"Segmented {n} foreground pixels into {len(segments)} segments")
    return segments
