"""
Convex footprint math in the shelf's x-z plane.

Closed-set semantics throughout: polygons that touch intersect. Sweeps are pure
translations along the lateral x axis.
"""
import math
from typing import Iterable, Tuple, Union

import numpy as np

from shelfsearch.config import CONTACT_TOLERANCE
from shelfsearch.exceptions import GeometryError
from shelfsearch.models.geometry import Direction, Footprint, Pose2, signed_area

PolygonLike = Union[Footprint, np.ndarray]

# Below this the x component of an axis is treated as parallel to the push
_PARALLEL_EPS = 1e-12


def as_vertices(polygon: PolygonLike) -> np.ndarray:
    """Vertex array of a footprint, rejecting degenerate polygons"""
    arr = polygon.array if isinstance(polygon, Footprint) else np.asarray(polygon, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 3 or arr.shape[1] != 2:
        raise GeometryError(f"polygon needs at least 3 (x, z) vertices, got shape {arr.shape}")
    if not signed_area(arr) > 0.0:
        raise GeometryError("degenerate or clockwise polygon")
    return arr


def footprint_from_array(vertices: np.ndarray) -> Footprint:
    # Rigid transforms keep a valid footprint valid, so skip re-validation
    return Footprint.model_construct(vertices=tuple((float(x), float(z)) for x, z in vertices))


def posed_vertices(fp: PolygonLike, pose: Pose2) -> np.ndarray:
    arr = as_vertices(fp)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    rot = np.array([[c, -s], [s, c]])
    return arr @ rot.T + np.array([pose.x, pose.z])


def transform_footprint(fp: Footprint, pose: Pose2) -> Footprint:
    """Rotate then translate a footprint"""
    return footprint_from_array(posed_vertices(fp, pose))


def polygon_area(polygon: PolygonLike) -> float:
    return signed_area(as_vertices(polygon))


def x_extent(polygon: PolygonLike) -> Tuple[float, float]:
    arr = as_vertices(polygon)
    return float(arr[:, 0].min()), float(arr[:, 0].max())


def translate_x(vertices: np.ndarray, dx: float) -> np.ndarray:
    return vertices + np.array([dx, 0.0])


def _axes(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    edges = np.vstack([np.roll(a, -1, axis=0) - a, np.roll(b, -1, axis=0) - b])
    normals = np.column_stack([-edges[:, 1], edges[:, 0]])
    lengths = np.linalg.norm(normals, axis=1)
    keep = lengths > 0.0
    return normals[keep] / lengths[keep, None]


def _projections(a: np.ndarray, b: np.ndarray, axes: np.ndarray):
    pa = a @ axes.T
    pb = b @ axes.T
    return pa.min(axis=0), pa.max(axis=0), pb.min(axis=0), pb.max(axis=0)


def polygons_intersect(a: PolygonLike, b: PolygonLike) -> bool:
    """Separating-axis test; touching polygons intersect"""
    va, vb = as_vertices(a), as_vertices(b)
    a0, a1, b0, b1 = _projections(va, vb, _axes(va, vb))
    separated = (a1 < b0) | (b1 < a0)
    return not bool(np.any(separated))


def penetration_depth(a: PolygonLike, b: PolygonLike) -> float:
    """Smallest overlap over all separating axes; zero when touching, negative when apart"""
    va, vb = as_vertices(a), as_vertices(b)
    a0, a1, b0, b1 = _projections(va, vb, _axes(va, vb))
    overlap = np.minimum(a1 - b0, b1 - a0)
    return float(overlap.min())


def sweep_contact_distance(
    moving: PolygonLike,
    obstacle: PolygonLike,
    direction: Direction,
    max_d: float,
) -> float:
    """
    Smallest translation of `moving` along the push direction at which it first
    touches `obstacle`, or max_d when no contact happens within range.

    Each separating axis bounds the translations at which the projections overlap;
    the polygons overlap exactly on the intersection of those intervals. Axes
    perpendicular to the motion need strictly positive overlap, so faces sliding
    along each other never count as contact: a polygon resting against a face
    parallel to the motion returns max_d and ends the sweep still touching it.
    """
    vm, vo = as_vertices(moving), as_vertices(obstacle)
    axes = _axes(vm, vo)
    a0, a1, b0, b1 = _projections(vm, vo, axes)
    rate = direction.sign * axes[:, 0]

    lo, hi = -math.inf, math.inf
    for k in range(axes.shape[0]):
        v = rate[k]
        if abs(v) < _PARALLEL_EPS:
            if min(a1[k] - b0[k], b1[k] - a0[k]) <= CONTACT_TOLERANCE:
                return max_d
            continue
        if v > 0.0:
            enter, leave = (b0[k] - a1[k]) / v, (b1[k] - a0[k]) / v
        else:
            enter, leave = (b1[k] - a0[k]) / v, (b0[k] - a1[k]) / v
        lo = max(lo, enter)
        hi = min(hi, leave)

    if lo > hi:
        return max_d
    if lo < -CONTACT_TOLERANCE and hi > CONTACT_TOLERANCE:
        raise GeometryError("sweep inputs already interpenetrate")
    if hi <= CONTACT_TOLERANCE:
        return max_d
    return min(max(lo, 0.0), max_d)


def vertical_line_span(polygon: PolygonLike, xs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    For each lateral coordinate in xs, the [z_min, z_max] chord of the polygon on
    the line x = const. Lines that miss the polygon get (inf, -inf).
    """
    arr = as_vertices(polygon)
    xs = np.asarray(xs, dtype=np.float64)
    p, q = arr, np.roll(arr, -1, axis=0)
    px, pz, qx, qz = p[:, 0:1], p[:, 1:2], q[:, 0:1], q[:, 1:2]
    lo_x, hi_x = np.minimum(px, qx), np.maximum(px, qx)
    inside = (xs[None, :] >= lo_x) & (xs[None, :] <= hi_x)

    dx = qx - px
    vertical = dx == 0.0
    safe_dx = np.where(vertical, 1.0, dx)
    t = np.clip((xs[None, :] - px) / safe_dx, 0.0, 1.0)
    z = pz + t * (qz - pz)
    z_lo = np.where(vertical, np.minimum(pz, qz), z)
    z_hi = np.where(vertical, np.maximum(pz, qz), z)

    z_min = np.where(inside, z_lo, np.inf).min(axis=0)
    z_max = np.where(inside, z_hi, -np.inf).max(axis=0)
    return z_min, z_max


def regular_polygon(radius: float, sides: int) -> Footprint:
    """Regular n-gon centered at the origin with the area of a circle of radius `radius`"""
    if radius <= 0.0 or sides < 3:
        raise GeometryError(f"invalid regular polygon: radius={radius}, sides={sides}")
    angles = 2.0 * np.pi * np.arange(sides) / sides
    # circumradius of the equal-area n-gon
    r = radius * np.sqrt(2.0 * np.pi / (sides * np.sin(2.0 * np.pi / sides)))
    return footprint_from_array(np.column_stack([r * np.cos(angles), r * np.sin(angles)]))


def rectangle(width: float, depth: float) -> Footprint:
    """Axis-aligned rectangle centered at the origin (width along x, depth along z)"""
    if width <= 0.0 or depth <= 0.0:
        raise GeometryError(f"invalid rectangle: {width} x {depth}")
    hw, hd = width / 2.0, depth / 2.0
    return footprint_from_array(np.array([[-hw, -hd], [hw, -hd], [hw, hd], [-hw, hd]]))


def box(x_min: float, x_max: float, z_min: float, z_max: float) -> np.ndarray:
    """Vertex array of an axis-aligned box given by its bounds"""
    return np.array([[x_min, z_min], [x_max, z_min], [x_max, z_max], [x_min, z_max]], dtype=np.float64)


def any_intersect(polygon: PolygonLike, others: Iterable[PolygonLike]) -> bool:
    return any(polygons_intersect(polygon, other) for other in others)
