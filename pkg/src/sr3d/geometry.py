"""Projective geometry: back-projection, world transforms, canonicalization,
and oriented-box-to-mask projection.

Pixel coordinate convention: continuous coordinates sit at pixel centers,
u = column + 0.5 and v = row + 0.5. ``back_project`` and ``project_point``
are exact inverses under this convention.

Canonicalization shifts by the scene AABB center and scales uniformly by
half the maximum extent, so every valid point lands in [-1, 1]^3 and
aspect ratios are preserved. Metric quantities are recovered as
``scale * canonical_distance``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import GeometryError, ValidationError
from .scene import CameraIntrinsics, DepthMap, Frame, OrientedBox3D, Pose

SPACES = ("camera", "world", "canonical")

DEGENERATE_EXTENT = 1e-12


@dataclass(frozen=True)
class PointMap:
    """Per-pixel 3D positions aligned with a frame raster.

    Invalid pixels carry position (0, 0, 0); only ``validity`` decides
    whether a pixel participates in downstream statistics.
    """

    positions: np.ndarray
    space: str
    validity: np.ndarray

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=np.float64)
        validity = np.asarray(self.validity, dtype=bool)
        if positions.ndim != 3 or positions.shape[2] != 3:
            raise ValidationError(f"positions must be HxWx3, got {positions.shape}")
        if validity.shape != positions.shape[:2]:
            raise ValidationError(
                f"validity raster {validity.shape} must match positions {positions.shape[:2]}"
            )
        if self.space not in SPACES:
            raise ValidationError(f"unknown space '{self.space}', expected one of {SPACES}")
        if positions[validity].size and not np.isfinite(positions[validity]).all():
            raise ValidationError("valid positions must be finite")
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "validity", validity)

    @property
    def shape(self) -> tuple[int, int]:
        return self.validity.shape

    def valid_positions(self) -> np.ndarray:
        """All valid positions as an (N, 3) array."""
        return self.positions[self.validity]


@dataclass(frozen=True)
class CanonicalTransform:
    """Affine map from world meters into the shared [-1, 1]^3 scene space."""

    offset: np.ndarray
    scale: float
    aabb_min: np.ndarray
    aabb_max: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        offset = np.asarray(self.offset, dtype=np.float64)
        lo = np.asarray(self.aabb_min, dtype=np.float64)
        hi = np.asarray(self.aabb_max, dtype=np.float64)
        if self.scale <= 0:
            raise ValidationError(f"scale must be > 0, got {self.scale}")
        if not (lo <= hi).all():
            raise ValidationError("aabb_min must be <= aabb_max componentwise")
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "aabb_min", lo)
        object.__setattr__(self, "aabb_max", hi)

    def to_dict(self) -> dict:
        return {
            "offset": [float(v) for v in self.offset],
            "scale": float(self.scale),
            "aabb_min": [float(v) for v in self.aabb_min],
            "aabb_max": [float(v) for v in self.aabb_max],
            "degenerate": bool(self.degenerate),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CanonicalTransform":
        return cls(
            offset=np.asarray(doc["offset"], dtype=np.float64),
            scale=float(doc["scale"]),
            aabb_min=np.asarray(doc["aabb_min"], dtype=np.float64),
            aabb_max=np.asarray(doc["aabb_max"], dtype=np.float64),
            degenerate=bool(doc.get("degenerate", False)),
        )


def back_project(depth: DepthMap, intrinsics: CameraIntrinsics) -> PointMap:
    """Lift a depth map through the inverse pinhole model into camera space.

    For a valid pixel at row r, column c with depth z:
    position = ((c + 0.5 - cx) * z / fx, (r + 0.5 - cy) * z / fy, z).
    """
    h, w = depth.shape
    if (h, w) != (intrinsics.height, intrinsics.width):
        raise ValidationError(
            f"depth raster {h}x{w} does not match intrinsics raster "
            f"{intrinsics.height}x{intrinsics.width}"
        )
    z = depth.values.astype(np.float64)
    u = np.arange(w, dtype=np.float64) + 0.5
    v = np.arange(h, dtype=np.float64) + 0.5
    x = (u[None, :] - intrinsics.cx) * z / intrinsics.fx
    y = (v[:, None] - intrinsics.cy) * z / intrinsics.fy
    positions = np.stack([x, y, z], axis=-1)
    positions[~depth.validity] = 0.0
    return PointMap(positions=positions, space="camera", validity=depth.validity.copy())


def to_world(points: PointMap, pose: Pose) -> PointMap:
    """Apply the camera-to-world rigid transform to a camera-space map."""
    if points.space != "camera":
        raise ValueError(f"to_world expects a camera-space map, got '{points.space}'")
    positions = points.positions @ pose.rotation.T + pose.translation
    positions[~points.validity] = 0.0
    return PointMap(positions=positions, space="world", validity=points.validity.copy())


def fit_canonicalization(point_maps: Sequence[PointMap]) -> CanonicalTransform:
    """Fit the scene canonicalization from world-space point maps.

    Offset is the AABB center of all valid points; scale is half the
    maximum AABB extent. A degenerate cloud (all points identical) gets
    scale 1 and the ``degenerate`` flag.
    """
    chunks = []
    for pm in point_maps:
        if pm.space != "world":
            raise ValueError(f"fit_canonicalization expects world-space maps, got '{pm.space}'")
        pts = pm.valid_positions()
        if pts.size:
            chunks.append(pts)
    if not chunks:
        raise GeometryError("no valid points in any point map; cannot fit canonicalization")
    pts = np.concatenate(chunks, axis=0)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    extent = float((hi - lo).max())
    degenerate = extent <= DEGENERATE_EXTENT
    return CanonicalTransform(
        offset=(lo + hi) / 2.0,
        scale=1.0 if degenerate else extent / 2.0,
        aabb_min=lo,
        aabb_max=hi,
        degenerate=degenerate,
    )


def canonicalize(points: PointMap, xf: CanonicalTransform) -> PointMap:
    """Map a world-space point map into the shared canonical space."""
    if points.space != "world":
        raise ValueError(f"canonicalize expects a world-space map, got '{points.space}'")
    positions = (points.positions - xf.offset) / xf.scale
    positions[~points.validity] = 0.0
    return PointMap(positions=positions, space="canonical", validity=points.validity.copy())


def project_point(p: np.ndarray, intrinsics: CameraIntrinsics) -> tuple[float, float]:
    """Perspective-project a camera-space point to continuous pixel coordinates."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {p.shape}")
    if p[2] <= 0:
        raise GeometryError(f"cannot project point with nonpositive depth z={p[2]}")
    u = intrinsics.fx * p[0] / p[2] + intrinsics.cx
    v = intrinsics.fy * p[1] / p[2] + intrinsics.cy
    return float(u), float(v)


def _project_points(points: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    z = points[:, 2]
    u = intrinsics.fx * points[:, 0] / z + intrinsics.cx
    v = intrinsics.fy * points[:, 1] / z + intrinsics.cy
    return np.stack([u, v], axis=-1)


_CORNER_SIGNS = np.array(
    [[sx, sy, sz] for sx in (-1.0, 1.0) for sy in (-1.0, 1.0) for sz in (-1.0, 1.0)]
)


def box_corners(box: OrientedBox3D) -> np.ndarray:
    """The 8 world-space corners of an oriented box, (8, 3)."""
    cos_y, sin_y = np.cos(box.yaw), np.sin(box.yaw)
    rot = np.array([[cos_y, -sin_y, 0.0], [sin_y, cos_y, 0.0], [0.0, 0.0, 1.0]])
    local = _CORNER_SIGNS * (box.size / 2.0)
    return box.center + local @ rot.T


def _convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Counter-clockwise convex hull (monotone chain); tolerates collinear sets."""
    pts = np.unique(points, axis=0)
    if len(pts) <= 2:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.asarray(lower[:-1] + upper[:-1])


def rasterize_convex_polygon(vertices: np.ndarray, height: int, width: int) -> np.ndarray:
    """Rasterize a convex polygon: pixel included iff its center is inside.

    ``vertices`` are (u, v) continuous coordinates, counter-clockwise in
    image axes (u right, v down). Degenerate polygons (fewer than 3
    vertices) rasterize to an empty mask.
    """
    mask = np.zeros((height, width), dtype=bool)
    verts = np.asarray(vertices, dtype=np.float64)
    if len(verts) < 3:
        return mask
    u_min = max(int(np.floor(verts[:, 0].min() - 0.5)), 0)
    u_max = min(int(np.ceil(verts[:, 0].max() - 0.5)), width - 1)
    v_min = max(int(np.floor(verts[:, 1].min() - 0.5)), 0)
    v_max = min(int(np.ceil(verts[:, 1].max() - 0.5)), height - 1)
    if u_min > u_max or v_min > v_max:
        return mask
    uu = np.arange(u_min, u_max + 1, dtype=np.float64) + 0.5
    vv = np.arange(v_min, v_max + 1, dtype=np.float64) + 0.5
    grid_u, grid_v = np.meshgrid(uu, vv)
    inside = np.ones(grid_u.shape, dtype=bool)
    for i in range(len(verts)):
        a = verts[i]
        b = verts[(i + 1) % len(verts)]
        # CCW in (u right, v down) axes: interior is on the left, cross >= 0
        cross = (b[0] - a[0]) * (grid_v - a[1]) - (b[1] - a[1]) * (grid_u - a[0])
        inside &= cross >= 0
    mask[v_min : v_max + 1, u_min : u_max + 1] = inside
    return mask


MIN_CORNER_DEPTH = 1e-6


def project_box(
    box: OrientedBox3D,
    frame: Frame,
    occlusion_test: bool = False,
    depth_tolerance: float = 0.10,
) -> np.ndarray:
    """Project an oriented box into a frame as a boolean mask.

    Corners behind the camera (z <= 1e-6) are dropped; fewer than 3
    projectable corners yields an empty mask, as do boxes fully outside
    the frustum. With ``occlusion_test`` a mask pixel additionally
    requires a valid observed depth of at least the nearest projectable
    corner's camera depth minus ``depth_tolerance``.
    """
    corners_world = box_corners(box)
    rot = frame.pose.rotation
    corners_cam = (corners_world - frame.pose.translation) @ rot
    front = corners_cam[corners_cam[:, 2] > MIN_CORNER_DEPTH]
    h, w = frame.intrinsics.height, frame.intrinsics.width
    if len(front) < 3:
        return np.zeros((h, w), dtype=bool)
    projected = _project_points(front, frame.intrinsics)
    hull = _convex_hull_2d(projected)
    mask = rasterize_convex_polygon(hull, h, w)
    if occlusion_test and mask.any():
        nearest = float(front[:, 2].min())
        visible = frame.depth.validity & (frame.depth.values >= nearest - depth_tolerance)
        mask &= visible
    return mask


def resize_point_map(points: PointMap, width: int, height: int) -> PointMap:
    """Validity-aware bilinear resize of a point map.

    Positions are averaged with validity as weights so holes never bleed
    garbage into valid neighborhoods; output pixels whose interpolated
    validity weight is ~0 become invalid.
    """
    from .tiling import resize_raster

    if points.shape == (height, width):
        return points
    weight = points.validity.astype(np.float64)
    weighted = points.positions * weight[:, :, None]
    resized_weighted = resize_raster(weighted, height, width, "bilinear")
    resized_weight = resize_raster(weight, height, width, "bilinear")
    validity = resized_weight > 1e-9
    positions = np.zeros((height, width, 3), dtype=np.float64)
    positions[validity] = resized_weighted[validity] / resized_weight[validity][:, None]
    return PointMap(positions=positions, space=points.space, validity=validity)


def iter_valid_positions(point_maps: Iterable[PointMap]) -> np.ndarray:
    """Concatenate valid positions across maps (empty (0, 3) if none)."""
    chunks = [pm.valid_positions() for pm in point_maps]
    chunks = [c for c in chunks if c.size]
    if not chunks:
        return np.zeros((0, 3), dtype=np.float64)
    return np.concatenate(chunks, axis=0)
