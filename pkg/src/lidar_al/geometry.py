"""Oriented 3D boxes (LiDAR frame) and exact BEV / 3D IoU.

BEV intersection is computed by Sutherland-Hodgman clipping of the two box
footprints; 3D IoU multiplies the footprint intersection by the z-extent
overlap. Boxes are upright (yaw about +Z only, no roll/pitch), matching the
KITTI annotation convention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

# Clip results below this area are floating-point slivers, not real overlap.
_AREA_EPS = 1e-12


def wrap_angle(a: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    return (a + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class Box3D:
    """Oriented box: center (x, y, z), dims (length, width, height), yaw.

    Yaw is the rotation of the length axis about +Z and is canonicalized to
    [-pi, pi) on construction.
    """

    center: tuple[float, float, float]
    dims: tuple[float, float, float]
    yaw: float

    def __post_init__(self):
        l, w, h = self.dims
        if not (l > 0 and w > 0 and h > 0):
            raise ValueError(f"box dims must be positive, got {self.dims}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "dims", tuple(float(d) for d in self.dims))
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @property
    def length(self) -> float:
        return self.dims[0]

    @property
    def width(self) -> float:
        return self.dims[1]

    @property
    def height(self) -> float:
        return self.dims[2]

    @property
    def bottom(self) -> float:
        return self.center[2] - self.dims[2] / 2.0

    @property
    def top(self) -> float:
        return self.center[2] + self.dims[2] / 2.0

    @property
    def volume(self) -> float:
        return self.dims[0] * self.dims[1] * self.dims[2]


def bev_corners(box: Box3D) -> np.ndarray:
    """4x2 footprint corners in counter-clockwise order."""
    l, w, _ = box.dims
    local = np.array(
        [[l / 2, w / 2], [-l / 2, w / 2], [-l / 2, -w / 2], [l / 2, -w / 2]]
    )
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array(box.center[:2])


def polygon_area(vertices: np.ndarray) -> float:
    """Signed shoelace area; positive for CCW vertex order."""
    v = np.asarray(vertices, dtype=float)
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Clip a convex CCW polygon against another (Sutherland-Hodgman).

    Collinear output vertices are kept; callers only need the area.
    """
    output = [tuple(p) for p in np.asarray(subject, dtype=float)]
    clip = np.asarray(clip, dtype=float)
    n = len(clip)
    for i in range(n):
        if not output:
            break
        e1 = clip[i]
        e2 = clip[(i + 1) % n]
        ex, ey = e2[0] - e1[0], e2[1] - e1[1]

        def side(p):
            # >= 0 means on the interior side of a CCW edge
            return ex * (p[1] - e1[1]) - ey * (p[0] - e1[0])

        inp = output
        output = []
        s = inp[-1]
        s_side = side(s)
        for p in inp:
            p_side = side(p)
            if p_side >= 0:
                if s_side < 0:
                    output.append(_intersect(s, p, e1, e2))
                output.append(p)
            elif s_side >= 0:
                output.append(_intersect(s, p, e1, e2))
            s, s_side = p, p_side
    return np.array(output) if output else np.empty((0, 2))


def _intersect(p1, p2, e1, e2):
    dx, dy = p2[0] - p1[0], p2[1] - p1[1]
    ex, ey = e2[0] - e1[0], e2[1] - e1[1]
    denom = ex * dy - ey * dx
    # caller only asks for the crossing when the segment straddles the edge,
    # so denom is nonzero there
    t = (ex * (e1[1] - p1[1]) - ey * (e1[0] - p1[0])) / denom
    return (p1[0] + t * dx, p1[1] + t * dy)


def convex_intersection_area(a: np.ndarray, b: np.ndarray) -> float:
    """Area of the intersection of two convex CCW polygons."""
    inter = clip_polygon(a, b)
    area = polygon_area(inter)
    if area < _AREA_EPS:
        return 0.0
    return area


def _canonical_order(a: Box3D, b: Box3D):
    # clip results can differ in the last ulp depending on operand order;
    # fixing the order makes IoU bitwise symmetric
    ka = (a.center, a.dims, a.yaw)
    kb = (b.center, b.dims, b.yaw)
    return (a, b) if ka <= kb else (b, a)


def iou_bev(a: Box3D, b: Box3D) -> float:
    """Footprint (bird's-eye view) IoU."""
    a, b = _canonical_order(a, b)
    ca, cb = bev_corners(a), bev_corners(b)
    inter = convex_intersection_area(ca, cb)
    if inter == 0.0:
        return 0.0
    area_a = a.length * a.width
    area_b = b.length * b.width
    return inter / (area_a + area_b - inter)


def iou_3d(a: Box3D, b: Box3D) -> float:
    """Volume IoU for upright boxes: BEV intersection x z-extent overlap."""
    a, b = _canonical_order(a, b)
    z_overlap = max(0.0, min(a.top, b.top) - max(a.bottom, b.bottom))
    if z_overlap == 0.0:
        return 0.0
    inter_area = convex_intersection_area(bev_corners(a), bev_corners(b))
    inter_vol = inter_area * z_overlap
    if inter_vol == 0.0:
        return 0.0
    return inter_vol / (a.volume + b.volume - inter_vol)


def points_in_box_mask(points: np.ndarray, box: Box3D) -> np.ndarray:
    """Boolean mask of (N, >=3) points lying inside the oriented box."""
    pts = np.asarray(points, dtype=float)[:, :3]
    d = pts[:, :2] - np.array(box.center[:2])
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    # rotate into the box frame (inverse rotation)
    local_x = d[:, 0] * c + d[:, 1] * s
    local_y = -d[:, 0] * s + d[:, 1] * c
    l, w, h = box.dims
    return (
        (np.abs(local_x) <= l / 2)
        & (np.abs(local_y) <= w / 2)
        & (np.abs(pts[:, 2] - box.center[2]) <= h / 2)
    )
