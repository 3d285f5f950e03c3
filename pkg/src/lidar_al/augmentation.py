"""Horizontal mirroring of clouds, boxes and detection sets.

The mirror plane is y=0 in the LiDAR frame: a left-right flip of the scene
as seen by the ego vehicle. Predictions made on a mirrored cloud are mapped
back into the original frame with the same operation (mirroring is an
involution), so both detection sets can be compared geometrically.
"""
from __future__ import annotations

import enum
from dataclasses import replace

import numpy as np

from .geometry import Box3D, wrap_angle


class MirrorAxis(enum.Enum):
    """Reflection axis. Single variant for now; kept as an extension point."""

    LIDAR_Y = "lidar_y"


def mirror_cloud(cloud: np.ndarray) -> np.ndarray:
    """Reflect a (N, 4) point cloud across y=0; intensity untouched."""
    out = cloud.copy()
    out[:, 1] = -out[:, 1]
    return out


def mirror_box(box: Box3D) -> Box3D:
    """Reflect a box across y=0: negate center.y, negate yaw."""
    cx, cy, cz = box.center
    return Box3D(center=(cx, -cy, cz), dims=box.dims, yaw=wrap_angle(-box.yaw))


def mirror_detections(dets):
    """Mirror every detection's box; class, confidence and order preserved."""
    return [replace(d, box=mirror_box(d.box)) for d in dets]
