"""Pool-based active learning for LiDAR 3D detection via mirror inconsistency."""

from .geometry import Box3D, iou_3d, iou_bev
from .inconsistency import (
    Detection,
    InconsistencyRecord,
    MatchConfig,
    match_boxes,
    score_frame,
    score_iou,
    score_nob,
)

__all__ = [
    "Box3D",
    "Detection",
    "InconsistencyRecord",
    "MatchConfig",
    "iou_3d",
    "iou_bev",
    "match_boxes",
    "score_frame",
    "score_iou",
    "score_nob",
]

__version__ = "0.1.0"
