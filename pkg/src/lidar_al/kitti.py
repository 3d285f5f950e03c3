"""KITTI dataset parsing: labels, calibration, velodyne binaries.

Labels live in the rectified camera frame; everything downstream of loading
runs in the LiDAR frame, so the camera->LiDAR conversion happens once here.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .geometry import Box3D, wrap_angle

KITTI_CLASSES = frozenset(
    {
        "Car",
        "Pedestrian",
        "Cyclist",
        "Van",
        "Truck",
        "Person_sitting",
        "Tram",
        "Misc",
        "DontCare",
    }
)


class KittiFormatError(ValueError):
    """Raised for malformed KITTI label/calib/velodyne data."""


@dataclass(frozen=True)
class LabelRecord:
    class_name: str
    truncated: float
    occluded: int
    alpha: float
    bbox2d: tuple[float, float, float, float]  # left, top, right, bottom
    dims: tuple[float, float, float]  # height, width, length (camera order)
    location: tuple[float, float, float]  # camera frame, bottom-face center
    rotation_y: float
    score: float | None = None

    @property
    def is_dontcare(self) -> bool:
        return self.class_name == "DontCare"


@dataclass(frozen=True)
class Calibration:
    velo_to_cam: np.ndarray  # 3x4
    rect: np.ndarray  # 3x3
    proj: np.ndarray  # 3x4

    def velo_to_rect_4x4(self) -> np.ndarray:
        tr = np.eye(4)
        tr[:3, :4] = self.velo_to_cam
        r = np.eye(4)
        r[:3, :3] = self.rect
        return r @ tr


@dataclass(frozen=True)
class Frame:
    frame_id: str
    cloud: np.ndarray  # (N, 4) float32
    labels: tuple[LabelRecord, ...]
    calib: Calibration | None
    # ground truth in the LiDAR frame, DontCare excluded
    gt_boxes: tuple[tuple[str, Box3D], ...] = field(default=())


def _as_text(data) -> str:
    if isinstance(data, bytes):
        return data.decode("utf-8")
    return data


def parse_label_file(data) -> list[LabelRecord]:
    """Parse a KITTI label file (15 fields per line; optional 16th = score)."""
    records = []
    for lineno, raw in enumerate(_as_text(data).splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) not in (15, 16):
            raise KittiFormatError(
                f"line {lineno}: expected 15 or 16 fields, got {len(fields)}"
            )
        cls = fields[0]
        if cls not in KITTI_CLASSES:
            raise KittiFormatError(f"line {lineno}, field 0: unknown class {cls!r}")
        try:
            vals = [float(v) for v in fields[1:]]
        except ValueError as e:
            bad = next(
                i for i, v in enumerate(fields[1:], start=1) if not _is_float(v)
            )
            raise KittiFormatError(
                f"line {lineno}, field {bad}: not a number: {fields[bad]!r}"
            ) from e
        rec = LabelRecord(
            class_name=cls,
            truncated=vals[0],
            occluded=int(vals[1]),
            alpha=vals[2],
            bbox2d=(vals[3], vals[4], vals[5], vals[6]),
            dims=(vals[7], vals[8], vals[9]),
            location=(vals[10], vals[11], vals[12]),
            rotation_y=vals[13],
            score=vals[14] if len(vals) == 15 else None,
        )
        _validate_label(rec, lineno)
        records.append(rec)
    return records


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def _validate_label(rec: LabelRecord, lineno: int) -> None:
    left, top, right, bottom = rec.bbox2d
    if right < left or bottom < top:
        raise KittiFormatError(f"line {lineno}: degenerate 2D bbox {rec.bbox2d}")
    if rec.is_dontcare:
        # DontCare rows carry -1/-10 sentinels in the geometric fields
        return
    if any(d <= 0 for d in rec.dims):
        raise KittiFormatError(
            f"line {lineno}: non-positive dims {rec.dims} for {rec.class_name}"
        )
    if not (-math.pi <= rec.rotation_y <= math.pi):
        raise KittiFormatError(
            f"line {lineno}: rotation_y {rec.rotation_y} outside [-pi, pi]"
        )


_CALIB_KEYS = {
    "Tr_velo_to_cam": (3, 4),
    "R0_rect": (3, 3),
    "P2": (3, 4),
}


def parse_calib_file(data) -> Calibration:
    """Parse a KITTI calib file ('key: v v v ...' lines, row-major values)."""
    matrices = {}
    for raw in _as_text(data).splitlines():
        line = raw.strip()
        if not line or ":" not in line:
            continue
        key, _, rest = line.partition(":")
        key = key.strip()
        if key not in _CALIB_KEYS:
            continue
        rows, cols = _CALIB_KEYS[key]
        vals = rest.split()
        if len(vals) != rows * cols:
            raise KittiFormatError(
                f"calib key {key}: expected {rows * cols} values, got {len(vals)}"
            )
        matrices[key] = np.array([float(v) for v in vals]).reshape(rows, cols)
    for key in _CALIB_KEYS:
        if key not in matrices:
            raise KittiFormatError(f"missing key {key}")
    rect = matrices["R0_rect"]
    if not np.allclose(rect @ rect.T, np.eye(3), atol=1e-4):
        raise KittiFormatError("R0_rect is not orthonormal within 1e-4")
    return Calibration(
        velo_to_cam=matrices["Tr_velo_to_cam"], rect=rect, proj=matrices["P2"]
    )


def read_point_cloud(data: bytes) -> np.ndarray:
    """Decode packed little-endian float32 x,y,z,intensity quadruples."""
    if len(data) % 16 != 0:
        raise KittiFormatError(
            f"velodyne byte length {len(data)} not divisible by 16"
        )
    return np.frombuffer(data, dtype="<f4").reshape(-1, 4).copy()


def encode_point_cloud(cloud: np.ndarray) -> bytes:
    """Inverse of read_point_cloud (bit-exact round trip)."""
    return np.ascontiguousarray(cloud, dtype="<f4").tobytes()


def camera_label_to_lidar_box(label: LabelRecord, calib: Calibration) -> Box3D:
    """Convert a camera-frame label to a LiDAR-frame Box3D.

    The label location is the bottom-face center; camera y points down, so
    the geometric center sits at location - (0, h/2, 0) before transforming.
    LiDAR yaw = -rotation_y - pi/2, wrapped to [-pi, pi).
    """
    if label.is_dontcare:
        raise ValueError("DontCare labels carry no usable geometry")
    h, w, l = label.dims
    center_cam = np.array(
        [label.location[0], label.location[1] - h / 2.0, label.location[2], 1.0]
    )
    t = calib.velo_to_rect_4x4()
    try:
        t_inv = np.linalg.inv(t)
    except np.linalg.LinAlgError as e:
        raise KittiFormatError("singular velodyne-to-camera transform") from e
    center_velo = t_inv @ center_cam
    yaw = wrap_angle(-label.rotation_y - math.pi / 2.0)
    return Box3D(center=tuple(center_velo[:3]), dims=(l, w, h), yaw=yaw)


def lidar_box_to_camera(box: Box3D, calib: Calibration):
    """Inverse of camera_label_to_lidar_box.

    Returns (location, dims_hwl, rotation_y) in KITTI label conventions.
    """
    t = calib.velo_to_rect_4x4()
    center_cam = t @ np.array([*box.center, 1.0])
    l, w, h = box.dims
    location = (center_cam[0], center_cam[1] + h / 2.0, center_cam[2])
    rotation_y = wrap_angle(-box.yaw - math.pi / 2.0)
    return location, (h, w, l), rotation_y


def labels_to_gt_boxes(labels, calib) -> tuple[tuple[str, Box3D], ...]:
    return tuple(
        (lab.class_name, camera_label_to_lidar_box(lab, calib))
        for lab in labels
        if not lab.is_dontcare
    )


def read_index(path) -> list[str]:
    """Read a split index file: one frame id per line."""
    with open(path) as f:
        return [line.strip() for line in f if line.strip()]


def write_index(path, ids) -> None:
    with open(path, "w", newline="\n") as f:
        for fid in ids:
            f.write(f"{fid}\n")


def load_frame(root, frame_id: str) -> Frame:
    """Load one frame's label, calib and velodyne artifacts."""
    paths = {
        "velodyne": os.path.join(root, "velodyne", f"{frame_id}.bin"),
        "label_2": os.path.join(root, "label_2", f"{frame_id}.txt"),
        "calib": os.path.join(root, "calib", f"{frame_id}.txt"),
    }
    for kind, path in paths.items():
        if not os.path.exists(path):
            ext = "bin" if kind == "velodyne" else "txt"
            raise FileNotFoundError(f"{kind}/{frame_id}.{ext} not found")
    with open(paths["label_2"]) as f:
        labels = parse_label_file(f.read())
    with open(paths["calib"]) as f:
        calib = parse_calib_file(f.read())
    with open(paths["velodyne"], "rb") as f:
        cloud = read_point_cloud(f.read())
    inten = cloud[:, 3]
    if len(inten) and (inten.min() < 0 or inten.max() > 1):
        import warnings

        warnings.warn(f"frame {frame_id}: intensity outside [0, 1]", stacklevel=2)
    return Frame(
        frame_id=frame_id,
        cloud=cloud,
        labels=tuple(labels),
        calib=calib,
        gt_boxes=labels_to_gt_boxes(labels, calib),
    )


def load_dataset(root, index) -> list[Frame]:
    """Load all frames named by the index; ids must be unique."""
    ids = list(index)
    if len(set(ids)) != len(ids):
        raise KittiFormatError("duplicate frame ids in index")
    return [load_frame(root, fid) for fid in ids]
