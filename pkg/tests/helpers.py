"""Shared test utilities: synthetic frames, on-disk dataset writer, oracles."""
from __future__ import annotations

import math
import os

import numpy as np

from lidar_al.geometry import Box3D, bev_corners, points_in_box_mask, wrap_angle
from lidar_al.kitti import (
    Calibration,
    Frame,
    encode_point_cloud,
    lidar_box_to_camera,
)

CLASS_DIMS = {
    "Car": (3.9, 1.6, 1.5),
    "Pedestrian": (0.8, 0.6, 1.75),
    "Cyclist": (1.76, 0.6, 1.73),
}
CLASS_NAMES = list(CLASS_DIMS)
CLASS_PROBS = [0.7, 0.2, 0.1]

# idealized calibration: cam x = -velo y, cam y = -velo z, cam z = velo x
IDEAL_CALIB = Calibration(
    velo_to_cam=np.array(
        [[0.0, -1.0, 0.0, 0.0], [0.0, 0.0, -1.0, 0.0], [1.0, 0.0, 0.0, 0.0]]
    ),
    rect=np.eye(3),
    proj=np.array(
        [[700.0, 0.0, 600.0, 0.0], [0.0, 700.0, 180.0, 0.0], [0.0, 0.0, 1.0, 0.0]]
    ),
)


def random_box(rng: np.random.Generator, cls: str) -> Box3D:
    base = CLASS_DIMS[cls]
    dims = tuple(d * rng.uniform(0.9, 1.1) for d in base)
    return Box3D(
        center=(rng.uniform(5.0, 55.0), rng.uniform(-22.0, 22.0), rng.uniform(-1.0, -0.2)),
        dims=dims,
        yaw=rng.uniform(-math.pi, math.pi),
    )


def points_inside_box(rng: np.random.Generator, box: Box3D, n: int) -> np.ndarray:
    l, w, h = box.dims
    local = rng.uniform(
        [-l / 2, -w / 2, -h / 2], [l / 2, w / 2, h / 2], size=(n, 3)
    )
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    world = np.empty_like(local)
    world[:, 0] = local[:, 0] * c - local[:, 1] * s + box.center[0]
    world[:, 1] = local[:, 0] * s + local[:, 1] * c + box.center[1]
    world[:, 2] = local[:, 2] + box.center[2]
    return world


def make_frame(
    frame_id: str,
    rng: np.random.Generator,
    n_objects: int | None = None,
    points_per_box: int = 40,
    clutter: int = 150,
) -> Frame:
    if n_objects is None:
        n_objects = int(rng.integers(0, 9))
    gt = []
    chunks = []
    for _ in range(n_objects):
        cls = CLASS_NAMES[rng.choice(len(CLASS_NAMES), p=CLASS_PROBS)]
        box = random_box(rng, cls)
        gt.append((cls, box))
        chunks.append(points_inside_box(rng, box, points_per_box))
    ground = np.column_stack(
        [
            rng.uniform(0.0, 70.0, clutter),
            rng.uniform(-30.0, 30.0, clutter),
            rng.uniform(-2.0, -1.6, clutter),
        ]
    )
    chunks.append(ground)
    xyz = np.vstack(chunks)
    cloud = np.column_stack([xyz, rng.uniform(0.0, 1.0, len(xyz))]).astype("<f4")
    return Frame(
        frame_id=frame_id, cloud=cloud, labels=(), calib=None, gt_boxes=tuple(gt)
    )


def make_dataset(
    n_frames: int, seed: int, empty_fraction: float = 0.25, prefix: str = ""
) -> list[Frame]:
    rng = np.random.default_rng(seed)
    frames = []
    for i in range(n_frames):
        n_obj = 0 if rng.uniform() < empty_fraction else int(rng.integers(1, 9))
        frames.append(make_frame(f"{prefix}{i:06d}", rng, n_objects=n_obj))
    return frames


def write_kitti_dataset(root, frames, calib: Calibration = IDEAL_CALIB) -> None:
    """Materialize synthetic frames as KITTI-format files under root."""
    for sub in ("label_2", "calib", "velodyne"):
        os.makedirs(os.path.join(root, sub), exist_ok=True)
    calib_text = (
        "P2: " + " ".join(f"{v:.12e}" for v in calib.proj.ravel()) + "\n"
        "R0_rect: " + " ".join(f"{v:.12e}" for v in calib.rect.ravel()) + "\n"
        "Tr_velo_to_cam: "
        + " ".join(f"{v:.12e}" for v in calib.velo_to_cam.ravel())
        + "\n"
    )
    for frame in frames:
        fid = frame.frame_id
        lines = []
        for cls, box in frame.gt_boxes:
            loc, (h, w, l), rot = lidar_box_to_camera(box, calib)
            lines.append(
                f"{cls} 0.00 0 0.00 0.00 0.00 100.00 100.00 "
                f"{h:.6f} {w:.6f} {l:.6f} "
                f"{loc[0]:.6f} {loc[1]:.6f} {loc[2]:.6f} {rot:.6f}"
            )
        with open(os.path.join(root, "label_2", f"{fid}.txt"), "w", newline="\n") as f:
            f.write("\n".join(lines) + ("\n" if lines else ""))
        with open(os.path.join(root, "calib", f"{fid}.txt"), "w", newline="\n") as f:
            f.write(calib_text)
        with open(os.path.join(root, "velodyne", f"{fid}.bin"), "wb") as f:
            f.write(encode_point_cloud(frame.cloud))


def monte_carlo_iou3d(a: Box3D, b: Box3D, n: int, rng: np.random.Generator) -> float:
    """IoU estimate from uniform samples over the union's bounding box."""
    corners = np.vstack([bev_corners(a), bev_corners(b)])
    lo = np.array([corners[:, 0].min(), corners[:, 1].min(), min(a.bottom, b.bottom)])
    hi = np.array([corners[:, 0].max(), corners[:, 1].max(), max(a.top, b.top)])
    pts = rng.uniform(lo, hi, size=(n, 3))
    in_a = points_in_box_mask(pts, a)
    in_b = points_in_box_mask(pts, b)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / union


def brute_force_average_precision(flags, confidences, n_gt, recall_points):
    """Independent PR sweep: walk every confidence cutoff, interpolate."""
    order = sorted(range(len(flags)), key=lambda i: -confidences[i])
    tp = fp = 0
    pr = []  # (recall, precision) after each detection
    for i in order:
        if flags[i]:
            tp += 1
        else:
            fp += 1
        pr.append((tp / n_gt, tp / (tp + fp)))
    total = 0.0
    for k in range(1, recall_points + 1):
        r = k / recall_points
        precisions = [p for rec, p in pr if rec >= r]
        total += max(precisions) if precisions else 0.0
    return total / recall_points


def make_label_line(cls="Car", rotation_y=0.0) -> str:
    return (
        f"{cls} 0.00 0 0.00 10.00 10.00 50.00 50.00 "
        f"1.50 1.60 3.80 -5.00 1.80 25.00 {rotation_y:.6f}"
    )
