"""KITTI-style detection evaluation: per-class AP, mAP, diagnostics.

AP uses N-point interpolated precision (40 points by default, the modern
KITTI protocol; 11-point available via config). Difficulty buckets are not
implemented: every ground-truth box of an evaluated class counts. Classes
outside the evaluated set are ignored entirely.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .geometry import iou_3d

EVALUATED_CLASSES = ("Car", "Pedestrian", "Cyclist")

DEFAULT_IOU_THRESHOLDS = {"Car": 0.7, "Pedestrian": 0.5, "Cyclist": 0.5}


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: dict = field(default_factory=lambda: dict(DEFAULT_IOU_THRESHOLDS))
    recall_points: int = 40
    evaluated_classes: tuple = EVALUATED_CLASSES

    def __post_init__(self):
        if self.recall_points < 2:
            raise ValueError("recall_points must be >= 2")
        for cls, t in self.iou_thresholds.items():
            if not (0.0 < t < 1.0):
                raise ValueError(f"IoU threshold for {cls} outside (0, 1)")


def match_for_eval(dets, gts, threshold: float):
    """Per-detection TP/FP flags against one frame's GT boxes of one class.

    Detections must be sorted by confidence descending. Each detection is
    greedily assigned the highest-IoU unassigned GT with iou_3d >= threshold;
    each GT can absorb at most one detection.
    """
    assigned = [False] * len(gts)
    flags = []
    for det in dets:
        best_iou, best_j = 0.0, -1
        for j, gt in enumerate(gts):
            if assigned[j]:
                continue
            iou = iou_3d(det.box, gt)
            if iou >= threshold and iou > best_iou:
                best_iou, best_j = iou, j
        if best_j >= 0:
            assigned[best_j] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def average_precision(flags, confidences, n_gt: int, recall_points: int = 40):
    """Interpolated AP from TP/FP flags and confidences.

    Returns None (undefined) when there is neither GT nor detections; 0.0
    when there are detections but no GT.
    """
    if n_gt == 0:
        return None if len(flags) == 0 else 0.0
    order = np.argsort(-np.asarray(confidences, dtype=float), kind="stable")
    tp = np.cumsum([1 if flags[i] else 0 for i in order])
    fp = np.cumsum([0 if flags[i] else 1 for i in order])
    recalls = tp / n_gt
    precisions = tp / np.maximum(tp + fp, 1)
    total = 0.0
    for i in range(1, recall_points + 1):
        r = i / recall_points
        mask = recalls >= r
        total += float(precisions[mask].max()) if mask.any() else 0.0
    return total / recall_points


def map_over_classes(aps: dict) -> float:
    """Unweighted mean over classes with a defined AP."""
    defined = [v for v in aps.values() if v is not None]
    if not defined:
        raise ValueError("no class has a defined AP")
    return sum(defined) / len(defined)


def evaluate_frames(test_frames, detector, cfg: EvalConfig) -> dict:
    """Per-class AP + mAP of a detector over a test set.

    Detections are pooled across frames and ranked globally by confidence.
    Returns {'ap': {class: AP-or-None}, 'map': float}.
    """
    per_class = {cls: {"flags": [], "confs": [], "n_gt": 0} for cls in cfg.evaluated_classes}
    for frame in test_frames:
        dets = detector.infer(frame.cloud)
        for cls in cfg.evaluated_classes:
            cls_gts = [box for c, box in frame.gt_boxes if c == cls]
            cls_dets = sorted(
                (d for d in dets if d.class_name == cls),
                key=lambda d: -d.confidence,
            )
            flags = match_for_eval(cls_dets, cls_gts, cfg.iou_thresholds[cls])
            acc = per_class[cls]
            acc["flags"].extend(flags)
            acc["confs"].extend(d.confidence for d in cls_dets)
            acc["n_gt"] += len(cls_gts)
    aps = {
        cls: average_precision(
            acc["flags"], acc["confs"], acc["n_gt"], cfg.recall_points
        )
        for cls, acc in per_class.items()
    }
    return {"ap": aps, "map": map_over_classes(aps)}


def class_distribution(frames, classes=EVALUATED_CLASSES, denominator="evaluated"):
    """Per-class instance fractions over a set of frames.

    denominator 'evaluated' normalizes over the evaluated classes only
    (fractions sum to 1); 'all' normalizes over every non-DontCare label.
    Returns all zeros when the set carries no instances (degenerate).
    """
    counts = {cls: 0 for cls in classes}
    total_all = 0
    for frame in frames:
        for cls, _ in frame.gt_boxes:
            total_all += 1
            if cls in counts:
                counts[cls] += 1
    if denominator == "evaluated":
        denom = sum(counts.values())
    elif denominator == "all":
        denom = total_all
    else:
        raise ValueError(f"unknown denominator {denominator!r}")
    if denom == 0:
        return {cls: 0.0 for cls in classes}
    return {cls: n / denom for cls, n in counts.items()}


def inconsistency_proportion(history, chunk_size: int, cumulative: bool = False):
    """Fraction of inconsistent samples per selection chunk (or cumulatively)."""
    if not history:
        raise ValueError("empty cycle history")
    out = []
    run_incon, run_total = 0, 0
    for rec in history:
        n_sel = len(rec.selected_ids)
        if cumulative:
            run_incon += rec.n_inconsistent_selected
            run_total += n_sel
            out.append(run_incon / run_total if run_total else 0.0)
        else:
            out.append(rec.n_inconsistent_selected / chunk_size)
    return out


EVAL_CSV_HEADER = ["cycle_index", "labeled_fraction", "ap_car", "ap_pedestrian", "ap_cyclist", "map"]


def write_eval_csv(path, rows) -> None:
    """rows: iterables matching EVAL_CSV_HEADER; APs may be None (empty cell)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(EVAL_CSV_HEADER)
        for cycle_index, fraction, ap_car, ap_ped, ap_cyc, m in rows:
            w.writerow(
                [
                    cycle_index,
                    f"{fraction:.4f}",
                    *("" if v is None else f"{v:.4f}" for v in (ap_car, ap_ped, ap_cyc)),
                    f"{m:.4f}",
                ]
            )
