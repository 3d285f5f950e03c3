"""Per-frame inconsistency scores between original and mirrored predictions.

Two scores are computed from the detector's output on a cloud and on its
mirrored copy (mapped back into the original frame first):

  * number-of-boxes score: |N_o - N_a| / max(N_o, N_a) when normalized,
    |N_o - N_a| otherwise;
  * IoU-matching score: (max(N_o, N_a) - N_m) / max(N_o, N_a), where N_m is
    the number of greedily IoU-matched box pairs.

Frames with no detections on either side are discarded from scoring.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field

from .augmentation import mirror_cloud, mirror_detections
from .geometry import Box3D, iou_3d, iou_bev


class ScoringError(RuntimeError):
    """Detector or scoring failure, annotated with the frame id."""


class IoUKind(enum.Enum):
    BEV3D = "bev3d"  # volume IoU
    BEV = "bev"  # footprint IoU


@dataclass(frozen=True)
class Detection:
    class_name: str
    box: Box3D
    confidence: float

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class MatchConfig:
    iou_threshold: float = 0.5
    class_aware: bool = True
    iou_kind: IoUKind = IoUKind.BEV3D

    def __post_init__(self):
        if not (0.0 < self.iou_threshold < 1.0):
            raise ValueError(f"iou_threshold {self.iou_threshold} outside (0, 1)")

    def iou(self, a: Box3D, b: Box3D) -> float:
        return iou_3d(a, b) if self.iou_kind is IoUKind.BEV3D else iou_bev(a, b)


@dataclass(frozen=True)
class InconsistencyRecord:
    frame_id: str
    n_original: int
    n_augmented: int
    n_matched: int
    s_nob: float | None
    s_iou: float | None
    discarded: bool

    def score(self, kind) -> float | None:
        from .cycle import ScoreKind  # local import, avoids a cycle

        return self.s_nob if kind is ScoreKind.NOB else self.s_iou


def score_nob(n_o: int, n_a: int, normalized: bool = True) -> float | None:
    """Number-of-boxes score; None means the frame is discarded."""
    if n_o == 0 and n_a == 0:
        return None
    diff = abs(n_o - n_a)
    if not normalized:
        return float(diff)
    return diff / max(n_o, n_a)


def match_boxes(orig, aug_back, cfg: MatchConfig):
    """Greedy one-to-one matching between the two detection sets.

    Candidate pairs with IoU >= threshold (same class when class_aware) are
    taken in descending IoU order; ties break by (orig index, aug index).
    Returns a list of (orig_index, aug_index, iou) triples.
    """
    candidates = []
    for i, d_o in enumerate(orig):
        for j, d_a in enumerate(aug_back):
            if cfg.class_aware and d_o.class_name != d_a.class_name:
                continue
            iou = cfg.iou(d_o.box, d_a.box)
            if iou >= cfg.iou_threshold:
                candidates.append((i, j, iou))
    candidates.sort(key=lambda c: (-c[2], c[0], c[1]))
    used_o, used_a = set(), set()
    matches = []
    for i, j, iou in candidates:
        if i in used_o or j in used_a:
            continue
        used_o.add(i)
        used_a.add(j)
        matches.append((i, j, iou))
    return matches


def score_iou(orig, aug_back, cfg: MatchConfig) -> float | None:
    """IoU-matching score; None means the frame is discarded."""
    n_o, n_a = len(orig), len(aug_back)
    if n_o == 0 and n_a == 0:
        return None
    n_m = len(match_boxes(orig, aug_back, cfg))
    n_max = max(n_o, n_a)
    return (n_max - n_m) / n_max


def score_frame(frame, detector, cfg: MatchConfig, normalized: bool = True) -> InconsistencyRecord:
    """Run the detector on a frame and its mirror, compare, fill one record."""
    try:
        orig = detector.infer(frame.cloud)
        mirrored = mirror_cloud(frame.cloud)
        register = getattr(detector, "register_mirror", None)
        if register is not None:
            register(frame.cloud, mirrored)
        aug = detector.infer(mirrored)
    except Exception as e:
        raise ScoringError(f"frame {frame.frame_id}: {e}") from e
    aug_back = mirror_detections(aug)
    n_o, n_a = len(orig), len(aug_back)
    if n_o == 0 and n_a == 0:
        return InconsistencyRecord(frame.frame_id, 0, 0, 0, None, None, True)
    matches = match_boxes(orig, aug_back, cfg)
    n_max = max(n_o, n_a)
    return InconsistencyRecord(
        frame_id=frame.frame_id,
        n_original=n_o,
        n_augmented=n_a,
        n_matched=len(matches),
        s_nob=score_nob(n_o, n_a, normalized),
        s_iou=(n_max - len(matches)) / n_max,
        discarded=False,
    )


CSV_HEADER = ["frame_id", "n_original", "n_augmented", "n_matched", "s_nob", "s_iou", "discarded"]


def write_records_csv(records, path) -> None:
    """Dump records: fixed 6-decimal scores, empty cell when absent."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow(
                [
                    r.frame_id,
                    r.n_original,
                    r.n_augmented,
                    r.n_matched,
                    "" if r.s_nob is None else f"{r.s_nob:.6f}",
                    "" if r.s_iou is None else f"{r.s_iou:.6f}",
                    "true" if r.discarded else "false",
                ]
            )
