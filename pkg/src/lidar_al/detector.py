"""Detector contract plus a deterministic simulated detector.

The simulator stands in for a trained neural detector at desk scale. It is
oracle-backed: it looks up a frame's ground truth by the cloud's content
hash and emits each GT box with a probability that grows with the number of
labeled instances of that class seen at fit time. All randomness is keyed
by content hashes, so adding frames to a pool never perturbs the outcomes
on other frames, and reruns are bit-identical.
"""
from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .augmentation import mirror_detections
from .geometry import Box3D, points_in_box_mask, wrap_angle
from .inconsistency import Detection
from .util import content_hash, hash_u01, rng_from

# KITTI annotates out to roughly 80 m; detection probability decays to zero there.
MAX_RANGE_M = 80.0
YAW_JITTER_SIGMA = 0.05


class TrainingMode(enum.Enum):
    SCRATCH = "scratch"
    RETRAIN = "retrain"
    FINE_TUNE = "finetune"


class DetectorContract(Protocol):
    def infer(self, cloud: np.ndarray) -> list[Detection]: ...

    def fit(self, labeled, mode: TrainingMode, prior=None): ...


@dataclass(frozen=True)
class SimDetectorParams:
    seed: int = 0
    recall_floor: float = 0.1
    recall_ceiling: float = 0.95
    samples_to_half_quality: int = 100
    localization_sigma_base: float = 0.1
    confidence_noise_sigma: float = 0.05
    false_positive_rate: float = 0.2
    mirror_decorrelation: float = 0.3
    min_points_detectable: int = 1

    def __post_init__(self):
        if not (0.0 <= self.recall_floor <= self.recall_ceiling <= 1.0):
            raise ValueError("need 0 <= recall_floor <= recall_ceiling <= 1")
        if self.localization_sigma_base < 0 or self.confidence_noise_sigma < 0:
            raise ValueError("sigmas must be >= 0")
        if not (0.0 <= self.mirror_decorrelation <= 1.0):
            raise ValueError("mirror_decorrelation outside [0, 1]")


@dataclass(frozen=True)
class SimState:
    recall: dict  # class name -> recall in [recall_floor, recall_ceiling]
    stream_offset: int


def sim_fit(labeled, mode: TrainingMode, prior: SimState | None, params: SimDetectorParams) -> SimState:
    """Model the effect of a training round on per-class recall.

    Recall follows a saturating curve r = floor + (ceil - floor) * n/(n + k)
    in the labeled instance count n of each class. Scratch resets the RNG
    stream offset; Retrain/FineTune advance it to model path dependence.
    """
    frames = list(labeled)
    if mode is TrainingMode.SCRATCH and not frames:
        raise ValueError("Scratch training requires a non-empty labeled set")
    counts: dict[str, int] = {}
    for frame in frames:
        for cls, _ in frame.gt_boxes:
            counts[cls] = counts.get(cls, 0) + 1
    k = params.samples_to_half_quality
    span = params.recall_ceiling - params.recall_floor
    recall = {
        cls: params.recall_floor + span * n / (n + k) for cls, n in counts.items()
    }
    if mode is TrainingMode.SCRATCH or prior is None:
        offset = 0
    else:
        offset = prior.stream_offset + 1
    return SimState(recall=recall, stream_offset=offset)


def _distance_decay(range_m: float) -> float:
    return max(0.0, 1.0 - range_m / MAX_RANGE_M)


class SimDetector:
    """Oracle-backed simulated detector implementing DetectorContract.

    Frames must be registered before inference so that clouds can be mapped
    back to their ground truth. score_frame registers mirrored clouds via
    register_mirror, which is how the simulator tells the two inputs apart.
    """

    def __init__(self, params: SimDetectorParams, frames=()):
        self.params = params
        self.state: SimState | None = None
        # cloud content hash -> (frame, mirrored flag, canonical hash)
        self._registry: dict[bytes, tuple] = {}
        self.register_frames(frames)

    def register_frames(self, frames) -> None:
        for frame in frames:
            h = content_hash(frame.cloud)
            self._registry[h] = (frame, False, h)

    def register_mirror(self, original: np.ndarray, mirrored: np.ndarray) -> None:
        orig_hash = content_hash(original)
        entry = self._registry.get(orig_hash)
        if entry is not None:
            self._registry[content_hash(mirrored)] = (entry[0], True, orig_hash)

    def detect_mirror_flag(self, cloud: np.ndarray) -> bool:
        """True when the cloud was registered as a mirrored input."""
        entry = self._registry.get(content_hash(cloud))
        return False if entry is None else entry[1]

    def fit(self, labeled, mode: TrainingMode, prior: SimState | None = None) -> SimState:
        self.state = sim_fit(labeled, mode, prior, self.params)
        return self.state

    def infer(self, cloud: np.ndarray) -> list[Detection]:
        if self.state is None:
            raise RuntimeError("detector not fitted")
        entry = self._registry.get(content_hash(cloud))
        if entry is None:
            return []
        frame, mirrored, fhash = entry
        dets = self._detect_canonical(frame, mirrored, fhash)
        if mirrored:
            dets = mirror_detections(dets)
        return dets

    def _detect_canonical(self, frame, mirrored: bool, fhash: bytes) -> list[Detection]:
        """Detections in the original frame, with per-box decorrelated coins.

        All coins are keyed by the original cloud's hash. Boxes whose
        decorrelation coin fires draw side-specific randomness; all others
        share the original input's draws, so with decorrelation 0 the
        mirrored output is the exact mirror of the original output.
        """
        p = self.params
        st = self.state
        dets = []
        for idx, (cls, box) in enumerate(frame.gt_boxes):
            if p.min_points_detectable > 0:
                n_inside = int(points_in_box_mask(frame.cloud, box).sum())
                if n_inside < p.min_points_detectable:
                    continue
            decor = hash_u01(p.seed, "decor", fhash, idx) < p.mirror_decorrelation
            side = 1 if (mirrored and decor) else 0
            r_c = st.recall.get(cls, p.recall_floor)
            rng_range = float(np.hypot(box.center[0], box.center[1]))
            emit_p = r_c * _distance_decay(rng_range)
            u = hash_u01(p.seed, "det", fhash, idx, side, st.stream_offset)
            if u >= emit_p:
                continue
            rng = rng_from(p.seed, "noise", fhash, idx, side, st.stream_offset)
            sigma = p.localization_sigma_base * (1.0 + rng_range / 50.0)
            jitter = rng.normal(0.0, sigma, size=3) if sigma > 0 else np.zeros(3)
            yaw_j = rng.normal(0.0, YAW_JITTER_SIGMA) if sigma > 0 else 0.0
            conf_noise = (
                rng.normal(0.0, p.confidence_noise_sigma)
                if p.confidence_noise_sigma > 0
                else 0.0
            )
            dets.append(
                Detection(
                    class_name=cls,
                    box=Box3D(
                        center=(
                            box.center[0] + jitter[0],
                            box.center[1] + jitter[1],
                            box.center[2] + jitter[2],
                        ),
                        dims=box.dims,
                        yaw=wrap_angle(box.yaw + yaw_j),
                    ),
                    confidence=float(np.clip(r_c + conf_noise, 0.0, 1.0)),
                )
            )
        dets.extend(self._false_positives(frame, fhash, mirrored))
        return dets

    def _false_positives(self, frame, fhash: bytes, mirrored: bool) -> list[Detection]:
        p = self.params
        if p.false_positive_rate <= 0 or len(frame.cloud) == 0:
            return []
        decor = hash_u01(p.seed, "fpdecor", fhash) < p.mirror_decorrelation
        side = 1 if (mirrored and decor) else 0
        rng = rng_from(p.seed, "fp", fhash, side, self.state.stream_offset)
        n_fp = rng.poisson(p.false_positive_rate)
        if n_fp == 0:
            return []
        lo = frame.cloud[:, :3].min(axis=0)
        hi = frame.cloud[:, :3].max(axis=0)
        classes = sorted(st_cls for st_cls in self.state.recall) or ["Car"]
        out = []
        for _ in range(n_fp):
            center = rng.uniform(lo, hi)
            dims = (rng.uniform(1.0, 5.0), rng.uniform(0.5, 2.5), rng.uniform(1.0, 2.0))
            out.append(
                Detection(
                    class_name=classes[rng.integers(len(classes))],
                    box=Box3D(
                        center=tuple(center), dims=dims, yaw=rng.uniform(-np.pi, np.pi)
                    ),
                    confidence=float(rng.uniform(0.05, 0.6)),
                )
            )
        return out


_STATE_MAGIC = b"SIMDET\x00"
_STATE_VERSION = 1


def save_state(state: SimState, path) -> None:
    """Write a detector state blob (magic + version + JSON payload)."""
    payload = json.dumps(
        {"recall": state.recall, "stream_offset": state.stream_offset},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_STATE_MAGIC)
        f.write(struct.pack("<I", _STATE_VERSION))
        f.write(struct.pack("<Q", len(payload)))
        f.write(payload)


def load_state(path) -> SimState:
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(_STATE_MAGIC):
        raise ValueError("not a detector state file (bad magic)")
    version = struct.unpack_from("<I", data, len(_STATE_MAGIC))[0]
    if version != _STATE_VERSION:
        raise ValueError(f"unsupported detector state version {version}")
    (length,) = struct.unpack_from("<Q", data, len(_STATE_MAGIC) + 4)
    payload = data[len(_STATE_MAGIC) + 12 : len(_STATE_MAGIC) + 12 + length]
    obj = json.loads(payload.decode("utf-8"))
    return SimState(recall=obj["recall"], stream_offset=obj["stream_offset"])
