"""Run manifest: key = value configuration file for reproducible runs.

Every knob has a documented default; unknown keys are rejected. All
randomness in a run (split, tie-breaking, simulator) derives from the one
`seed` key.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

from .cycle import CycleConfig, Ordering, ScoreKind
from .detector import SimDetectorParams, TrainingMode
from .evaluation import EvalConfig
from .inconsistency import IoUKind, MatchConfig
from .util import derive_seed


class ManifestError(ValueError):
    """Bad manifest syntax, unknown key, or invalid value."""


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_enum(enum_cls):
    def parse(s: str):
        try:
            return enum_cls(s.strip().lower())
        except ValueError:
            valid = ", ".join(e.value for e in enum_cls)
            raise ValueError(f"expected one of [{valid}], got {s!r}") from None

    return parse


@dataclass
class RunManifest:
    dataset_root: str = ""
    al_split: str = ""
    test_split: str = ""
    out_dir: str = ""
    seed: int = 0
    initial_fraction: float = 0.1
    chunk_fraction: float = 0.1
    ordering: Ordering = Ordering.ASCENDING
    score_kind: ScoreKind = ScoreKind.NOB
    normalized: bool = True
    training_mode: TrainingMode = TrainingMode.SCRATCH
    pseudo: bool = False
    iou_threshold: float = 0.5
    class_aware: bool = True
    iou_kind: IoUKind = IoUKind.BEV3D
    sim_recall_floor: float = 0.1
    sim_recall_ceiling: float = 0.95
    sim_samples_to_half_quality: int = 100
    sim_localization_sigma_base: float = 0.1
    sim_confidence_noise_sigma: float = 0.05
    sim_false_positive_rate: float = 0.2
    sim_mirror_decorrelation: float = 0.3
    sim_min_points_detectable: int = 1
    eval_recall_points: int = 40
    eval_iou_car: float = 0.7
    eval_iou_pedestrian: float = 0.5
    eval_iou_cyclist: float = 0.5

    def cycle_config(self) -> CycleConfig:
        return CycleConfig(
            initial_fraction=self.initial_fraction,
            chunk_fraction=self.chunk_fraction,
            ordering=self.ordering,
            score_kind=self.score_kind,
            normalized=self.normalized,
            training_mode=self.training_mode,
            pseudo=self.pseudo,
            seed=self.seed,
            match_config=MatchConfig(
                iou_threshold=self.iou_threshold,
                class_aware=self.class_aware,
                iou_kind=self.iou_kind,
            ),
        )

    def sim_params(self) -> SimDetectorParams:
        return SimDetectorParams(
            seed=derive_seed(self.seed, "sim"),
            recall_floor=self.sim_recall_floor,
            recall_ceiling=self.sim_recall_ceiling,
            samples_to_half_quality=self.sim_samples_to_half_quality,
            localization_sigma_base=self.sim_localization_sigma_base,
            confidence_noise_sigma=self.sim_confidence_noise_sigma,
            false_positive_rate=self.sim_false_positive_rate,
            mirror_decorrelation=self.sim_mirror_decorrelation,
            min_points_detectable=self.sim_min_points_detectable,
        )

    def eval_config(self) -> EvalConfig:
        return EvalConfig(
            iou_thresholds={
                "Car": self.eval_iou_car,
                "Pedestrian": self.eval_iou_pedestrian,
                "Cyclist": self.eval_iou_cyclist,
            },
            recall_points=self.eval_recall_points,
        )

    def to_text(self) -> str:
        """Serialize every effective value (round-trips through parse)."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (Ordering, ScoreKind, TrainingMode, IoUKind)):
                v = v.value
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_PARSERS = {
    "dataset_root": str,
    "al_split": str,
    "test_split": str,
    "out_dir": str,
    "seed": int,
    "initial_fraction": float,
    "chunk_fraction": float,
    "ordering": _parse_enum(Ordering),
    "score_kind": _parse_enum(ScoreKind),
    "normalized": _parse_bool,
    "training_mode": _parse_enum(TrainingMode),
    "pseudo": _parse_bool,
    "iou_threshold": float,
    "class_aware": _parse_bool,
    "iou_kind": _parse_enum(IoUKind),
    "sim_recall_floor": float,
    "sim_recall_ceiling": float,
    "sim_samples_to_half_quality": int,
    "sim_localization_sigma_base": float,
    "sim_confidence_noise_sigma": float,
    "sim_false_positive_rate": float,
    "sim_mirror_decorrelation": float,
    "sim_min_points_detectable": int,
    "eval_recall_points": int,
    "eval_iou_car": float,
    "eval_iou_pedestrian": float,
    "eval_iou_cyclist": float,
}


def parse_manifest(text: str) -> RunManifest:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ManifestError(f"line {lineno}: expected 'key = value': {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _PARSERS:
            raise ManifestError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ManifestError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](val)
        except ValueError as e:
            raise ManifestError(f"line {lineno}: bad value for {key}: {e}") from e
    return RunManifest(**values)


def load_manifest(path) -> RunManifest:
    with open(path) as f:
        return parse_manifest(f.read())
