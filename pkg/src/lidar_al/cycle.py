"""Active-learning cycle orchestration.

One cycle: score the pool (skipped after the first pass in pseudo mode),
rank by inconsistency, move a fixed-size chunk into the labeled set, train
per the configured mode, evaluate on the held-out test set. The chunk size
is a fraction of the ORIGINAL dataset size, not the shrinking pool.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .detector import TrainingMode
from .evaluation import EvalConfig, evaluate_frames
from .inconsistency import MatchConfig, score_frame
from .util import derive_seed, hash_u64, rng_from


class CycleError(RuntimeError):
    """Failure inside the AL loop, annotated with the cycle index."""


class Ordering(enum.Enum):
    ASCENDING = "ascending"
    DESCENDING = "descending"
    # random baseline: same accounting/eval path, ranking replaced by a
    # seeded shuffle
    SHUFFLE = "shuffle"


class ScoreKind(enum.Enum):
    NOB = "nob"
    IOU = "iou"


@dataclass(frozen=True)
class CycleConfig:
    initial_fraction: float = 0.1
    chunk_fraction: float = 0.1
    ordering: Ordering = Ordering.ASCENDING
    score_kind: ScoreKind = ScoreKind.NOB
    normalized: bool = True
    training_mode: TrainingMode = TrainingMode.SCRATCH
    pseudo: bool = False
    seed: int = 0
    match_config: MatchConfig = field(default_factory=MatchConfig)

    def __post_init__(self):
        if not (0.0 < self.initial_fraction < 1.0):
            raise ValueError("initial_fraction outside (0, 1)")
        if not (0.0 < self.chunk_fraction <= 1.0 - self.initial_fraction):
            raise ValueError("chunk_fraction outside (0, 1 - initial_fraction]")


@dataclass
class CycleState:
    labeled: list
    pool: list
    cycle_index: int = 0
    history: list = field(default_factory=list)


@dataclass
class CycleRecord:
    cycle_index: int
    selected_ids: list
    n_inconsistent_selected: int
    n_consistent_fill: int
    class_instance_counts: dict
    labeled_size: int
    eval: dict | None = None
    # inconsistency records used for this cycle's ranking (None when the
    # pseudo-mode loop reuses the first pass)
    records: list | None = None


@dataclass
class RunResult:
    history: list
    scoring_passes: int
    initial_records: list
    n_total: int
    chunk_size: int
    final_state: object = None


def initial_split(all_ids, cfg: CycleConfig) -> CycleState:
    """Seeded uniform random initial labeled/pool split."""
    ids = list(all_ids)
    if len(ids) < 2:
        raise ValueError("need at least 2 frame ids to split")
    n_labeled = math.ceil(cfg.initial_fraction * len(ids))
    rng = rng_from(cfg.seed, "split")
    perm = rng.permutation(len(ids))
    labeled = sorted(ids[i] for i in perm[:n_labeled])
    pool = sorted(ids[i] for i in perm[n_labeled:])
    return CycleState(labeled=labeled, pool=pool)


def rank_pool(records, score_kind: ScoreKind, ordering: Ordering, seed: int):
    """Order pool frames for selection.

    Three strata: positive scores sorted per the ordering, zero scores
    seeded-shuffled, discarded frames seeded-shuffled last. Ties within the
    positive stratum break by seeded shuffle then frame id. The SHUFFLE
    ordering ignores scores entirely (random baseline).
    """

    def tie(fid):
        return hash_u64(seed, "tie", fid)

    if ordering is Ordering.SHUFFLE:
        return [r.frame_id for r in sorted(records, key=lambda r: (tie(r.frame_id), r.frame_id))]

    positive, zero, discarded = [], [], []
    for r in records:
        s = r.score(score_kind)
        if r.discarded or s is None:
            discarded.append(r)
        elif s > 0:
            positive.append(r)
        else:
            zero.append(r)
    sign = 1.0 if ordering is Ordering.ASCENDING else -1.0
    positive.sort(key=lambda r: (sign * r.score(score_kind), tie(r.frame_id), r.frame_id))
    zero.sort(key=lambda r: (tie(r.frame_id), r.frame_id))
    discarded.sort(key=lambda r: (tie(r.frame_id), r.frame_id))
    return [r.frame_id for r in positive + zero + discarded]


def select_chunk(state: CycleState, ranked, chunk_size: int, records_by_id, score_kind: ScoreKind):
    """Move the first chunk_size ranked ids from pool to labeled.

    Returns (selected ids, n_inconsistent, n_fill). The final chunk may be
    short when the pool runs out.
    """
    pool_set = set(state.pool)
    if set(ranked) != pool_set:
        missing = pool_set - set(ranked)
        extra = set(ranked) - pool_set
        raise ValueError(
            f"ranking does not cover the pool (missing {sorted(missing)[:3]}, "
            f"extra {sorted(extra)[:3]})"
        )
    selected = ranked[: min(chunk_size, len(ranked))]
    n_incon = 0
    for fid in selected:
        rec = records_by_id.get(fid)
        if rec is None:
            raise ValueError(f"no inconsistency record for pool frame {fid}")
        s = rec.score(score_kind)
        if not rec.discarded and s is not None and s > 0:
            n_incon += 1
    state.labeled = sorted(state.labeled + list(selected))
    state.pool = [fid for fid in state.pool if fid not in set(selected)]
    return list(selected), n_incon, len(selected) - n_incon


def _class_counts(frames) -> dict:
    counts = {}
    for frame in frames:
        for cls, _ in frame.gt_boxes:
            counts[cls] = counts.get(cls, 0) + 1
    return counts


def run(al_frames, test_frames, cfg: CycleConfig, detector, eval_cfg: EvalConfig | None = None) -> RunResult:
    """Execute the full loop until the pool is empty."""
    frames_by_id = {f.frame_id: f for f in al_frames}
    if len(frames_by_id) != len(al_frames):
        raise ValueError("duplicate frame ids in the AL split")
    ids = [f.frame_id for f in al_frames]
    n_total = len(ids)
    chunk_size = math.ceil(cfg.chunk_fraction * n_total)
    state = initial_split(ids, cfg)

    def labeled_frames():
        return [frames_by_id[fid] for fid in state.labeled]

    prior = detector.fit(labeled_frames(), TrainingMode.SCRATCH, None)
    scoring_passes = 0
    initial_records: list = []
    pseudo_order: list = []

    while state.pool:
        state.cycle_index += 1
        i = state.cycle_index
        try:
            cycle_records = None
            if i == 1 or not cfg.pseudo:
                cycle_records = [
                    score_frame(
                        frames_by_id[fid], detector, cfg.match_config, cfg.normalized
                    )
                    for fid in state.pool
                ]
                scoring_passes += 1
            if i == 1:
                initial_records = cycle_records
                pseudo_order = rank_pool(
                    cycle_records, cfg.score_kind, cfg.ordering, derive_seed(cfg.seed, "rank", 1)
                )
            if cfg.pseudo:
                pool_set = set(state.pool)
                ranked = [fid for fid in pseudo_order if fid in pool_set]
                records_by_id = {r.frame_id: r for r in initial_records}
            else:
                ranked = rank_pool(
                    cycle_records, cfg.score_kind, cfg.ordering, derive_seed(cfg.seed, "rank", i)
                )
                records_by_id = {r.frame_id: r for r in cycle_records}
            selected, n_incon, n_fill = select_chunk(
                state, ranked, chunk_size, records_by_id, cfg.score_kind
            )

            if cfg.training_mode is TrainingMode.SCRATCH:
                prior = detector.fit(labeled_frames(), TrainingMode.SCRATCH, None)
            elif cfg.training_mode is TrainingMode.RETRAIN:
                prior = detector.fit(labeled_frames(), TrainingMode.RETRAIN, prior)
            else:
                chunk_frames = [frames_by_id[fid] for fid in selected]
                prior = detector.fit(chunk_frames, TrainingMode.FINE_TUNE, prior)

            eval_result = None
            if eval_cfg is not None and test_frames:
                eval_result = evaluate_frames(test_frames, detector, eval_cfg)

            state.history.append(
                CycleRecord(
                    cycle_index=i,
                    selected_ids=selected,
                    n_inconsistent_selected=n_incon,
                    n_consistent_fill=n_fill,
                    class_instance_counts=_class_counts(labeled_frames()),
                    labeled_size=len(state.labeled),
                    eval=eval_result,
                    records=cycle_records,
                )
            )
        except CycleError:
            raise
        except Exception as e:
            raise CycleError(f"cycle {i}: {e}") from e

    return RunResult(
        history=state.history,
        scoring_passes=scoring_passes,
        initial_records=initial_records,
        n_total=n_total,
        chunk_size=chunk_size,
        final_state=prior,
    )
