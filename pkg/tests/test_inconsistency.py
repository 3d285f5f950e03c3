import itertools
import math

import numpy as np
import pytest

from helpers import make_frame, random_box
from lidar_al.augmentation import mirror_detections
from lidar_al.geometry import Box3D
from lidar_al.inconsistency import (
    CSV_HEADER,
    Detection,
    InconsistencyRecord,
    IoUKind,
    MatchConfig,
    ScoringError,
    match_boxes,
    score_frame,
    score_iou,
    score_nob,
    write_records_csv,
)


def det(x=0.0, y=0.0, z=0.0, l=4.0, w=2.0, h=1.5, yaw=0.0, cls="Car", conf=0.9):
    return Detection(cls, Box3D(center=(x, y, z), dims=(l, w, h), yaw=yaw), conf)


class TestScoreNob:
    def test_paper_worked_examples(self):
        assert score_nob(2, 4) == 0.5
        assert score_nob(20, 22) == 2 / 22
        assert round(score_nob(20, 22), 2) == 0.09

    def test_both_zero_discarded(self):
        assert score_nob(0, 0) is None
        assert score_nob(0, 0, normalized=False) is None

    def test_equal_counts(self):
        assert score_nob(5, 5) == 0.0

    def test_unnormalized(self):
        assert score_nob(2, 4, normalized=False) == 2.0

    def test_symmetry_and_bounds(self):
        for a, b in itertools.product(range(12), repeat=2):
            if a == 0 and b == 0:
                continue
            s = score_nob(a, b)
            assert s == score_nob(b, a)
            assert 0.0 <= s <= 1.0
            assert score_nob(a, b, normalized=False) == score_nob(b, a, normalized=False)


class TestMatchBoxes:
    def test_identical_box(self):
        matches = match_boxes([det()], [det()], MatchConfig())
        assert matches == [(0, 0, 1.0)]

    def test_disjoint(self):
        assert match_boxes([det()], [det(x=100)], MatchConfig()) == []

    def test_prefers_higher_iou(self):
        a = det()
        b_low = det(x=1.2)  # lower overlap
        b_high = det(x=0.3)  # higher overlap
        matches = match_boxes([a], [b_low, b_high], MatchConfig(iou_threshold=0.2))
        assert len(matches) == 1
        assert matches[0][0] == 0 and matches[0][1] == 1

    def test_class_aware_blocks_cross_class(self):
        matches = match_boxes([det(cls="Car")], [det(cls="Pedestrian")], MatchConfig())
        assert matches == []
        matches = match_boxes(
            [det(cls="Car")], [det(cls="Pedestrian")], MatchConfig(class_aware=False)
        )
        assert len(matches) == 1

    def test_bev_kind_ignores_z_offset(self):
        a, b = det(), det(z=10.0)
        assert match_boxes([a], [b], MatchConfig()) == []
        assert len(match_boxes([a], [b], MatchConfig(iou_kind=IoUKind.BEV))) == 1

    def test_one_to_one_and_thresholded(self):
        rng = np.random.default_rng(53)
        for _ in range(30):
            orig = [det(x=rng.uniform(0, 20), y=rng.uniform(-5, 5)) for _ in range(4)]
            aug = [det(x=rng.uniform(0, 20), y=rng.uniform(-5, 5)) for _ in range(4)]
            cfg = MatchConfig(iou_threshold=0.3)
            matches = match_boxes(orig, aug, cfg)
            assert len({i for i, _, _ in matches}) == len(matches)
            assert len({j for _, j, _ in matches}) == len(matches)
            for i, j, iou in matches:
                assert iou >= cfg.iou_threshold
                assert orig[i].class_name == aug[j].class_name

    def test_single_orig_two_candidates_brute_force(self):
        # oracle: exhaustive one-to-one assignments maximizing match count
        # then total IoU agrees with greedy for this construction
        a = det(x=0)
        b1 = det(x=1.0)
        b2 = det(x=0.4)
        cfg = MatchConfig(iou_threshold=0.3)
        iou1, iou2 = cfg.iou(a.box, b1.box), cfg.iou(a.box, b2.box)
        assert iou1 < iou2
        best = max(
            [(1, iou1, (0, 0)), (1, iou2, (0, 1)), (0, 0.0, None)],
            key=lambda t: (t[0], t[1]),
        )
        matches = match_boxes([a], [b1, b2], cfg)
        assert matches == [(0, 1, iou2)]
        assert (len(matches), matches[0][2]) == (best[0], best[1])

    def test_greedy_never_exceeds_optimal_cardinality(self):
        rng = np.random.default_rng(59)
        cfg = MatchConfig(iou_threshold=0.2)
        for _ in range(25):
            orig = [det(x=rng.uniform(0, 10)) for _ in range(3)]
            aug = [det(x=rng.uniform(0, 10)) for _ in range(3)]
            ious = {
                (i, j)
                for i, o in enumerate(orig)
                for j, a in enumerate(aug)
                if cfg.iou(o.box, a.box) >= cfg.iou_threshold
            }
            best = 0
            for r in range(len(orig) + 1):
                for subset in itertools.permutations(range(len(aug)), r):
                    for picks in itertools.combinations(range(len(orig)), r):
                        if all((i, j) in ious for i, j in zip(picks, subset)):
                            best = max(best, r)
            assert len(match_boxes(orig, aug, cfg)) <= best


class TestScoreIou:
    def test_all_matched(self):
        dets = [det(x=5 * i) for i in range(3)]
        assert score_iou(dets, list(dets), MatchConfig()) == 0.0

    def test_zero_matches(self):
        orig = [det(x=5 * i) for i in range(3)]
        aug = [det(x=100 + 5 * i) for i in range(3)]
        assert score_iou(orig, aug, MatchConfig()) == 1.0

    def test_partial_match_closed_form(self):
        # N_o=4, N_a=2, exactly 2 pairs overlap above threshold
        orig = [det(x=0), det(x=10), det(x=50), det(x=60)]
        aug = [det(x=0.2), det(x=10.2)]
        assert score_iou(orig, aug, MatchConfig(iou_threshold=0.5)) == 0.5

    def test_both_empty_discarded(self):
        assert score_iou([], [], MatchConfig()) is None

    def test_monotone_in_matches(self):
        # fixed max(N_o, N_a) = 4: score strictly decreases as N_m grows
        scores = []
        for n_m in range(5):
            orig = [det(x=20 * i) for i in range(4)]
            aug = [det(x=20 * i + (0.1 if i < n_m else 9.0)) for i in range(4)]
            scores.append(score_iou(orig, aug, MatchConfig(iou_threshold=0.5)))
        assert scores == sorted(scores, reverse=True)
        assert len(set(scores)) == 5


class _StubDetector:
    """Mirror-equivariant stub: returns a frame's GT boxes as detections."""

    def __init__(self, frames):
        self._clouds = {f.cloud.tobytes(): f for f in frames}
        self._mirrored = {}

    def register_mirror(self, original, mirrored):
        frame = self._clouds.get(original.tobytes())
        if frame is not None:
            self._mirrored[mirrored.tobytes()] = frame

    def infer(self, cloud):
        key = cloud.tobytes()
        if key in self._clouds:
            return [Detection(c, b, 0.9) for c, b in self._clouds[key].gt_boxes]
        frame = self._mirrored.get(key)
        if frame is None:
            return []
        return mirror_detections(
            [Detection(c, b, 0.9) for c, b in frame.gt_boxes]
        )


class _FailingDetector:
    def infer(self, cloud):
        raise RuntimeError("inference backend exploded")


class TestScoreFrame:
    def test_empty_detector_discards(self):
        frame = make_frame("000000", np.random.default_rng(61), n_objects=0)

        class Empty:
            def infer(self, cloud):
                return []

        rec = score_frame(frame, Empty(), MatchConfig())
        assert rec.discarded
        assert rec.s_nob is None and rec.s_iou is None

    def test_mirror_equivariant_stub_scores_zero(self):
        rng = np.random.default_rng(67)
        frames = [make_frame(f"{i:06d}", rng, n_objects=3) for i in range(5)]
        stub = _StubDetector(frames)
        for frame in frames:
            rec = score_frame(frame, stub, MatchConfig())
            assert rec.s_nob == 0.0
            assert rec.s_iou == 0.0
            assert rec.n_matched == rec.n_original == rec.n_augmented

    def test_count_mismatch_gives_half(self):
        frame = make_frame("000000", np.random.default_rng(71), n_objects=2)

        class TwoFour:
            def __init__(self):
                self.calls = 0

            def infer(self, cloud):
                self.calls += 1
                n = 2 if self.calls == 1 else 4
                return [det(x=100 + 30 * i) for i in range(n)]

        rec = score_frame(frame, TwoFour(), MatchConfig())
        assert rec.s_nob == 0.5

    def test_detector_failure_carries_frame_id(self):
        frame = make_frame("000123", np.random.default_rng(73), n_objects=1)
        with pytest.raises(ScoringError, match="000123"):
            score_frame(frame, _FailingDetector(), MatchConfig())


class TestRecordCsv:
    def test_format(self, tmp_path):
        records = [
            InconsistencyRecord("000000", 2, 4, 1, 0.5, 0.75, False),
            InconsistencyRecord("000001", 0, 0, 0, None, None, True),
        ]
        path = tmp_path / "inconsistency.csv"
        write_records_csv(records, path)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(CSV_HEADER)
        assert lines[1] == "000000,2,4,1,0.500000,0.750000,false"
        assert lines[2] == "000001,0,0,0,,,true"


def test_match_config_validation():
    with pytest.raises(ValueError):
        MatchConfig(iou_threshold=0.0)
    with pytest.raises(ValueError):
        MatchConfig(iou_threshold=1.0)


def test_detection_confidence_validated():
    with pytest.raises(ValueError):
        det(conf=1.5)
