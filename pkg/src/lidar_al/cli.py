"""Command-line entry point: split / score / run / report.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys

from . import kitti, report
from .cycle import run as run_cycle
from .detector import SimDetector, TrainingMode
from .inconsistency import ScoringError, score_frame, write_records_csv
from .evaluation import write_eval_csv
from .manifest import ManifestError, load_manifest
from .report import ReportError
from .util import rng_from

# canonical KITTI train split: 3712 AL / 3769 test of 7481 frames
DEFAULT_AL_FRACTION = 3712 / 7481

CYCLES_CSV_HEADER = [
    "cycle_index",
    "labeled_fraction",
    "ap_car",
    "ap_pedestrian",
    "ap_cyclist",
    "map",
    "n_inconsistent_selected",
    "n_consistent_fill",
    "count_car",
    "count_pedestrian",
    "count_cyclist",
]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class _Lock:
    """Advisory lock: two commands writing one output dir are unsupported."""

    def __init__(self, out_dir):
        self.path = os.path.join(out_dir, ".lock")

    def __enter__(self):
        if os.path.exists(self.path):
            raise RuntimeError(
                f"output directory is locked by another command: {self.path}"
            )
        with open(self.path, "w") as f:
            f.write(str(os.getpid()))
        return self

    def __exit__(self, *exc):
        if os.path.exists(self.path):
            os.remove(self.path)


def _refuse_overwrite(paths, force: bool) -> None:
    for p in paths:
        if os.path.exists(p) and not force:
            raise FileExistsError(f"{p} exists; pass --force to overwrite")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lidar-al", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_split = sub.add_parser("split", help="write al.txt/test.txt index files")
    p_split.add_argument("--root", required=True, help="KITTI train root")
    p_split.add_argument("--seed", type=int, default=0)
    p_split.add_argument("--out", required=True, help="output directory")
    p_split.add_argument(
        "--al-fraction",
        type=float,
        default=DEFAULT_AL_FRACTION,
        help="fraction of frames assigned to the AL split",
    )
    p_split.add_argument("--force", action="store_true")

    for name in ("score", "run"):
        p = sub.add_parser(name)
        p.add_argument("--manifest", required=True)
        p.add_argument("--seed", type=int, default=None, help="override manifest seed")
        p.add_argument("--out", default=None, help="override manifest out_dir")
        p.add_argument("--force", action="store_true")

    p_rep = sub.add_parser("report", help="SVG plots + baseline comparison")
    p_rep.add_argument("run_dirs", nargs="+")
    p_rep.add_argument("--baseline", default=None, help="baseline run dir (default: first)")
    p_rep.add_argument("--out", required=True)
    p_rep.add_argument("--force", action="store_true")
    return parser


def cmd_split(args) -> int:
    velo_dir = os.path.join(args.root, "velodyne")
    if not os.path.isdir(velo_dir):
        raise FileNotFoundError(
            f"{velo_dir} not found; --root must point at a KITTI train root "
            "containing velodyne/, label_2/ and calib/"
        )
    ids = sorted(
        os.path.splitext(name)[0]
        for name in os.listdir(velo_dir)
        if name.endswith(".bin")
    )
    if not ids:
        raise FileNotFoundError(f"no .bin files under {velo_dir}")
    os.makedirs(args.out, exist_ok=True)
    al_path = os.path.join(args.out, "al.txt")
    test_path = os.path.join(args.out, "test.txt")
    _refuse_overwrite([al_path, test_path], args.force)
    n_al = int(round(len(ids) * args.al_fraction))
    rng = rng_from(args.seed, "dataset_split")
    perm = rng.permutation(len(ids))
    al_ids = sorted(ids[i] for i in perm[:n_al])
    test_ids = sorted(ids[i] for i in perm[n_al:])
    kitti.write_index(al_path, al_ids)
    kitti.write_index(test_path, test_ids)
    print(f"wrote {al_path} ({len(al_ids)} ids), {test_path} ({len(test_ids)} ids)")
    return 0


def _load_manifest_for(args):
    m = load_manifest(args.manifest)
    if args.seed is not None:
        m.seed = args.seed
    if args.out is not None:
        m.out_dir = args.out
    if not m.out_dir:
        raise ManifestError("out_dir not set (manifest key or --out)")
    if not m.dataset_root:
        raise ManifestError("dataset_root not set in manifest")
    return m


def cmd_score(args) -> int:
    m = _load_manifest_for(args)
    ids = kitti.read_index(m.al_split)
    frames = kitti.load_dataset(m.dataset_root, ids)
    os.makedirs(m.out_dir, exist_ok=True)
    out_path = os.path.join(m.out_dir, "inconsistency.csv")
    _refuse_overwrite([out_path], args.force)
    cfg = m.cycle_config()
    from .cycle import initial_split

    state = initial_split(ids, cfg)
    by_id = {f.frame_id: f for f in frames}
    detector = SimDetector(m.sim_params(), frames)
    detector.fit([by_id[fid] for fid in state.labeled], TrainingMode.SCRATCH, None)
    with _Lock(m.out_dir):
        records = [
            score_frame(by_id[fid], detector, cfg.match_config, cfg.normalized)
            for fid in state.pool
        ]
        write_records_csv(records, out_path)
    print(f"wrote {out_path} ({len(records)} rows)")
    return 0


def cmd_run(args) -> int:
    m = _load_manifest_for(args)
    al_ids = kitti.read_index(m.al_split)
    test_ids = kitti.read_index(m.test_split) if m.test_split else []
    al_frames = kitti.load_dataset(m.dataset_root, al_ids)
    test_frames = kitti.load_dataset(m.dataset_root, test_ids)
    os.makedirs(m.out_dir, exist_ok=True)
    cycles_path = os.path.join(m.out_dir, "cycles.csv")
    eval_path = os.path.join(m.out_dir, "eval.csv")
    _refuse_overwrite([cycles_path, eval_path], args.force)

    detector = SimDetector(m.sim_params(), list(al_frames) + list(test_frames))
    with _Lock(m.out_dir):
        result = run_cycle(
            al_frames, test_frames, m.cycle_config(), detector, m.eval_config()
        )
        _write_run_outputs(m.out_dir, result)
    print(f"completed {len(result.history)} cycles -> {m.out_dir}")
    return 0


def _write_run_outputs(out_dir, result) -> None:
    eval_rows = []
    with open(os.path.join(out_dir, "cycles.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CYCLES_CSV_HEADER)
        for rec in result.history:
            fraction = rec.labeled_size / result.n_total
            aps = {"Car": None, "Pedestrian": None, "Cyclist": None}
            map_val = float("nan")
            if rec.eval is not None:
                aps.update(rec.eval["ap"])
                map_val = rec.eval["map"]
            w.writerow(
                [
                    rec.cycle_index,
                    f"{fraction:.4f}",
                    *(
                        "" if aps[c] is None else f"{aps[c]:.4f}"
                        for c in ("Car", "Pedestrian", "Cyclist")
                    ),
                    f"{map_val:.4f}",
                    rec.n_inconsistent_selected,
                    rec.n_consistent_fill,
                    rec.class_instance_counts.get("Car", 0),
                    rec.class_instance_counts.get("Pedestrian", 0),
                    rec.class_instance_counts.get("Cyclist", 0),
                ]
            )
            eval_rows.append(
                (
                    rec.cycle_index,
                    fraction,
                    aps["Car"],
                    aps["Pedestrian"],
                    aps["Cyclist"],
                    map_val,
                )
            )
            with open(
                os.path.join(out_dir, f"selected_{rec.cycle_index}.txt"),
                "w",
                newline="\n",
            ) as sf:
                for fid in rec.selected_ids:
                    sf.write(f"{fid}\n")
            if rec.records is not None:
                write_records_csv(
                    rec.records,
                    os.path.join(out_dir, f"inconsistency_{rec.cycle_index}.csv"),
                )
    write_eval_csv(os.path.join(out_dir, "eval.csv"), eval_rows)


def cmd_report(args) -> int:
    baseline = args.baseline or args.run_dirs[0]
    os.makedirs(args.out, exist_ok=True)
    improvements = report.write_report(args.run_dirs, baseline, args.out)
    for name, imp in improvements.items():
        print(f"{name}: improvement vs baseline {imp:+.2f} pp")
    return 0


_COMMANDS = {
    "split": cmd_split,
    "score": cmd_score,
    "run": cmd_run,
    "report": cmd_report,
}

_DATA_ERRORS = (
    ManifestError,
    ReportError,
    kitti.KittiFormatError,
    ScoringError,
    FileNotFoundError,
    FileExistsError,
)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except _DATA_ERRORS as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"internal error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
