"""Static SVG plots and baseline-comparison summary over finished runs.

Charts are written as plain SVG (polylines/rects, no plotting library) so
report output is byte-deterministic. The improvement number is the mean
over cycles of (strategy mAP - baseline mAP), in percentage points.
"""
from __future__ import annotations

import csv
import os

_WIDTH, _HEIGHT = 640, 440
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 60, 20, 40, 50

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]

CLASS_COLUMNS = {"Car": "count_car", "Pedestrian": "count_pedestrian", "Cyclist": "count_cyclist"}


class ReportError(ValueError):
    """Missing or malformed run artifacts."""


def read_csv_rows(path) -> list[dict]:
    if not os.path.exists(path):
        raise ReportError(f"missing file {path}")
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def require_columns(rows, path, columns) -> None:
    if not rows:
        raise ReportError(f"{path}: no data rows")
    for col in columns:
        if col not in rows[0]:
            raise ReportError(f"{path}: missing column {col!r}")


def _scale(v, lo, hi, out_lo, out_hi):
    if hi == lo:
        return (out_lo + out_hi) / 2.0
    return out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)


def _chart_frame(title: str, x_label: str, y_label: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2:.0f}" y="24" text-anchor="middle" font-size="16">{title}</text>',
        f'<text x="{_WIDTH / 2:.0f}" y="{_HEIGHT - 12}" text-anchor="middle" font-size="12">{x_label}</text>',
        f'<text x="16" y="{_HEIGHT / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {_HEIGHT / 2:.0f})">{y_label}</text>',
    ]


def _axes(x_lo, x_hi, y_lo, y_hi) -> list[str]:
    left, right = _MARGIN_L, _WIDTH - _MARGIN_R
    top, bottom = _MARGIN_T, _HEIGHT - _MARGIN_B
    parts = [
        f'<polyline points="{left},{top} {left},{bottom} {right},{bottom}" '
        'fill="none" stroke="black" stroke-width="1"/>'
    ]
    for frac in (0.0, 0.5, 1.0):
        xv = x_lo + frac * (x_hi - x_lo)
        yv = y_lo + frac * (y_hi - y_lo)
        px = _scale(xv, x_lo, x_hi, left, right)
        py = _scale(yv, y_lo, y_hi, bottom, top)
        parts.append(
            f'<text x="{px:.1f}" y="{bottom + 16}" text-anchor="middle" font-size="10">{xv:.2f}</text>'
        )
        parts.append(
            f'<text x="{left - 6}" y="{py + 4:.1f}" text-anchor="end" font-size="10">{yv:.2f}</text>'
        )
    return parts


def line_chart(series, title, x_label, y_label, path, y_range=None) -> None:
    """series: list of (label, xs, ys); one polyline per entry."""
    all_x = [x for _, xs, _ in series for x in xs]
    all_y = [y for _, _, ys in series for y in ys]
    if not all_x:
        raise ReportError(f"no data for chart {title!r}")
    x_lo, x_hi = min(all_x), max(all_x)
    if y_range is not None:
        y_lo, y_hi = y_range
    else:
        y_lo, y_hi = min(all_y), max(all_y)
        if y_lo == y_hi:
            y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    left, right = _MARGIN_L, _WIDTH - _MARGIN_R
    top, bottom = _MARGIN_T, _HEIGHT - _MARGIN_B
    parts = _chart_frame(title, x_label, y_label)
    parts.extend(_axes(x_lo, x_hi, y_lo, y_hi))
    for k, (label, xs, ys) in enumerate(series):
        color = _PALETTE[k % len(_PALETTE)]
        pts = " ".join(
            f"{_scale(x, x_lo, x_hi, left, right):.1f},{_scale(y, y_lo, y_hi, bottom, top):.1f}"
            for x, y in zip(xs, ys)
        )
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{right - 4}" y="{top + 14 + 14 * k}" text-anchor="end" '
            f'font-size="11" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(parts) + "\n")


def stacked_bar_chart(categories, xs, fractions, title, x_label, path) -> None:
    """fractions: {category: list of per-x fractions}, stacked to 1.0.

    Draws rects per bar segment plus a polyline along each category's
    cumulative boundary.
    """
    if not xs:
        raise ReportError(f"no data for chart {title!r}")
    left, right = _MARGIN_L, _WIDTH - _MARGIN_R
    top, bottom = _MARGIN_T, _HEIGHT - _MARGIN_B
    parts = _chart_frame(title, x_label, "fraction of instances")
    x_lo, x_hi = min(xs), max(xs)
    parts.extend(_axes(x_lo, x_hi, 0.0, 1.0))
    bar_w = max(4.0, (right - left) / max(len(xs), 1) * 0.6)
    cumulative = [0.0] * len(xs)
    for k, cat in enumerate(categories):
        color = _PALETTE[k % len(_PALETTE)]
        boundary = []
        for i, x in enumerate(xs):
            frac = fractions[cat][i]
            y0 = _scale(cumulative[i], 0.0, 1.0, bottom, top)
            y1 = _scale(cumulative[i] + frac, 0.0, 1.0, bottom, top)
            px = _scale(x, x_lo, x_hi, left, right)
            parts.append(
                f'<rect x="{px - bar_w / 2:.1f}" y="{y1:.1f}" width="{bar_w:.1f}" '
                f'height="{y0 - y1:.1f}" fill="{color}" fill-opacity="0.7"/>'
            )
            cumulative[i] += frac
            boundary.append(f"{px:.1f},{y1:.1f}")
        parts.append(
            f'<polyline points="{" ".join(boundary)}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{right - 4}" y="{top + 14 + 14 * k}" text-anchor="end" '
            f'font-size="11" fill="{color}">{cat}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(parts) + "\n")


def load_run(run_dir) -> dict:
    """Load a run's eval.csv and cycles.csv into plain dict columns."""
    eval_rows = read_csv_rows(os.path.join(run_dir, "eval.csv"))
    require_columns(eval_rows, os.path.join(run_dir, "eval.csv"), ["cycle_index", "labeled_fraction", "map"])
    cyc_rows = read_csv_rows(os.path.join(run_dir, "cycles.csv"))
    require_columns(
        cyc_rows,
        os.path.join(run_dir, "cycles.csv"),
        ["cycle_index", "labeled_fraction", "n_inconsistent_selected", "n_consistent_fill"],
    )
    return {
        "name": os.path.basename(os.path.normpath(run_dir)) or run_dir,
        "eval": eval_rows,
        "cycles": cyc_rows,
    }


def mean_improvement_pp(strategy_rows, baseline_rows) -> float:
    """Mean (strategy mAP - baseline mAP) over common cycles, in points."""
    base = {r["cycle_index"]: float(r["map"]) for r in baseline_rows}
    diffs = [
        float(r["map"]) - base[r["cycle_index"]]
        for r in strategy_rows
        if r["cycle_index"] in base
    ]
    if not diffs:
        raise ReportError("runs share no cycle indices")
    return 100.0 * sum(diffs) / len(diffs)


def write_report(run_dirs, baseline_dir, out_dir) -> dict:
    """Emit the four charts plus summary.csv; returns per-run improvements."""
    runs = [load_run(d) for d in run_dirs]
    baseline = load_run(baseline_dir)
    os.makedirs(out_dir, exist_ok=True)

    ap_series = []
    for run in runs:
        xs = [float(r["labeled_fraction"]) for r in run["eval"]]
        for cls in ("car", "pedestrian", "cyclist"):
            ys = [float(r[f"ap_{cls}"]) for r in run["eval"] if r.get(f"ap_{cls}", "") != ""]
            xs_cls = [float(r["labeled_fraction"]) for r in run["eval"] if r.get(f"ap_{cls}", "") != ""]
            if ys:
                ap_series.append((f'{run["name"]}:{cls}', xs_cls, ys))
        del xs
    line_chart(
        ap_series,
        "Per-class AP vs labeled fraction",
        "labeled fraction",
        "AP",
        os.path.join(out_dir, "ap_classes.svg"),
        y_range=(0.0, 1.0),
    )

    map_series = []
    for run in runs + ([baseline] if baseline_dir not in run_dirs else []):
        xs = [float(r["labeled_fraction"]) for r in run["eval"]]
        ys = [float(r["map"]) for r in run["eval"]]
        map_series.append((run["name"], xs, ys))
    line_chart(
        map_series,
        "mAP vs labeled fraction",
        "labeled fraction",
        "mAP",
        os.path.join(out_dir, "map.svg"),
        y_range=(0.0, 1.0),
    )

    first = runs[0]
    has_counts = all(col in first["cycles"][0] for col in CLASS_COLUMNS.values())
    if has_counts:
        xs = [float(r["labeled_fraction"]) for r in first["cycles"]]
        fractions = {}
        totals = [
            sum(int(r[col]) for col in CLASS_COLUMNS.values()) for r in first["cycles"]
        ]
        for cls, col in CLASS_COLUMNS.items():
            fractions[cls] = [
                (int(r[col]) / t if t else 0.0)
                for r, t in zip(first["cycles"], totals)
            ]
        stacked_bar_chart(
            list(CLASS_COLUMNS),
            xs,
            fractions,
            f'Class distribution across cycles ({first["name"]})',
            "labeled fraction",
            os.path.join(out_dir, "class_distribution.svg"),
        )

    incon_series = []
    for run in runs:
        xs = [float(r["labeled_fraction"]) for r in run["cycles"]]
        ys = []
        for r in run["cycles"]:
            n_inc = int(r["n_inconsistent_selected"])
            n_fill = int(r["n_consistent_fill"])
            total = n_inc + n_fill
            ys.append(n_inc / total if total else 0.0)
        incon_series.append((run["name"], xs, ys))
    line_chart(
        incon_series,
        "Inconsistency proportion across cycles",
        "labeled fraction",
        "inconsistent fraction of chunk",
        os.path.join(out_dir, "inconsistency_proportion.svg"),
        y_range=(0.0, 1.0),
    )

    improvements = {}
    summary_path = os.path.join(out_dir, "summary.csv")
    with open(summary_path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        # improvement = mean over cycles of (run mAP - baseline mAP), in
        # percentage points
        w.writerow(["run", "mean_map", "improvement_pp_vs_baseline"])
        for run in runs:
            maps = [float(r["map"]) for r in run["eval"]]
            imp = mean_improvement_pp(run["eval"], baseline["eval"])
            improvements[run["name"]] = imp
            w.writerow([run["name"], f"{sum(maps) / len(maps):.4f}", f"{imp:.2f}"])
    return improvements
