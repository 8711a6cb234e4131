"""Serialisation of experiment reports: CSV tables, JSON and an SVG bar chart.

Everything written here is a pure function of the report, except
``run_manifest.json`` which also carries timestamps and wall-clock timings.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any
from xml.sax.saxutils import escape

import numpy as np

from .aggregation import FedTruthResult
from .config import config_from_dict, config_to_dict
from .contribution import METRIC_FIELDS, ClientScores, ContributionReport
from .orchestrator import ExperimentReport, RoundRecord

__all__ = [
    "SCHEMA_VERSION",
    "CSV_HEADER",
    "report_to_dict",
    "report_from_dict",
    "emit_csv",
    "emit_json",
    "load_json",
    "emit_svg_chart",
    "emit_manifest",
    "format_number",
]

SCHEMA_VERSION = 1
CSV_HEADER = ("round", "client_id") + METRIC_FIELDS
# (label, averaged metric, colour) in bar order within a client group
CHART_BARS = (
    ("FRECA Net", "net", "#1f77b4"),
    ("FRECA AW", "aw", "#ff7f0e"),
    ("SV (min-max)", "sv_minmax", "#2ca02c"),
    ("LOO (min-max)", "loo_minmax", "#d62728"),
)


def format_number(x: float | None) -> str:
    """Positional decimal with 12 significant digits; empty for missing values."""
    if x is None:
        return ""
    x = float(x)
    if x == 0.0:
        x = 0.0  # drop the sign of -0.0
    return np.format_float_positional(x, precision=12, unique=False, fractional=False, trim="-")


def _fedtruth_to_dict(ft: FedTruthResult | None):
    if ft is None:
        return None
    return {
        "truth": [float(v) for v in ft.truth],
        "weights": list(ft.weights),
        "performances": list(ft.performances),
        "distances": list(ft.distances),
        "iterations": ft.iterations,
        "objective_trace": list(ft.objective_trace),
        "converged": ft.converged,
    }


def _fedtruth_from_dict(d) -> FedTruthResult | None:
    if d is None:
        return None
    return FedTruthResult(
        truth=np.asarray(d["truth"], dtype=np.float64),
        weights=list(d["weights"]),
        performances=list(d["performances"]),
        iterations=d["iterations"],
        objective_trace=list(d["objective_trace"]),
        distances=list(d["distances"]),
        converged=d["converged"],
    )


def _round_to_dict(r: RoundRecord) -> dict[str, Any]:
    return {
        "round": r.round,
        "selected": list(r.selected),
        "update_norms": {str(k): v for k, v in sorted(r.update_norms.items())},
        "fedtruth": _fedtruth_to_dict(r.fedtruth),
        "contribution": {str(k): s.as_dict() for k, s in sorted(r.contribution.per_client.items())},
        "global_model_hash": r.global_model_hash,
        "utility_evaluations": dict(sorted(r.utility_evaluations.items())),
    }


def _round_from_dict(d: dict[str, Any]) -> RoundRecord:
    return RoundRecord(
        round=d["round"],
        selected=list(d["selected"]),
        update_norms={int(k): v for k, v in d["update_norms"].items()},
        fedtruth=_fedtruth_from_dict(d["fedtruth"]),
        contribution=ContributionReport(
            round=d["round"],
            per_client={int(k): ClientScores(**v) for k, v in d["contribution"].items()},
        ),
        global_model_hash=d["global_model_hash"],
        utility_evaluations=dict(d["utility_evaluations"]),
    )


def report_to_dict(report: ExperimentReport) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": report.tool_version,
        "config": config_to_dict(report.config),
        "rounds": [_round_to_dict(r) for r in report.rounds],
        "averages": {str(k): v for k, v in sorted(report.averages.items())},
    }


def report_from_dict(d: dict[str, Any]) -> ExperimentReport:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema version {d.get('schema_version')!r}")
    return ExperimentReport(
        config=config_from_dict(d["config"]),
        rounds=[_round_from_dict(r) for r in d["rounds"]],
        averages={int(k): v for k, v in d["averages"].items()},
        tool_version=d["tool_version"],
    )


def _csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def emit_csv(report: ExperimentReport, out_dir) -> tuple[Path, Path]:
    """Write ``per_round.csv`` and ``summary.csv``; rows sorted by (round, client_id)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [CSV_HEADER]
    for r in sorted(report.rounds, key=lambda r: r.round):
        for cid, scores in sorted(r.contribution.per_client.items()):
            vals = scores.as_dict()
            rows.append((str(r.round), str(cid)) + tuple(format_number(vals[k]) for k in METRIC_FIELDS))
    per_round = out_dir / "per_round.csv"
    per_round.write_text(_csv_text(rows))

    summary_rows = [("client_id",) + METRIC_FIELDS]
    for cid, vals in sorted(report.averages.items()):
        summary_rows.append((str(cid),) + tuple(format_number(vals.get(k)) for k in METRIC_FIELDS))
    summary = out_dir / "summary.csv"
    summary.write_text(_csv_text(summary_rows))
    return per_round, summary


def emit_json(report: ExperimentReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report_to_dict(report), indent=1, allow_nan=False) + "\n")
    return path


def load_json(path) -> ExperimentReport:
    return report_from_dict(json.loads(Path(path).read_text()))


def emit_svg_chart(report: ExperimentReport, path) -> Path:
    """Grouped bar chart of averaged Net / AW / SV / LOO per client.

    Metrics not computed in the run are drawn as zero-height bars so every
    client group keeps four bars.
    """
    if not report.config.metrics:
        raise ValueError("refusing to chart a report with an empty metrics set")
    clients = sorted(report.averages)
    group_w, bar_w, left, top, plot_h = 64.0, 12.0, 56.0, 40.0, 240.0
    width = left + group_w * len(clients) + 20.0
    height = top + plot_h + 80.0
    base = top + plot_h
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}" font-family="sans-serif" font-size="11">',
        f'<title>{escape(f"Client contributions ({report.config.case})")}</title>',
        f'<text x="{left:.1f}" y="20">{escape(f"Client contributions, {report.config.case}")}</text>',
        f'<line x1="{left:.1f}" y1="{top:.1f}" x2="{left:.1f}" y2="{base:.1f}" stroke="black"/>',
        f'<line x1="{left:.1f}" y1="{base:.1f}" x2="{width - 10:.1f}" y2="{base:.1f}" stroke="black"/>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = base - tick * plot_h
        parts.append(f'<text x="{left - 6:.1f}" y="{y + 4:.1f}" text-anchor="end">{tick:g}</text>')
    for gi, cid in enumerate(clients):
        x0 = left + gi * group_w + (group_w - bar_w * len(CHART_BARS)) / 2
        for bi, (label, key, colour) in enumerate(CHART_BARS):
            v = report.averages[cid].get(key)
            cls = "bar" if v is not None else "bar missing"
            v = 0.0 if v is None or not math.isfinite(v) else min(max(v, 0.0), 1.0)
            h = v * plot_h
            parts.append(
                f'<rect class="{cls}" data-client="{cid}" data-metric="{key}" x="{x0 + bi * bar_w:.2f}" '
                f'y="{base - h:.2f}" width="{bar_w:.2f}" height="{h:.2f}" fill="{colour}"/>'
            )
        parts.append(
            f'<text x="{left + (gi + 0.5) * group_w:.1f}" y="{base + 16:.1f}" text-anchor="middle">Client {cid}</text>'
        )
    lx = left
    for label, _, colour in CHART_BARS:
        parts.append(f'<rect class="legend" x="{lx:.1f}" y="{base + 40:.1f}" width="10" height="10" fill="{colour}"/>')
        parts.append(f'<text x="{lx + 14:.1f}" y="{base + 49:.1f}">{escape(label)}</text>')
        lx += 110.0
    parts.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n")
    return path


def emit_manifest(report: ExperimentReport, path, started_at: str, finished_at: str) -> Path:
    """Run metadata: config echo, timestamps, utility-evaluation counts and timings."""
    families = sorted({k for t in report.timings for k in t})
    manifest = {
        "tool_version": report.tool_version,
        "config_echo": config_to_dict(report.config),
        "started_at": started_at,
        "finished_at": finished_at,
        "utility_evaluations": [dict(sorted(r.utility_evaluations.items())) for r in report.rounds],
        "wall_clock_seconds": {
            "per_round": report.timings,
            "mean": {f: math.fsum(t.get(f, 0.0) for t in report.timings) / max(len(report.timings), 1) for f in families},
        },
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=1) + "\n")
    return path
