"""Rendering of privacy reports into text, CSV, and JSON artifacts.

The text table mirrors the benchmark layout: a "Baseline F1" header, one row
per release stage (Rewritten, Basic 2x, Advanced 2x), and per (mechanism,
epsilon) column group the static F1, adaptive F1 as mean +/- std, and CS.
F1 renders as a percentage with two decimals and epsilon as a rounded
integer; both are display conventions only, the JSON and CSV carry full
precision.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Sequence

from .evaluation import STAGE_ORDER, PrivacyReport

STAGE_LABELS = {"rewritten": "Rewritten", "basic2x": "Basic 2x", "advanced2x": "Advanced 2x"}


def _group_key(report: PrivacyReport) -> tuple[str, float]:
    return (report.mechanism, report.epsilon)


def _grouped(reports: Sequence[PrivacyReport]):
    groups: dict[tuple[str, float], dict[str, PrivacyReport]] = {}
    for rep in reports:
        groups.setdefault(_group_key(rep), {})[rep.stage] = rep
    return dict(sorted(groups.items()))


def _fmt_f1(value: float) -> str:
    return f"{100.0 * value:.2f}"


def _fmt_cs(value: float | None) -> str:
    return "-" if value is None else f"{value:.2f}"


def render_report_text(reports: Sequence[PrivacyReport]) -> str:
    """Benchmark-shaped plain-text table over any number of mechanism variants."""
    if not reports:
        return "(no privacy reports)\n"
    groups = _grouped(reports)
    baselines = sorted({_fmt_f1(r.baseline_f1) for r in reports})
    floors = sorted({_fmt_f1(r.majority_floor_f1) for r in reports})
    averaging = sorted({r.averaging for r in reports})
    lines = [
        f"Baseline F1: {' / '.join(baselines)}",
        f"Majority floor F1: {' / '.join(floors)}  (averaging: {', '.join(averaging)})",
        "",
    ]
    headers = ["Stage"]
    sub = [""]
    for (mechanism, epsilon) in groups:
        headers.append(f"{mechanism} eps={round(epsilon)}")
        sub.append("F1 (stat.) / F1 (adapt.) / CS")
    rows = []
    for stage in STAGE_ORDER:
        if not any(stage in g for g in groups.values()):
            continue
        row = [STAGE_LABELS[stage]]
        for group in groups.values():
            rep = group.get(stage)
            if rep is None:
                row.append("-")
            else:
                row.append(
                    f"{_fmt_f1(rep.static_f1)} / "
                    f"{_fmt_f1(rep.adaptive_f1_mean)} +/- {_fmt_f1(rep.adaptive_f1_std)} / "
                    f"{_fmt_cs(rep.cs)}"
                )
        rows.append(row)
    widths = [
        max(len(headers[i]), len(sub[i]), *(len(r[i]) for r in rows)) for i in range(len(headers))
    ]

    def fmt_row(cells):
        return " | ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()

    lines.append(fmt_row(headers))
    lines.append(fmt_row(sub))
    lines.append("-+-".join("-" * w for w in widths))
    lines.extend(fmt_row(r) for r in rows)
    return "\n".join(lines) + "\n"


CSV_COLUMNS = [
    "stage",
    "mechanism",
    "epsilon",
    "baseline_f1",
    "static_f1",
    "adaptive_f1_mean",
    "adaptive_f1_std",
    "cs",
    "majority_floor_f1",
    "runs",
    "averaging",
]


def render_report_csv(reports: Sequence[PrivacyReport]) -> str:
    """Full-precision flat CSV, one row per (mechanism, epsilon, stage)."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for (_, group) in _grouped(reports).items():
        for stage in STAGE_ORDER:
            rep = group.get(stage)
            if rep is None:
                continue
            row = rep.to_json_dict()
            row["cs"] = "" if rep.cs is None else repr(rep.cs)
            writer.writerow({k: row[k] for k in CSV_COLUMNS})
    return buf.getvalue()


def reports_to_json(reports: Sequence[PrivacyReport]) -> str:
    ordered = []
    for (_, group) in _grouped(reports).items():
        for stage in STAGE_ORDER:
            if stage in group:
                ordered.append(group[stage].to_json_dict())
    return json.dumps(ordered, indent=2, ensure_ascii=False) + "\n"


def save_reports(reports: Sequence[PrivacyReport], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(reports_to_json(reports), encoding="utf-8")
    return path


def load_reports(path) -> list[PrivacyReport]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return [PrivacyReport(**obj) for obj in raw]
