"""Degradation reports: in-memory rows, CSV emission/parsing and the
paper-style pretty table (numbers at one decimal, '-' for the baseline)."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, is_dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import DomainError

CSV_COLUMNS = (
    "experiment", "condition", "absolute_metric", "rel_degradation",
    "clean", "noisy", "seed", "config_hash",
)


@dataclass(frozen=True)
class ReportRow:
    experiment: str
    condition: str
    absolute_metric: float
    rel_degradation: float | None  # None marks the baseline row
    clean: float | None
    noisy: float | None
    seed: int
    config_hash: str


@dataclass
class DegradationReport:
    rows: list

    def row(self, condition: str) -> ReportRow:
        for r in self.rows:
            if r.condition == condition:
                return r
        raise KeyError(condition)

    def degradation(self, condition: str) -> float:
        d = self.row(condition).rel_degradation
        if d is None:
            raise DomainError(f"{condition} is a baseline row")
        return d


def relative_degradation(baseline_metric: float, test_metric: float) -> float:
    """100 * (test - baseline) / baseline; negative means improvement."""
    if baseline_metric <= 0:
        raise DomainError("baseline metric must be > 0")
    return 100.0 * (test_metric - baseline_metric) / baseline_metric


def _json_default(obj):
    if is_dataclass(obj):
        return asdict(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"unserializable {type(obj)}")


def config_hash(config) -> str:
    """Short stable hash tying a report to its exact configuration."""
    blob = json.dumps(config, default=_json_default, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _fmt(value, decimals=None):
    if value is None:
        return "-"
    if decimals is None:
        return repr(float(value))
    return f"{value:.{decimals}f}"


def _parse_opt(text):
    return None if text == "-" else float(text)


def emit_report(report: DegradationReport, path) -> str:
    """Write the CSV to ``path`` (full precision, round-trippable) and a
    paper-style table alongside it (``path`` + '.txt'); returns the table."""
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in report.rows:
                writer.writerow([
                    r.experiment, r.condition, _fmt(r.absolute_metric),
                    _fmt(r.rel_degradation), _fmt(r.clean), _fmt(r.noisy),
                    r.seed, r.config_hash,
                ])
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    table = format_table(report)
    path.with_suffix(path.suffix + ".txt").write_text(table)
    return table


def format_table(report: DegradationReport) -> str:
    header = ("condition", "metric %", "rel degradation %", "clean %", "noisy %")
    body = [
        (
            r.condition,
            _fmt(r.absolute_metric, 1),
            _fmt(r.rel_degradation, 1),
            _fmt(r.clean, 1),
            _fmt(r.noisy, 1),
        )
        for r in report.rows
    ]
    widths = [max(len(h), *(len(row[i]) for row in body)) if body else len(h)
              for i, h in enumerate(header)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(header)),
        "  ".join("-" * w for w in widths),
    ]
    for row in body:
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)))
    return "\n".join(lines) + "\n"


def parse_report(path) -> DegradationReport:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise DomainError(f"{path} is not a degradation report CSV")
        for rec in reader:
            rows.append(ReportRow(
                experiment=rec["experiment"],
                condition=rec["condition"],
                absolute_metric=float(rec["absolute_metric"]),
                rel_degradation=_parse_opt(rec["rel_degradation"]),
                clean=_parse_opt(rec["clean"]),
                noisy=_parse_opt(rec["noisy"]),
                seed=int(rec["seed"]),
                config_hash=rec["config_hash"],
            ))
    return DegradationReport(rows=rows)
