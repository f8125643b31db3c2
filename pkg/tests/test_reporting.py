"""Report rows, degradation math, CSV round trips and table formatting."""

import numpy as np
import pytest

from mcfront.errors import DomainError
from mcfront.reporting import (
    CSV_COLUMNS,
    DegradationReport,
    ReportRow,
    config_hash,
    emit_report,
    format_table,
    parse_report,
    relative_degradation,
)


def _row(condition, metric, deg, clean=None, noisy=None):
    return ReportRow(
        experiment="sweep", condition=condition, absolute_metric=metric,
        rel_degradation=deg, clean=clean, noisy=noisy, seed=0,
        config_hash="abc123def456",
    )


@pytest.fixture
def report():
    return DegradationReport(rows=[
        _row("uncompressed", 10.0, None),
        _row("16", 11.26, relative_degradation(10.0, 11.26)),
        _row("8", 30.21, relative_degradation(10.0, 30.21), clean=12.5, noisy=55.5),
    ])


def test_relative_degradation_oracle():
    assert relative_degradation(10.0, 12.6) == pytest.approx(26.0)
    assert relative_degradation(8.0, 8.0) == 0.0
    assert relative_degradation(10.0, 9.0) == pytest.approx(-10.0)
    with pytest.raises(DomainError):
        relative_degradation(0.0, 5.0)


def test_report_row_lookup_and_baseline(report):
    assert report.row("16").absolute_metric == 11.26
    assert report.degradation("16") == pytest.approx(12.6)
    with pytest.raises(KeyError):
        report.row("nope")
    with pytest.raises(DomainError):
        report.degradation("uncompressed")


def test_emit_parse_roundtrip_full_precision(report, tmp_path):
    path = tmp_path / "report.csv"
    emit_report(report, path)
    back = parse_report(path)
    for a, b in zip(report.rows, back.rows):
        assert a == b  # repr() floats survive the round trip exactly
    assert (tmp_path / "report.csv.txt").exists()


def test_emit_is_byte_deterministic(report, tmp_path):
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_report(report, p1)
    emit_report(report, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_csv_header_checked(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("foo,bar\n1,2\n")
    with pytest.raises(DomainError):
        parse_report(bad)
    assert CSV_COLUMNS[0] == "experiment"


def test_table_formats_one_decimal_and_baseline_dash(report):
    table = format_table(report)
    lines = table.strip().splitlines()
    assert "condition" in lines[0]
    base = next(l for l in lines if l.startswith("uncompressed"))
    assert " - " in base  # baseline degradation shown as '-'
    coded = next(l for l in lines if l.startswith("8"))
    assert "202.1" in coded  # 100*(30.21-10)/10 at one decimal
    assert "55.5" in coded


def test_config_hash_stability():
    cfg = {"a": 1, "b": [1, 2, 3], "c": {"d": np.float64(2.5)}}
    h1 = config_hash(cfg)
    h2 = config_hash({"c": {"d": 2.5}, "b": [1, 2, 3], "a": 1})  # key order free
    assert h1 == h2
    assert len(h1) == 12
    assert config_hash({"a": 2}) != h1
