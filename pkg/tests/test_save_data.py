import json
import math

import pandas as pd
import pytest

from fedcache.errors import ReportError
from fedcache.save_data import emit_report, load_report, write_frame
from fedcache.sweep_logic import REPORT_COLUMNS, sort_table


@pytest.fixture
def report_table() -> pd.DataFrame:
    return pd.DataFrame(
        [
            ["LRU", 0.1, 4, 0, 10, 11520, 3, 3456, 0.8125, 0.2],
            ["FIFO", 0.3, 3, 1, 10, 9216, 5, 2592, 0.7333333333333333, 1 / 3],
            ["NONE", 0.1, 4, 0, 10, 14400, 0, 0, 0.8, math.nan],
            ["FIFO", 0.1, 8, 0, 10, 12096, 1, 6912, 0.81, 0.16],
        ],
        columns=REPORT_COLUMNS,
    )


def test_empty_table_gives_header_only_csv(tmp_path):
    path = emit_report(pd.DataFrame(columns=REPORT_COLUMNS), "csv", tmp_path / "empty.csv")
    assert path.read_text() == ",".join(REPORT_COLUMNS) + "\n"


def test_csv_rows_are_sorted(report_table, tmp_path):
    path = emit_report(report_table, "csv", tmp_path / "report.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS)
    assert [line.split(",")[0] for line in lines[1:]] == ["FIFO", "FIFO", "LRU", "NONE"]
    assert lines[1].split(",")[1:3] == ["0.1", "8"]


def test_json_round_trip_reproduces_the_table(report_table, tmp_path):
    path = emit_report(report_table, "json", tmp_path / "report.json")
    records = json.loads(path.read_text())
    assert isinstance(records, list) and len(records) == 4
    assert records[3]["reduction_vs_baseline"] is None
    pd.testing.assert_frame_equal(load_report(path), sort_table(report_table))


def test_csv_round_trip(report_table, tmp_path):
    path = emit_report(report_table, "csv", tmp_path / "report.csv")
    pd.testing.assert_frame_equal(load_report(path), sort_table(report_table))


def test_excel_report_keeps_columns(report_table, tmp_path):
    path = emit_report(report_table, "excel", tmp_path / "report.xlsx")
    assert list(load_report(path).columns) == REPORT_COLUMNS
    assert len(load_report(path)) == 4


def test_write_failure_names_the_path(report_table, tmp_path):
    blocker = tmp_path / "not_a_dir"
    blocker.write_text("x")
    with pytest.raises(ReportError) as error:
        write_frame(report_table, blocker / "report.csv", "csv")
    assert "not_a_dir" in str(error.value)


def test_unknown_format_and_missing_columns(report_table, tmp_path):
    with pytest.raises(ValueError):
        write_frame(report_table, tmp_path / "report.txt", "yaml")
    path = write_frame(report_table.drop(columns="seed"), tmp_path / "partial.csv", "csv")
    with pytest.raises(ValueError):
        load_report(path)
    with pytest.raises(FileNotFoundError):
        load_report(tmp_path / "absent.csv")
