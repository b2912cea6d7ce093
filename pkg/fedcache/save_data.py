from __future__ import annotations

import json
import logging
import math
from pathlib import Path

import pandas as pd

from fedcache.errors import ReportError
from fedcache.sweep_logic import REPORT_COLUMNS, sort_table

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("csv", "json", "excel")
EXTENSIONS = {"csv": ".csv", "json": ".json", "excel": ".xlsx"}


def _json_records(table: pd.DataFrame) -> list[dict]:
    records = []
    for record in table.to_dict(orient="records"):
        clean = {}
        for key, value in record.items():
            if hasattr(value, "item"):
                value = value.item()
            if isinstance(value, float) and math.isnan(value):
                value = None
            clean[key] = value
        records.append(clean)
    return records


def write_frame(table: pd.DataFrame, path: str | Path, save_format: str = "csv") -> Path:
    """
    Write a DataFrame as csv, json (array of flat objects) or excel.

    Parent folders are created. I/O failures surface as ReportError with the path and cause.
    """
    if save_format not in REPORT_FORMATS:
        raise ValueError(f"Unknown report format '{save_format}'. Expected one of: {list(REPORT_FORMATS)}")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if save_format == "csv":
            table.to_csv(path, index=False, lineterminator="\n")
        elif save_format == "json":
            with path.open("w", encoding="utf-8") as file:
                json.dump(_json_records(table), file, indent=2)
                file.write("\n")
        else:
            table.to_excel(path, index=False, engine="openpyxl")
    except OSError as e:
        raise ReportError(path, e) from e
    logger.info(f"Saved {len(table)} rows to {path}")
    return path


def emit_report(table: pd.DataFrame, save_format: str, path: str | Path) -> Path:
    """
    Write a sweep report with the fixed report columns.

    The header is always written, even for an empty table, and rows are sorted by
    (policy, τ, C, seed).

    Args:
        table (pd.DataFrame): Sweep rows; extra columns are dropped and missing ones left empty.
        save_format (str): One of "csv", "json" or "excel".
        path (str | Path): Destination file. Parent folders are created.

    Raises:
        ReportError: If the file cannot be written.
    """
    # Fixed column order, then the canonical row order
    report = sort_table(table.reindex(columns=REPORT_COLUMNS))

    # Write in the requested format
    return write_frame(report, path, save_format)


def load_report(path: str | Path) -> pd.DataFrame:
    """Read a report written by emit_report back into a table; the format follows the extension."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"The report '{path}' does not exist.")
    suffix = path.suffix.lower()
    if suffix == ".json":
        with path.open("r", encoding="utf-8") as file:
            records = json.load(file)
        table = pd.DataFrame(records, columns=REPORT_COLUMNS)
        table["reduction_vs_baseline"] = table["reduction_vs_baseline"].astype(float)
    elif suffix in (".xlsx", ".xls"):
        table = pd.read_excel(path, engine="openpyxl")
    else:
        table = pd.read_csv(path, float_precision="round_trip")
    missing = [col for col in REPORT_COLUMNS if col not in table.columns]
    if missing:
        raise ValueError(f"Report '{path}' lacks columns: {missing}")
    return table[REPORT_COLUMNS]
