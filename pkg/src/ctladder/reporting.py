"""Plot-ready CSV and JSON run reports.

CSV files are deterministic: fixed column order, ``repr`` formatting of
floats, ``\\n`` line endings and no timestamps.  Wall-clock figures only go
into the JSON report.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, is_dataclass
from pathlib import Path

from ctladder.ct_experiments import ModulusCurve, PuncturedRunRecord

CURVE_COLUMNS = ModulusCurve.COLUMNS


def _cell(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(float(x))
    if hasattr(x, "item"):
        return _cell(x.item())
    return str(x)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r[c] if isinstance(r, dict) else r[i]) for i, c in enumerate(columns)])
    return buf.getvalue()


def emit_plotdata(data, path) -> Path:
    """Write a ModulusCurve, a list of PuncturedRunRecords or a list of dict rows as CSV.

    A curve gives the four columns N, f, M_observed, M_bound; an empty curve
    gives a header-only file.
    """
    if isinstance(data, ModulusCurve):
        columns, rows = CURVE_COLUMNS, data.table()
    else:
        rows = [r.as_row() if isinstance(r, PuncturedRunRecord) else dict(r) for r in data]
        columns = tuple(rows[0]) if rows else ()
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(csv_text(columns, rows))
    except OSError as exc:
        raise OSError(f"cannot write plot data to {path}: {exc}") from exc
    return path


def _parse(x: str):
    for conv in (int, float):
        try:
            return conv(x)
        except ValueError:
            pass
    return x


def read_plotdata(path) -> tuple[tuple, list]:
    """Columns and typed rows of a CSV written by :func:`emit_plotdata`."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            columns = tuple(next(reader))
        except StopIteration:
            return (), []
        return columns, [tuple(_parse(x) for x in row) for row in reader]


def _jsonable(x):
    if is_dataclass(x) and not isinstance(x, type):
        return _jsonable(asdict(x))
    if isinstance(x, float):
        return x if math.isfinite(x) else str(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, set, frozenset)):
        items = sorted(x) if isinstance(x, (set, frozenset)) else x
        return [_jsonable(v) for v in items]
    if hasattr(x, "tolist"):
        return _jsonable(x.tolist())
    if hasattr(x, "item"):
        return _jsonable(x.item())
    return x


def write_report(report: dict, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(report), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path
