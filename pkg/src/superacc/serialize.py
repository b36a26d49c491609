"""CSV and JSON output helpers shared by the experiment commands.

Floats are written with 17 significant digits so that 64-bit values
round-trip exactly through the text format; JSON sidecars are written
with sorted keys so re-runs produce byte-identical files.
"""

from __future__ import annotations

import json
import math


def fmt_float(x: float) -> str:
    """Format a float with 17 significant digits (exact 64-bit round trip)."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def fmt_cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int,)):
        return str(v)
    if isinstance(v, str):
        return v
    return fmt_float(v)


def write_csv(path, header, rows) -> None:
    """Write rows of mixed int/float/str cells with a header line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt_cell(v) for v in row) + "\n")


def read_csv(path):
    """Read a CSV written by write_csv: returns (header, list of string rows)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header, rows


def read_csv_columns(path):
    """Read a numeric CSV into {column name: list of floats}."""
    header, rows = read_csv(path)
    cols = {name: [] for name in header}
    for row in rows:
        for name, cell in zip(header, row):
            cols[name].append(float(cell))
    return cols


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
