"""Machine-readable table emission: CSV with ``# key: value`` metadata, or one JSON object."""

from __future__ import annotations

import csv
import io
import json
import math


def format_value(value) -> str:
    if hasattr(value, "item") and not hasattr(value, "value"):  # numpy scalars
        value = value.item()
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    if value is None:
        return ""
    if hasattr(value, "value"):  # enums
        return str(value.value)
    return str(value)


def parse_value(text: str):
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def to_csv(columns, rows, meta=None) -> str:
    out = io.StringIO()
    for key, value in (meta or {}).items():
        out.write(f"# {key}: {format_value(value)}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row.get(c)) for c in columns])
    return out.getvalue()


def read_csv(text: str):
    """Parse :func:`to_csv` output into ``(columns, rows, meta)`` with typed values."""
    meta, body = {}, []
    for line in text.splitlines(keepends=True):
        if line.startswith("# ") and not body:
            key, _, value = line[2:].rstrip("\n").partition(": ")
            meta[key] = value
        else:
            body.append(line)
    reader = csv.reader(io.StringIO("".join(body)))
    columns = next(reader)
    rows = [dict(zip(columns, (parse_value(v) for v in values))) for values in reader]
    return columns, rows, meta


def _jsonable(value):
    if hasattr(value, "item") and not hasattr(value, "value"):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if hasattr(value, "value") and not isinstance(value, (int, float, str, bool)):
        return value.value
    return value


def to_object(columns, rows, meta=None) -> str:
    doc = {
        "meta": {k: _jsonable(v) for k, v in (meta or {}).items()},
        "columns": list(columns),
        "rows": [{c: _jsonable(row.get(c)) for c in columns} for row in rows],
    }
    return json.dumps(doc, indent=2) + "\n"


def render(columns, rows, meta=None, fmt: str = "csv") -> str:
    if fmt == "csv":
        return to_csv(columns, rows, meta)
    if fmt == "object":
        return to_object(columns, rows, meta)
    raise ValueError(f"unknown format {fmt!r}")
