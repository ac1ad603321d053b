"""Run records: JSON with 17-significant-digit floats, golden comparison, CSV tables."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

SCHEMA_VERSION = 1


def _format_float(x):
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    text = format(x, ".17g")
    # keep a float marker so the value reads back as float, not int
    if all(c not in text for c in ".eE"):
        text += ".0"
    return text


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return _format_float(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "item"):  # numpy scalars
        return _encode(obj.item(), indent, level)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent=2):
    """JSON text with every float written to 17 significant digits."""
    return _encode(obj, indent, 0) + "\n"


def write_record(record, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(record))


def read_record(path):
    record = json.loads(Path(path).read_text())
    if not isinstance(record, dict) or "schema_version" not in record:
        raise ValueError(f"{path} is not a qetlab run record")
    return record


def scalar_payload(record):
    """Serialised record minus run metadata (wall time); stable across reruns."""
    return dumps({k: v for k, v in record.items() if k != "meta"})


def compare_golden(record, golden_dir):
    """Compare record scalars to ``reference.json`` under ``tolerances.json``.

    Returns a list of ``(field, got, expected, tolerance)`` mismatches.
    """
    golden_dir = Path(golden_dir)
    golden = json.loads((golden_dir / "reference.json").read_text())
    tol_path = golden_dir / "tolerances.json"
    tolerances = json.loads(tol_path.read_text()) if tol_path.exists() else {}
    default = tolerances.get("default_abs", 1e-9)
    per_field = tolerances.get("fields", {})
    mismatches = []
    scalars = record.get("scalars", {})
    for key, expected in golden["scalars"].items():
        tol = per_field.get(key, default)
        got = scalars.get(key)
        if got is None or not abs(got - expected) <= tol:
            mismatches.append((key, got, expected, tol))
    return mismatches


def csv_text(rows, columns):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return _format_float(value)
    return str(value)
