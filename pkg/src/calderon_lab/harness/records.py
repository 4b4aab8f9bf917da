"""CSV tables with fixed schemas and ``%.17g`` numbers."""

from __future__ import annotations

import csv
import math
from pathlib import Path

__all__ = ["SCHEMAS", "SchemaError", "write_csv", "read_csv", "format_cell", "schema_of"]

SCHEMAS = {
    "value": ("h", "q0", "c0", "rho"),
    "normal": ("h", "q1", "c0", "c1", "sigma"),
    "calibrate": ("h", "c0", "c1"),
    "besov-rate": ("point_index", "slope"),
    "trace-check": ("lambda", "max_ratio"),
    "hardy-check": ("function_index", "ratio"),
    "summary": ("mode", "point", "estimate", "truth", "rel_error"),
    "verify": ("criterion", "passed", "measured", "threshold", "detail"),
}


class SchemaError(ValueError):
    """CSV header does not match any known schema (or the expected one)."""


def format_cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            raise ValueError("NaN is not allowed in result tables")
        return "%.17g" % v
    return str(v)


def write_csv(path, schema: str, rows) -> Path:
    """Write ``rows`` (sequences matching the schema columns) with a header line."""
    cols = SCHEMAS[schema]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            row = list(row)
            if len(row) != len(cols):
                raise ValueError(f"{schema} rows need {len(cols)} cells, got {len(row)}")
            w.writerow([format_cell(v) for v in row])
    return path


def schema_of(header) -> str:
    for name, cols in SCHEMAS.items():
        if tuple(header) == cols:
            return name
    known = "; ".join(f"{k}: {','.join(v)}" for k, v in SCHEMAS.items())
    raise SchemaError(f"unknown CSV header {','.join(header)!r}; expected one of {known}")


def read_csv(path) -> tuple[str, list[dict]]:
    """Return ``(schema name, rows as dicts of strings)``."""
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path} is empty")
    schema = schema_of(rows[0])
    return schema, [dict(zip(rows[0], r)) for r in rows[1:]]
