"""Typed tabular data aligned to a schema manifest, with CSV serialization.

MISSING is an explicit cell state, never a sentinel number or empty label, so
imputation transforms can detect it unambiguously.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Mapping

from .errors import ValidationError
from .schema import FeatureSpec, SchemaManifest


class _MissingType:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "MISSING"

    def __bool__(self):
        return False


MISSING = _MissingType()

Cell = "int | float | str | bool | _MissingType"

_INT_RE = re.compile(r"[+-]?\d+$")


def is_missing(cell) -> bool:
    return cell is MISSING


def check_cell(cell, spec: FeatureSpec) -> None:
    """Raise unless the cell conforms to the feature's dtype (or is MISSING)."""
    if cell is MISSING:
        return
    if spec.dtype == "boolean":
        if not isinstance(cell, bool):
            raise ValidationError(f"feature {spec.name!r}: expected boolean, got {cell!r}")
    elif spec.dtype == "numeric":
        if isinstance(cell, bool) or not isinstance(cell, (int, float)):
            raise ValidationError(f"feature {spec.name!r}: expected number, got {cell!r}")
        if not math.isfinite(cell):
            raise ValidationError(f"feature {spec.name!r}: non-finite value {cell!r}")
    else:  # categorical / ordinal
        if not isinstance(cell, str):
            raise ValidationError(f"feature {spec.name!r}: expected category label, got {cell!r}")
        if cell not in (spec.categories or ()):
            raise ValidationError(
                f"feature {spec.name!r}: label {cell!r} not in declared categories")


@dataclass(frozen=True)
class DataTable:
    """Immutable rows of typed cells aligned to a schema manifest."""

    schema: SchemaManifest
    rows: tuple[tuple[object, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(tuple(row) for row in self.rows))
        width = len(self.schema.features)
        for r, row in enumerate(self.rows):
            if len(row) != width:
                raise ValidationError(
                    f"row {r}: expected {width} cells, got {len(row)}")
            for cell, spec in zip(row, self.schema.features):
                try:
                    check_cell(cell, spec)
                except ValidationError as exc:
                    raise ValidationError(f"row {r}: {exc}") from None

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> tuple:
        idx = self.schema.index(name)
        return tuple(row[idx] for row in self.rows)


# ---------------------------------------------------------------------------
# CSV format: header row must match the manifest feature names exactly and in
# order; an empty field is MISSING; booleans are rendered TRUE / FALSE.

def parse_cell(text: str, spec: FeatureSpec):
    if text == "":
        return MISSING
    if spec.dtype == "boolean":
        if text == "TRUE":
            return True
        if text == "FALSE":
            return False
        raise ValidationError(
            f"feature {spec.name!r}: boolean cells must be TRUE or FALSE, got {text!r}")
    if spec.dtype == "numeric":
        if _INT_RE.match(text):
            return int(text)
        try:
            value = float(text)
        except ValueError:
            raise ValidationError(
                f"feature {spec.name!r}: cannot parse number from {text!r}") from None
        if not math.isfinite(value):
            raise ValidationError(f"feature {spec.name!r}: non-finite value {text!r}")
        return value
    return text


def render_cell(cell, display_format: str | None = None) -> str:
    if cell is MISSING:
        return ""
    if isinstance(cell, bool):
        return "TRUE" if cell else "FALSE"
    if isinstance(cell, (int, float)):
        if display_format:
            return format(cell, display_format)
        return repr(cell) if isinstance(cell, float) else str(cell)
    return str(cell)


def read_table_csv(source: str | Path | IO[str], schema: SchemaManifest) -> DataTable:
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            handle = path.open(newline="", encoding="utf-8")
        except OSError as exc:
            raise ValidationError(f"cannot read data file {path}: {exc}") from exc
        with handle:
            return read_table_csv(handle, schema)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError("data file is empty (missing header row)") from None
    if tuple(header) != schema.names:
        missing = [n for n in schema.names if n not in header]
        if missing:
            raise ValidationError(f"data header is missing manifest columns: {missing}")
        raise ValidationError(
            f"data header must match manifest feature names exactly and in order; "
            f"got {header}, expected {list(schema.names)}")
    rows = []
    for r, raw in enumerate(reader):
        if len(raw) != len(schema.names):
            raise ValidationError(
                f"row {r}: expected {len(schema.names)} fields, got {len(raw)}")
        try:
            rows.append(tuple(parse_cell(text, spec)
                              for text, spec in zip(raw, schema.features)))
        except ValidationError as exc:
            raise ValidationError(f"row {r}: {exc}") from None
    return DataTable(schema=schema, rows=tuple(rows))


def write_table_csv(table: DataTable, target: str | Path | IO[str],
                    display_formats: Mapping[str, str] | None = None) -> None:
    """Write CSV with stable byte-for-byte output.

    ``display_formats`` maps feature names to Python format specs (e.g. ".3g")
    for golden-matched numeric columns; everything else uses shortest
    round-trip rendering.
    """
    if isinstance(target, (str, Path)):
        with Path(target).open("w", newline="", encoding="utf-8") as handle:
            write_table_csv(table, handle, display_formats)
        return
    formats = display_formats or {}
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(table.schema.names)
    fmt_per_col = [formats.get(name) for name in table.schema.names]
    for row in table.rows:
        writer.writerow([render_cell(cell, fmt) for cell, fmt in zip(row, fmt_per_col)])


def tables_equal(a: DataTable, b: DataTable, numeric_tol: float = 0.0) -> bool:
    """Cell-level equality; numeric cells compare within ``numeric_tol``."""
    if a.schema.names != b.schema.names or a.num_rows != b.num_rows:
        return False
    for row_a, row_b in zip(a.rows, b.rows):
        for x, y in zip(row_a, row_b):
            if x is MISSING or y is MISSING:
                if x is not y:
                    return False
            elif isinstance(x, bool) or isinstance(y, bool):
                if x is not y:
                    return False
            elif isinstance(x, (int, float)) and isinstance(y, (int, float)):
                if abs(x - y) > numeric_tol:
                    return False
            elif x != y:
                return False
    return True
