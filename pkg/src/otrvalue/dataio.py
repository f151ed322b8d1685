"""CSV ingestion with per-row diagnostics."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import AnalysisError, Dataset

__all__ = ["CsvSchema", "load_dataset"]


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for a dataset file.

    With ``header=False`` the column names are 0-based position numbers
    given as strings.  ``a_labels`` maps a (control, treated) label pair to
    0/1; without it the treatment column must already read 0 or 1.
    """

    x_columns: tuple
    a_column: str
    y_column: str
    delimiter: str = ","
    header: bool = True
    a_labels: tuple | None = None

    def __post_init__(self):
        names = tuple(self.x_columns) + (self.a_column, self.y_column)
        if len(set(names)) != len(names):
            raise AnalysisError("bad-schema", "column names must be distinct")
        if not self.x_columns:
            raise AnalysisError("bad-schema", "need at least one covariate column")
        object.__setattr__(self, "x_columns", tuple(self.x_columns))
        if self.a_labels is not None and len(self.a_labels) != 2:
            raise AnalysisError("bad-schema", "a_labels must name exactly two treatment labels")


def _column_positions(schema: CsvSchema, first_row):
    wanted = list(schema.x_columns) + [schema.a_column, schema.y_column]
    if schema.header:
        positions = {}
        for name in wanted:
            try:
                positions[name] = first_row.index(name)
            except ValueError:
                raise AnalysisError("missing-column", f"column {name!r} not found in header") from None
        return positions
    positions = {}
    for name in wanted:
        try:
            pos = int(name)
        except ValueError:
            raise AnalysisError("bad-schema", f"headerless files need numeric column positions, got {name!r}") from None
        if not 0 <= pos < len(first_row):
            raise AnalysisError("missing-column", f"column position {pos} outside a {len(first_row)}-column file")
        positions[name] = pos
    return positions


def _parse_float(raw, column, rownum):
    try:
        value = float(raw)
    except ValueError:
        raise AnalysisError("bad-row", f"unparseable value {raw!r} in column {column!r} at row {rownum}") from None
    if not math.isfinite(value):
        raise AnalysisError("bad-row", f"non-finite value in column {column!r} at row {rownum}")
    return value


def _parse_treatment(raw, schema, rownum):
    text = raw.strip()
    if schema.a_labels is not None:
        lab0, lab1 = (str(v) for v in schema.a_labels)
        if text == lab0:
            return 0
        if text == lab1:
            return 1
        raise AnalysisError(
            "bad-row", f"treatment value {raw!r} at row {rownum} matches neither label {lab0!r} nor {lab1!r}"
        )
    try:
        value = float(text)
    except ValueError:
        raise AnalysisError("bad-row", f"treatment value {raw!r} at row {rownum} is not binary") from None
    if value == 0.0:
        return 0
    if value == 1.0:
        return 1
    raise AnalysisError("bad-row", f"treatment value {raw!r} at row {rownum} is not binary")


def load_dataset(path, schema: CsvSchema) -> Dataset:
    """Parse the file into a Dataset; any malformed row aborts with its
    1-based data-row number in the message."""
    xs, As, ys = [], [], []
    with open(path, newline="") as handle:
        reader = csv.reader(handle, delimiter=schema.delimiter)
        positions = None
        rownum = 0
        for record in reader:
            if not record or all(not field.strip() for field in record):
                continue
            if positions is None:
                positions = _column_positions(schema, record)
                if schema.header:
                    continue
            rownum += 1
            width = max(positions.values())
            if len(record) <= width:
                raise AnalysisError("bad-row", f"row {rownum} has {len(record)} fields, expected at least {width + 1}")
            xs.append([_parse_float(record[positions[c]], c, rownum) for c in schema.x_columns])
            As.append(_parse_treatment(record[positions[schema.a_column]], schema, rownum))
            ys.append(_parse_float(record[positions[schema.y_column]], schema.y_column, rownum))
    if not xs:
        raise AnalysisError("empty-dataset", f"no data rows in {path}")
    return Dataset(x=np.asarray(xs, dtype=float), a=np.asarray(As, dtype=int), y=np.asarray(ys, dtype=float))
