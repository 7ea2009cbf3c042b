"""CSV ingestion: RFC-4180 quoting, required header row, dtype inference.

Inference tries each column as int, then float, then ISO date, then bool,
falling back to text. Empty cells are nulls and don't veto a dtype.
"""

from __future__ import annotations

import csv
import io
import re
from seeker.model import (
    ColumnSpec,
    Dtype,
    ISO_DATE_RE,
    Relation,
    SeekerError,
)


class CsvError(SeekerError):
    def __init__(self, code: str, message: str, line: int):
        self.code = code
        self.line = line
        super().__init__(f"{message} (line {line})")

    def record(self) -> dict:
        return {"code": self.code, "message": str(self), "location": self.line}


_INT_RE = re.compile(r"^[+-]?\d+$")
_FLOAT_RE = re.compile(r"^[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?$")


def sanitize_identifier(raw: str) -> str:
    """Make a header or file stem usable as an identifier."""
    name = re.sub(r"[^A-Za-z0-9_]", "_", raw.strip())
    if not name or name[0].isdigit():
        name = "_" + name
    return name


def _infer_dtype(values: list[str]) -> Dtype:
    present = [v for v in values if v != ""]
    if not present:
        return Dtype.TEXT
    if all(_INT_RE.match(v) for v in present):
        return Dtype.INT
    if all(_FLOAT_RE.match(v) for v in present):
        return Dtype.FLOAT
    if all(ISO_DATE_RE.match(v) for v in present):
        return Dtype.DATE
    if all(v.lower() in ("true", "false") for v in present):
        return Dtype.BOOL
    return Dtype.TEXT


def _convert(value: str, dtype: Dtype):
    if value == "":
        return None
    if dtype is Dtype.INT:
        return int(value)
    if dtype is Dtype.FLOAT:
        return float(value)
    if dtype is Dtype.BOOL:
        return value.lower() == "true"
    return value


def parse_csv(text: str, name: str, delimiter: str = ",") -> Relation:
    """Parse CSV text into a typed Relation.

    Raises CsvError with a 1-based line number on ragged rows, duplicate
    headers, or an empty input.
    """
    reader = csv.reader(io.StringIO(text), delimiter=delimiter, strict=True)
    try:
        rows = list(reader)
    except csv.Error as exc:
        raise CsvError("csv_parse", f"malformed CSV: {exc}", getattr(reader, "line_num", 0))
    if not rows:
        raise CsvError("csv_empty", "missing header row", 1)

    header = [sanitize_identifier(h) for h in rows[0]]
    if any(not h for h in header):
        raise CsvError("csv_header", "blank column name in header", 1)
    seen: dict[str, int] = {}
    for i, h in enumerate(header):
        if h in seen:
            seen[h] += 1
            header[i] = f"{h}_{seen[h]}"
        else:
            seen[h] = 0

    width = len(header)
    for idx, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise CsvError(
                "csv_ragged",
                f"row has {len(row)} fields, header has {width}",
                idx,
            )

    columns_raw = list(zip(*rows[1:])) if len(rows) > 1 else [[] for _ in header]
    dtypes = [_infer_dtype(list(col)) for col in columns_raw]

    typed_rows = tuple(
        tuple(_convert(cell, dtype) for cell, dtype in zip(row, dtypes))
        for row in rows[1:]
    )
    columns = tuple(ColumnSpec(h, d) for h, d in zip(header, dtypes))
    return Relation(name=sanitize_identifier(name), columns=columns, rows=typed_rows)


def relation_to_csv(rel: Relation) -> str:
    """Inverse-ish of parse_csv; nulls become empty cells."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(rel.column_names())
    for row in rel.rows:
        writer.writerow(
            [
                ""
                if v is None
                else ("true" if v is True else "false")
                if isinstance(v, bool)
                else repr(v)
                if isinstance(v, float)
                else v
                for v in row
            ]
        )
    return buf.getvalue()
