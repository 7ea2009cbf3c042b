"""Shared domain types: the (T,Q) state, documents, relations, actions, transcripts.

Everything here is a plain value. Mutation happens by constructing new
versions (see apply_diff), never in place, so values can be copied freely
across threads and sessions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

NULL_MARKER = "∅"  # ∅ in the canonical table-document format

IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
ISO_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")

TOOL_NAMES = ("ir_search", "materialize", "sql_execute")


class SeekerError(Exception):
    """Base class for all errors raised by this package."""


class VersionMismatch(SeekerError):
    pass


class VersionGap(SeekerError):
    pass


class UnknownTable(SeekerError):
    pass


class DuplicateTable(SeekerError):
    pass


class InvalidDiff(SeekerError):
    pass


class Dtype(str, Enum):
    INT = "int"
    FLOAT = "float"
    TEXT = "text"
    DATE = "date"
    BOOL = "bool"


class DocKind(str, Enum):
    TABLE = "table"
    KNOWLEDGE = "knowledge"
    WEB = "web"


class ActionKind(str, Enum):
    REASON = "reason"
    TOOL_CALL = "tool_call"
    STATE_UPDATE = "state_update"
    USER_MESSAGE = "user_message"


# ---------------------------------------------------------------------------
# Schemas and relations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    dtype: Dtype
    description: str = ""

    def __post_init__(self) -> None:
        if not IDENT_RE.match(self.name):
            raise ValueError(f"invalid column name: {self.name!r}")
        if not isinstance(self.dtype, Dtype):
            object.__setattr__(self, "dtype", Dtype(self.dtype))


@dataclass(frozen=True)
class TableSpec:
    name: str
    columns: tuple[ColumnSpec, ...]
    materialized: bool = False
    provenance: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not IDENT_RE.match(self.name):
            raise ValueError(f"invalid table name: {self.name!r}")
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "provenance", tuple(self.provenance))
        if not self.columns:
            raise ValueError(f"table {self.name!r} needs at least one column")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate column names in table {self.name!r}")

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "columns": [
                {"name": c.name, "dtype": c.dtype.value, "description": c.description}
                for c in self.columns
            ],
            "materialized": self.materialized,
            "provenance": list(self.provenance),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TableSpec":
        return cls(
            name=d["name"],
            columns=tuple(
                ColumnSpec(c["name"], Dtype(c["dtype"]), c.get("description", ""))
                for c in d["columns"]
            ),
            materialized=d.get("materialized", False),
            provenance=tuple(d.get("provenance", ())),
        )


def check_cell(value: Any, dtype: Dtype) -> Any:
    """Validate one cell against a dtype; ints are widened for float columns.

    Returns the (possibly coerced) value. None always passes: nulls are
    first-class and carried as None everywhere.
    """
    if value is None:
        return None
    if dtype is Dtype.INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"expected int, got {value!r}")
        return value
    if dtype is Dtype.FLOAT:
        if isinstance(value, bool):
            raise ValueError(f"expected float, got {value!r}")
        if isinstance(value, int):
            return float(value)
        if not isinstance(value, float):
            raise ValueError(f"expected float, got {value!r}")
        return value
    if dtype is Dtype.BOOL:
        if not isinstance(value, bool):
            raise ValueError(f"expected bool, got {value!r}")
        return value
    if dtype is Dtype.DATE:
        if not isinstance(value, str) or not ISO_DATE_RE.match(value):
            raise ValueError(f"expected ISO date string, got {value!r}")
        return value
    if dtype is Dtype.TEXT:
        if not isinstance(value, str):
            raise ValueError(f"expected str, got {value!r}")
        return value
    raise ValueError(f"unknown dtype {dtype!r}")


@dataclass(frozen=True)
class Relation:
    """An in-memory named table. Rows are validated on construction;
    malformed rows raise, they are never silently dropped."""

    name: str
    columns: tuple[ColumnSpec, ...]
    rows: tuple[tuple, ...] = ()

    def __post_init__(self) -> None:
        if not IDENT_RE.match(self.name):
            raise ValueError(f"invalid relation name: {self.name!r}")
        cols = tuple(self.columns)
        object.__setattr__(self, "columns", cols)
        checked = []
        for i, row in enumerate(self.rows):
            if len(row) != len(cols):
                raise ValueError(
                    f"row {i} of {self.name!r} has {len(row)} cells, "
                    f"expected {len(cols)}"
                )
            checked.append(
                tuple(check_cell(v, c.dtype) for v, c in zip(row, cols))
            )
        object.__setattr__(self, "rows", tuple(checked))

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def schema_signature(self) -> tuple[tuple[str, str], ...]:
        return tuple((c.name, c.dtype.value) for c in self.columns)


# ---------------------------------------------------------------------------
# The (T,Q) state and diffs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class State:
    """The reified information need: target table schemas T plus the ordered
    SQL statement list Q. Tables are kept sorted by name so equal contents
    always compare equal."""

    tables: tuple[TableSpec, ...] = ()
    queries: tuple[str, ...] = ()
    version: int = 0

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.tables, key=lambda t: t.name))
        names = [t.name for t in ordered]
        if len(set(names)) != len(names):
            raise ValueError("duplicate table names in state")
        object.__setattr__(self, "tables", ordered)
        object.__setattr__(self, "queries", tuple(self.queries))

    def table(self, name: str) -> TableSpec:
        for t in self.tables:
            if t.name == name:
                return t
        raise UnknownTable(name)

    def has_table(self, name: str) -> bool:
        return any(t.name == name for t in self.tables)


@dataclass(frozen=True)
class QueryEdit:
    """One positional edit of Q. old/new use None for "absent":
    (i, None, q) inserts, (i, q, None) deletes, (i, a, b) replaces."""

    index: int
    old: Optional[str]
    new: Optional[str]

    def __post_init__(self) -> None:
        if self.old is None and self.new is None:
            raise InvalidDiff("query edit with neither old nor new text")


@dataclass(frozen=True)
class StateDiff:
    added_tables: tuple[TableSpec, ...] = ()
    removed_tables: tuple[str, ...] = ()
    modified_tables: tuple[TableSpec, ...] = ()
    query_edits: tuple[QueryEdit, ...] = ()
    from_version: int = 0
    to_version: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "added_tables", tuple(self.added_tables))
        object.__setattr__(self, "removed_tables", tuple(self.removed_tables))
        object.__setattr__(self, "modified_tables", tuple(self.modified_tables))
        object.__setattr__(self, "query_edits", tuple(self.query_edits))
        if self.to_version != self.from_version + 1:
            raise InvalidDiff(
                f"diff must advance the version by exactly 1 "
                f"({self.from_version} -> {self.to_version})"
            )

    def is_empty(self) -> bool:
        return not (
            self.added_tables
            or self.removed_tables
            or self.modified_tables
            or self.query_edits
        )

    def to_json_dict(self) -> dict:
        return {
            "added_tables": [t.to_json_dict() for t in self.added_tables],
            "removed_tables": list(self.removed_tables),
            "modified_tables": [t.to_json_dict() for t in self.modified_tables],
            "query_edits": [
                {"index": e.index, "old": e.old, "new": e.new}
                for e in self.query_edits
            ],
            "from_version": self.from_version,
            "to_version": self.to_version,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "StateDiff":
        return cls(
            added_tables=tuple(
                TableSpec.from_json_dict(t) for t in d.get("added_tables", ())
            ),
            removed_tables=tuple(d.get("removed_tables", ())),
            modified_tables=tuple(
                TableSpec.from_json_dict(t) for t in d.get("modified_tables", ())
            ),
            query_edits=tuple(
                QueryEdit(e["index"], e.get("old"), e.get("new"))
                for e in d.get("query_edits", ())
            ),
            from_version=d["from_version"],
            to_version=d["to_version"],
        )


def apply_diff(state: State, diff: StateDiff) -> State:
    """Apply a diff, producing the next state version. The input is unchanged.

    Raises VersionMismatch when the diff was built against a different
    version, UnknownTable / DuplicateTable / InvalidDiff for edits that do
    not fit the current state.
    """
    if diff.from_version != state.version:
        raise VersionMismatch(
            f"diff is for version {diff.from_version}, state is at {state.version}"
        )
    by_name = {t.name: t for t in state.tables}
    for name in diff.removed_tables:
        if name not in by_name:
            raise UnknownTable(name)
        del by_name[name]
    for spec in diff.modified_tables:
        if spec.name not in by_name:
            raise UnknownTable(spec.name)
        by_name[spec.name] = spec
    for spec in diff.added_tables:
        if spec.name in by_name:
            raise DuplicateTable(spec.name)
        by_name[spec.name] = spec

    queries = list(state.queries)
    for edit in diff.query_edits:
        if edit.old is None:
            if not 0 <= edit.index <= len(queries):
                raise InvalidDiff(f"insert index {edit.index} out of range")
            queries.insert(edit.index, edit.new)
        elif not 0 <= edit.index < len(queries):
            raise InvalidDiff(f"edit index {edit.index} out of range")
        elif queries[edit.index] != edit.old:
            raise InvalidDiff(
                f"edit at index {edit.index} expected {edit.old!r}, "
                f"found {queries[edit.index]!r}"
            )
        elif edit.new is None:
            del queries[edit.index]
        else:
            queries[edit.index] = edit.new

    return State(
        tables=tuple(by_name.values()),
        queries=tuple(queries),
        version=diff.to_version,
    )


def diff_states(a: State, b: State) -> StateDiff:
    """Compute the diff between two adjacent state versions such that
    apply_diff(a, diff_states(a, b)) == b."""
    if b.version != a.version + 1:
        raise VersionGap(f"versions not adjacent: {a.version} -> {b.version}")
    a_names = {t.name: t for t in a.tables}
    b_names = {t.name: t for t in b.tables}
    added = tuple(t for n, t in sorted(b_names.items()) if n not in a_names)
    removed = tuple(n for n in sorted(a_names) if n not in b_names)
    modified = tuple(
        t for n, t in sorted(b_names.items()) if n in a_names and a_names[n] != t
    )

    edits: list[QueryEdit] = []
    common = min(len(a.queries), len(b.queries))
    for i in range(common):
        if a.queries[i] != b.queries[i]:
            edits.append(QueryEdit(i, a.queries[i], b.queries[i]))
    if len(b.queries) > common:
        for i in range(common, len(b.queries)):
            edits.append(QueryEdit(i, None, b.queries[i]))
    else:
        for i in range(len(a.queries) - 1, common - 1, -1):
            edits.append(QueryEdit(i, a.queries[i], None))

    return StateDiff(
        added_tables=added,
        removed_tables=removed,
        modified_tables=modified,
        query_edits=tuple(edits),
        from_version=a.version,
        to_version=b.version,
    )


# ---------------------------------------------------------------------------
# Documents
# ---------------------------------------------------------------------------


@dataclass
class Document:
    """Uniform retrieval unit. Tables, knowledge notes, and web pages all
    become Documents before they reach a retriever."""

    id: str
    kind: DocKind
    title: str
    body: str
    source: str = ""
    score: Optional[float] = None

    def __post_init__(self) -> None:
        if not isinstance(self.kind, DocKind):
            self.kind = DocKind(self.kind)

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "title": self.title,
            "body": self.body,
            "source": self.source,
            "score": self.score,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Document":
        return cls(
            id=d["id"],
            kind=DocKind(d["kind"]),
            title=d.get("title", ""),
            body=d.get("body", ""),
            source=d.get("source", ""),
            score=d.get("score"),
        )


_CELL_ESCAPES = {"\\": "\\\\", "|": "\\|", "\n": "\\n", NULL_MARKER: "\\0"}
_CELL_UNESCAPES = {"\\": "\\", "|": "|", "n": "\n", "0": NULL_MARKER}


def _escape_cell(value: Any) -> str:
    if value is None:
        return NULL_MARKER
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    text = str(value)
    out = []
    for ch in text:
        out.append(_CELL_ESCAPES.get(ch, ch))
    return "".join(out)


def _unescape_cell(text: str) -> Optional[str]:
    if text == NULL_MARKER:
        return None
    out = []
    i = 0
    while i < len(text):
        if text[i] == "\\" and i + 1 < len(text):
            out.append(_CELL_UNESCAPES.get(text[i + 1], text[i + 1]))
            i += 2
        else:
            out.append(text[i])
            i += 1
    return "".join(out)


def serialize_table_document(rel: Relation, sample_rows: int = 5) -> Document:
    """Render a relation in the canonical table-document text format:

        # table <name>
        columns: name:dtype, ...
        row: v1 | v2 | ...

    with ∅ for null. At most sample_rows rows are emitted. This exact
    format is used for indexing, prompting, and golden-file tests.
    """
    if sample_rows < 0:
        raise ValueError("sample_rows must be >= 0")
    lines = [f"# table {rel.name}"]
    lines.append(
        "columns: " + ", ".join(f"{c.name}:{c.dtype.value}" for c in rel.columns)
    )
    for row in rel.rows[:sample_rows]:
        lines.append("row: " + " | ".join(_escape_cell(v) for v in row))
    return Document(
        id=f"table:{rel.name}",
        kind=DocKind.TABLE,
        title=rel.name,
        body="\n".join(lines),
        source=f"relation:{rel.name}",
    )


def parse_table_document(body: str) -> Relation:
    """Parse the canonical table-document format back into a Relation.
    Inverse of serialize_table_document for the rows it carries."""
    lines = [ln for ln in body.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("# table "):
        raise ValueError("missing '# table <name>' header")
    name = lines[0][len("# table ") :].strip()
    if len(lines) < 2 or not lines[1].startswith("columns: "):
        raise ValueError("missing 'columns:' line")
    columns = []
    for part in lines[1][len("columns: ") :].split(","):
        part = part.strip()
        if not part:
            continue
        col_name, _, dtype = part.partition(":")
        columns.append(ColumnSpec(col_name.strip(), Dtype(dtype.strip())))
    rows = []
    for ln in lines[2:]:
        if not ln.startswith("row: "):
            raise ValueError(f"unexpected line in table document: {ln!r}")
        cells = _split_row(ln[len("row: ") :])
        if len(cells) != len(columns):
            raise ValueError(
                f"row has {len(cells)} cells, expected {len(columns)}"
            )
        rows.append(
            tuple(
                _coerce_cell(_unescape_cell(cell), col.dtype)
                for cell, col in zip(cells, columns)
            )
        )
    return Relation(name=name, columns=tuple(columns), rows=tuple(rows))


def _split_row(text: str) -> list[str]:
    cells = []
    current = []
    i = 0
    while i < len(text):
        if text[i] == "\\" and i + 1 < len(text):
            current.append(text[i : i + 2])
            i += 2
        elif text.startswith(" | ", i):
            cells.append("".join(current))
            current = []
            i += 3
        else:
            current.append(text[i])
            i += 1
    cells.append("".join(current))
    return cells


def _coerce_cell(text: Optional[str], dtype: Dtype) -> Any:
    if text is None:
        return None
    if dtype is Dtype.INT:
        return int(text)
    if dtype is Dtype.FLOAT:
        return float(text)
    if dtype is Dtype.BOOL:
        return text.strip().lower() == "true"
    return text


# ---------------------------------------------------------------------------
# Actions and transcripts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Action:
    """One conductor step. Exactly the fields for its kind are set:
    reason/user_message carry text, tool_call carries tool+arguments,
    state_update carries a diff."""

    kind: ActionKind
    index_in_turn: int
    text: Optional[str] = None
    tool: Optional[str] = None
    arguments: Optional[dict] = None
    diff: Optional[StateDiff] = None
    forced: bool = False

    def __post_init__(self) -> None:
        if self.index_in_turn < 0:
            raise ValueError("index_in_turn must be >= 0")
        if self.kind in (ActionKind.REASON, ActionKind.USER_MESSAGE):
            if self.text is None:
                raise ValueError(f"{self.kind.value} action needs text")
        elif self.kind is ActionKind.TOOL_CALL:
            if self.tool not in TOOL_NAMES:
                raise ValueError(f"unknown tool {self.tool!r}")
        elif self.kind is ActionKind.STATE_UPDATE:
            if self.diff is None:
                raise ValueError("state_update action needs a diff")

    def to_json_dict(self) -> dict:
        out: dict = {"kind": self.kind.value, "index_in_turn": self.index_in_turn}
        if self.text is not None:
            out["text"] = self.text
        if self.tool is not None:
            out["tool"] = self.tool
            out["arguments"] = self.arguments or {}
        if self.diff is not None:
            out["diff"] = self.diff.to_json_dict()
        if self.forced:
            out["forced"] = True
        return out

    @classmethod
    def from_json_dict(cls, d: dict) -> "Action":
        return cls(
            kind=ActionKind(d["kind"]),
            index_in_turn=d["index_in_turn"],
            text=d.get("text"),
            tool=d.get("tool"),
            arguments=d.get("arguments"),
            diff=StateDiff.from_json_dict(d["diff"]) if "diff" in d else None,
            forced=d.get("forced", False),
        )


@dataclass
class Turn:
    user_text: str
    actions: list[Action]
    final_user_message: str
    state_version_after: int
    input_tokens: int = 0
    output_tokens: int = 0
    forced: bool = False


@dataclass
class SessionTranscript:
    """Full turn/action/state history of one session; the input to metrics
    and knowledge capture."""

    session_id: str
    turns: list[Turn] = field(default_factory=list)
    converged_at_turn: Optional[int] = None

    def append_turn(self, turn: Turn, action_budget: int) -> None:
        if not turn.actions or turn.actions[-1].kind is not ActionKind.USER_MESSAGE:
            raise ValueError("turn must end with a user_message action")
        pre_message = [
            a for a in turn.actions if a.kind is not ActionKind.USER_MESSAGE
        ]
        if len(pre_message) > action_budget:
            raise ValueError(
                f"{len(pre_message)} pre-message actions exceed budget "
                f"{action_budget}"
            )
        self.turns.append(turn)

    @property
    def token_usage(self) -> tuple[int, int]:
        return (
            sum(t.input_tokens for t in self.turns),
            sum(t.output_tokens for t in self.turns),
        )
