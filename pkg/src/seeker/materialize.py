"""Materializer: populate target tables with real data by loading evidence
documents, running SQL integration steps, and applying column transforms.

Plans come from the LLM (role "materializer") as strict JSON. Step
failures are not fatal: the structured error chain is fed back into a
fresh planning call, up to a bounded number of repair rounds.
"""

from __future__ import annotations

import datetime
import io
import json
import re
from dataclasses import dataclass
from typing import Optional, Union

from seeker.backend import CompletionRequest
from seeker.model import (
    ColumnSpec,
    Document,
    Dtype,
    Relation,
    SeekerError,
    TableSpec,
    parse_table_document,
)
from seeker.sql import analyze, catalog_of, execute, parse, parse_csv, sanitize_identifier
from seeker.sql.csvio import CsvError


class NotTabular(SeekerError):
    pass


class PlanningFailure(SeekerError):
    pass


class EvidenceGap(SeekerError):
    def __init__(self, missing_columns: list[str]):
        self.missing_columns = missing_columns
        super().__init__(
            "no evidence covers target column(s): " + ", ".join(missing_columns)
        )


class MaterializationFailed(SeekerError):
    def __init__(self, chain: list[str]):
        self.chain = list(chain)
        super().__init__(" | ".join(chain))


# -- requests, plans, steps ----------------------------------------------------


@dataclass(frozen=True)
class MaterializationRequest:
    target: TableSpec
    note: str
    evidence: tuple[Document, ...]
    queries_context: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "evidence", tuple(self.evidence))
        object.__setattr__(self, "queries_context", tuple(self.queries_context))


@dataclass(frozen=True)
class LoadStep:
    document_id: str
    as_name: str


@dataclass(frozen=True)
class SqlStep:
    statement: str


TRANSFORM_KINDS = ("date_reformat", "cast", "arithmetic", "string_map", "fill_null")


@dataclass(frozen=True)
class TransformSpec:
    kind: str
    dtype: Optional[Dtype] = None  # cast
    expression: Optional[str] = None  # arithmetic
    pattern: Optional[str] = None  # string_map
    replacement: Optional[str] = None  # string_map
    constant: Optional[object] = None  # fill_null
    from_pattern: Optional[str] = None  # date_reformat, informational

    def __post_init__(self) -> None:
        if self.kind not in TRANSFORM_KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.kind == "cast" and self.dtype is None:
            raise ValueError("cast transform needs a dtype")
        if self.kind == "arithmetic" and not self.expression:
            raise ValueError("arithmetic transform needs an expression")
        if self.kind == "string_map":
            if self.pattern is None or self.replacement is None:
                raise ValueError("string_map needs pattern and replacement")
            re.compile(self.pattern)  # pattern must be syntactically valid
        if self.kind == "fill_null" and self.constant is None:
            raise ValueError("fill_null needs a constant")


@dataclass(frozen=True)
class TransformStep:
    relation: str
    column: str
    spec: TransformSpec


PlanStep = Union[LoadStep, SqlStep, TransformStep]


@dataclass(frozen=True)
class MaterializationPlan:
    steps: tuple[PlanStep, ...]
    produced_by: str = ""  # backend call id / sequence marker

    def to_json_dict(self) -> dict:
        out = []
        for s in self.steps:
            if isinstance(s, LoadStep):
                out.append({"op": "load", "document_id": s.document_id, "as": s.as_name})
            elif isinstance(s, SqlStep):
                out.append({"op": "sql", "statement": s.statement})
            else:
                t = {"kind": s.spec.kind}
                for f in ("expression", "pattern", "replacement", "constant", "from_pattern"):
                    v = getattr(s.spec, f)
                    if v is not None:
                        t[f] = v
                if s.spec.dtype is not None:
                    t["dtype"] = s.spec.dtype.value
                out.append(
                    {"op": "transform", "relation": s.relation, "column": s.column, "transform": t}
                )
        return {"steps": out, "produced_by": self.produced_by}


def plan_from_json(payload: dict, produced_by: str = "") -> MaterializationPlan:
    if not isinstance(payload, dict) or not isinstance(payload.get("steps"), list):
        raise ValueError("plan must be an object with a 'steps' array")
    if not payload["steps"]:
        raise ValueError("plan has no steps")
    steps: list[PlanStep] = []
    for i, raw in enumerate(payload["steps"]):
        op = raw.get("op")
        if op == "load":
            steps.append(
                LoadStep(
                    document_id=str(raw["document_id"]),
                    as_name=sanitize_identifier(str(raw["as"])),
                )
            )
        elif op == "sql":
            steps.append(SqlStep(statement=str(raw["statement"])))
        elif op == "transform":
            t = raw.get("transform", {})
            spec = TransformSpec(
                kind=t.get("kind", ""),
                dtype=Dtype(t["dtype"]) if "dtype" in t else None,
                expression=t.get("expression"),
                pattern=t.get("pattern"),
                replacement=t.get("replacement"),
                constant=t.get("constant"),
                from_pattern=t.get("from_pattern"),
            )
            steps.append(
                TransformStep(
                    relation=str(raw["relation"]), column=str(raw["column"]), spec=spec
                )
            )
        else:
            raise ValueError(f"step {i}: unknown op {op!r}")
    return MaterializationPlan(steps=tuple(steps), produced_by=produced_by)


# -- evidence parsing -------------------------------------------------------------


def parse_tabular_evidence(doc: Document) -> Relation:
    """Extract a typed Relation from a document carrying a table in
    canonical format, a markdown pipe table, or a CSV block."""
    body = doc.body.strip()
    if body.startswith("# table "):
        return parse_table_document(body)

    lines = [ln.strip() for ln in body.splitlines() if ln.strip()]
    pipe_lines = [ln for ln in lines if ln.startswith("|") and ln.endswith("|")]
    if len(pipe_lines) >= 2:
        return _parse_markdown_table(pipe_lines, _evidence_name(doc))

    if len(lines) >= 2 and ("," in lines[0]):
        try:
            rel = parse_csv(body, _evidence_name(doc))
            if len(rel.columns) >= 2:
                return rel
        except CsvError:
            pass
    raise NotTabular(f"document {doc.id!r} carries no recognizable table")


def _evidence_name(doc: Document) -> str:
    return sanitize_identifier(doc.title or doc.id)


def _parse_markdown_table(pipe_lines: list[str], name: str) -> Relation:
    def cells(line: str) -> list[str]:
        return [c.strip() for c in line.strip("|").split("|")]

    header = cells(pipe_lines[0])
    rows_raw = []
    for ln in pipe_lines[1:]:
        row = cells(ln)
        if all(re.fullmatch(r":?-{2,}:?", c) for c in row):
            continue  # separator row
        rows_raw.append(row)
    if any(len(r) != len(header) for r in rows_raw):
        raise NotTabular("ragged markdown table")
    buf = io.StringIO()
    import csv as _csv

    writer = _csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows_raw)
    return parse_csv(buf.getvalue(), name)


# -- transforms ---------------------------------------------------------------------

_MONTH_NAME_RE = re.compile(
    r"^(January|February|March|April|May|June|July|August|September|October|"
    r"November|December)\s+(\d{1,2}),\s*(\d{4})$",
    re.IGNORECASE,
)
_MONTHS = {
    m: i + 1
    for i, m in enumerate(
        [
            "january", "february", "march", "april", "may", "june",
            "july", "august", "september", "october", "november", "december",
        ]
    )
}
_MDY_RE = re.compile(r"^(\d{1,2})/(\d{1,2})/(\d{4})$")


def reformat_date(value: str) -> Optional[str]:
    """Normalize 'Month D, YYYY', MM/DD/YYYY, or ISO dates to yyyy-mm-dd;
    anything else is None (lossy cases stay visible as nulls + warnings)."""
    text = value.strip()
    m = _MONTH_NAME_RE.match(text)
    if m:
        month = _MONTHS[m.group(1).lower()]
        try:
            return datetime.date(int(m.group(3)), month, int(m.group(2))).isoformat()
        except ValueError:
            return None
    m = _MDY_RE.match(text)
    if m:
        try:
            return datetime.date(
                int(m.group(3)), int(m.group(1)), int(m.group(2))
            ).isoformat()
        except ValueError:
            return None
    try:
        return datetime.date.fromisoformat(text).isoformat()
    except ValueError:
        return None


@dataclass
class TransformWarning:
    code: str
    message: str


def apply_transform(
    rel: Relation,
    column: str,
    spec: TransformSpec,
    warnings: Optional[list[TransformWarning]] = None,
) -> Relation:
    """Apply one column transform, returning a new relation. Lossy cells
    become nulls with a warning record; row count never changes."""
    warnings = warnings if warnings is not None else []
    names = rel.column_names()

    if spec.kind == "arithmetic":
        return _arithmetic_transform(rel, column, spec.expression, warnings)

    if column not in names:
        raise SeekerError(f"column {column!r} not in relation {rel.name!r}")
    idx = names.index(column)
    col = rel.columns[idx]

    def map_rows(func, new_dtype: Dtype) -> Relation:
        new_rows = tuple(
            tuple(func(v) if i == idx else v for i, v in enumerate(row))
            for row in rel.rows
        )
        new_cols = tuple(
            ColumnSpec(c.name, new_dtype, c.description) if i == idx else c
            for i, c in enumerate(rel.columns)
        )
        return Relation(rel.name, new_cols, new_rows)

    if spec.kind == "date_reformat":
        def conv(v):
            if v is None:
                return None
            out = reformat_date(str(v))
            if out is None:
                warnings.append(
                    TransformWarning("date_unparseable", f"cannot parse date {v!r}")
                )
            return out

        return map_rows(conv, Dtype.DATE)

    if spec.kind == "cast":
        from seeker.sql.execute import _cast, _Ctx

        ctx = _Ctx()

        def conv(v):
            return _cast(v, spec.dtype, ctx)

        out = map_rows(conv, spec.dtype)
        warnings.extend(TransformWarning(w.code, w.message) for w in ctx.warnings)
        return out

    if spec.kind == "string_map":
        if col.dtype is not Dtype.TEXT:
            raise SeekerError(f"string_map over non-text column {column!r}")
        rx = re.compile(spec.pattern)

        def conv(v):
            return None if v is None else rx.sub(spec.replacement, v)

        return map_rows(conv, Dtype.TEXT)

    if spec.kind == "fill_null":
        def conv(v):
            return spec.constant if v is None else v

        return map_rows(conv, col.dtype)

    raise SeekerError(f"unknown transform kind {spec.kind!r}")


def _arithmetic_transform(
    rel: Relation, column: str, expression: str, warnings: list[TransformWarning]
) -> Relation:
    """Compute `expression` per row (engine semantics: nulls propagate,
    division by zero is null) and write it into `column`."""
    names = rel.column_names()
    projections = []
    for name in names:
        if name == column:
            continue
        projections.append(name)
    projections.append(f"({expression}) AS {column}")
    sql = f"SELECT {', '.join(projections)} FROM {rel.name}"
    stmt = parse(sql)
    plan = analyze(stmt, catalog_of({rel.name: rel}))
    engine_warnings: list = []
    out = execute(plan, {rel.name: rel}, warnings=engine_warnings, result_name=rel.name)
    warnings.extend(TransformWarning(w.code, w.message) for w in engine_warnings)
    if column in names:
        # restore original column order
        order = names
    else:
        order = names + [column]
    by_name = {c.name: i for i, c in enumerate(out.columns)}
    idxs = [by_name[n] for n in order]
    cols = tuple(out.columns[i] for i in idxs)
    rows = tuple(tuple(row[i] for i in idxs) for row in out.rows)
    return Relation(rel.name, cols, rows)


# -- planning and execution ------------------------------------------------------------

PLAN_PROMPT = """\
You are the data integration planner. Produce a JSON plan that builds the \
target table from the evidence documents and the relations already \
available. Respond with ONLY a JSON object of the form
{{"steps": [
  {{"op": "load", "document_id": "<evidence doc id>", "as": "<relation name>"}},
  {{"op": "sql", "statement": "CREATE TABLE <name> AS SELECT ..."}},
  {{"op": "transform", "relation": "<name>", "column": "<col>",
    "transform": {{"kind": "date_reformat|cast|arithmetic|string_map|fill_null", ...}}}}
]}}
The final relation must be named {target_name} and have exactly these \
columns, in order: {target_schema}.

Instruction: {note}

Queries the result must serve (Q):
{queries}

Available relations:
{catalog}

Evidence documents:
{evidence}
{feedback}"""


def _schema_text(spec: TableSpec) -> str:
    return ", ".join(f"{c.name}:{c.dtype.value}" for c in spec.columns)


def _evidence_digest(docs: tuple[Document, ...], sample_rows: int = 5) -> str:
    parts = []
    for d in docs:
        body = d.body
        lines = body.splitlines()
        if len(lines) > sample_rows + 2:
            body = "\n".join(lines[: sample_rows + 2])
        parts.append(f"--- id={d.id} kind={d.kind.value} title={d.title}\n{body}")
    return "\n".join(parts) if parts else "(none)"


class Materializer:
    """Plans and executes materializations with a bounded repair loop.

    repair_rounds is the total attempt budget: the first failed attempt
    plus repairs may consume at most repair_rounds executions.
    """

    def __init__(self, backend, repair_rounds: int = 3, sample_rows: int = 5):
        self.backend = backend
        self.repair_rounds = repair_rounds
        self.sample_rows = sample_rows

    # -- planning -------------------------------------------------------------

    def check_evidence(
        self, req: MaterializationRequest, data: dict[str, Relation]
    ) -> None:
        """Every target column must be witnessed by an evidence table or an
        existing relation; unwitnessed columns surface as EvidenceGap."""
        witnessed: set[str] = set()
        for rel in data.values():
            witnessed.update(n.lower() for n in rel.column_names())
        for doc in req.evidence:
            try:
                rel = parse_tabular_evidence(doc)
            except NotTabular:
                continue
            witnessed.update(n.lower() for n in rel.column_names())
        missing = [
            c.name for c in req.target.columns if c.name.lower() not in witnessed
        ]
        if missing:
            raise EvidenceGap(missing)

    def plan_materialization(
        self,
        req: MaterializationRequest,
        data: dict[str, Relation],
        feedback: str = "",
        call_id: str = "",
    ) -> MaterializationPlan:
        catalog_text = (
            "\n".join(
                f"- {name}({_schema_text_rel(rel)})" for name, rel in sorted(data.items())
            )
            or "(none)"
        )
        prompt = PLAN_PROMPT.format(
            target_name=req.target.name,
            target_schema=_schema_text(req.target),
            note=req.note,
            queries="\n".join(f"- {q}" for q in req.queries_context) or "(none)",
            catalog=catalog_text,
            evidence=_evidence_digest(req.evidence, self.sample_rows),
            feedback=f"\nPrevious attempt failed:\n{feedback}\n" if feedback else "",
        )
        last_error = ""
        for attempt in range(self.repair_rounds):
            suffix = (
                f"\nYour previous response was not a valid plan: {last_error}\n"
                "Respond with only the JSON plan object."
                if last_error
                else ""
            )
            text, _usage = self.backend.complete(
                CompletionRequest(role="materializer", prompt=prompt + suffix)
            )
            try:
                payload = json.loads(_strip_fences(text))
                return plan_from_json(payload, produced_by=call_id or f"call-{attempt}")
            except (ValueError, KeyError, TypeError) as exc:
                last_error = str(exc)
        raise PlanningFailure(
            f"no valid plan after {self.repair_rounds} attempts: {last_error}"
        )

    # -- execution ----------------------------------------------------------------

    def execute_plan(
        self,
        plan: MaterializationPlan,
        req: MaterializationRequest,
        data: dict[str, Relation],
    ) -> Relation:
        """Run one plan against a scratch copy of the catalog. Raises with
        a structured message on the first failing step."""
        scratch = dict(data)
        evidence_by_id = {d.id: d for d in req.evidence}
        for i, step in enumerate(plan.steps):
            try:
                if isinstance(step, LoadStep):
                    if step.document_id not in evidence_by_id:
                        raise SeekerError(
                            f"load names document {step.document_id!r} "
                            "which is not in the evidence set"
                        )
                    rel = parse_tabular_evidence(evidence_by_id[step.document_id])
                    scratch[step.as_name] = Relation(
                        step.as_name, rel.columns, rel.rows
                    )
                elif isinstance(step, SqlStep):
                    stmt = parse(step.statement)
                    typed = analyze(stmt, catalog_of(scratch))
                    # a bare SELECT as the final step names the target itself
                    is_last = i == len(plan.steps) - 1
                    default_name = req.target.name if is_last else f"step_{i + 1}_result"
                    result = execute(typed, scratch, result_name=default_name)
                    scratch[result.name] = result
                else:
                    rel = scratch.get(step.relation)
                    if rel is None:
                        raise SeekerError(f"unknown relation {step.relation!r}")
                    scratch[step.relation] = apply_transform(
                        rel, step.column, step.spec
                    )
            except SeekerError as exc:
                raise SeekerError(f"step {i + 1} ({_step_kind(step)}): {exc}") from exc

        target = req.target
        if target.name not in scratch:
            raise SeekerError(
                f"plan finished without producing relation {target.name!r}"
            )
        result = scratch[target.name]
        got = result.schema_signature()
        want = tuple((c.name, c.dtype.value) for c in target.columns)
        if got != want:
            raise SeekerError(
                f"schema mismatch: produced ({_sig_text(got)}), "
                f"target needs ({_sig_text(want)})"
            )
        data[target.name] = result
        return result

    def materialize(
        self, req: MaterializationRequest, data: dict[str, Relation]
    ) -> tuple[Relation, list[dict]]:
        """Full loop: plan, execute, repair on failure. Returns the
        materialized relation and the per-attempt audit records. Raises
        MaterializationFailed with the complete error chain after the
        attempt budget is spent."""
        self.check_evidence(req, data)  # may raise EvidenceGap
        chain: list[str] = []
        attempts: list[dict] = []
        for round_no in range(1, self.repair_rounds + 1):
            feedback = "\n".join(chain)
            plan = self.plan_materialization(
                req, data, feedback=feedback, call_id=f"round-{round_no}"
            )
            try:
                relation = self.execute_plan(plan, req, data)
                attempts.append(
                    {"plan": plan.to_json_dict(), "outcome": "success", "error": None}
                )
                return relation, attempts
            except SeekerError as exc:
                error = f"round {round_no}: {exc}"
                chain.append(error)
                attempts.append(
                    {"plan": plan.to_json_dict(), "outcome": "error", "error": error}
                )
        raise MaterializationFailed(chain)


def _schema_text_rel(rel: Relation) -> str:
    return ", ".join(f"{c.name}:{c.dtype.value}" for c in rel.columns)


def _sig_text(sig) -> str:
    return ", ".join(f"{n}:{d}" for n, d in sig)


def _step_kind(step: PlanStep) -> str:
    if isinstance(step, LoadStep):
        return "load"
    if isinstance(step, SqlStep):
        return "sql"
    return "transform"


def _strip_fences(text: str) -> str:
    text = text.strip()
    if text.startswith("```"):
        text = re.sub(r"^```[a-z]*\n?", "", text)
        text = re.sub(r"\n?```$", "", text)
    return text
