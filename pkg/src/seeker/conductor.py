"""The orchestration loop: per user turn, choose among reasoning, tool
calls, state updates, and user-facing messages, one LLM envelope at a
time, under a hard action budget.

Two rules are enforced mechanically rather than by prompting: a turn
always closes with a user-facing message (a dedicated forced-summary
completion fires when the budget runs out without one), and state updates
pass through a grounding check that flags tables, columns, and constant
filters no retrieved evidence supports. Gaps don't block the update; they
are injected as high-priority observations so the next action can search
further or ask the user.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

from seeker.backend import BackendError, CompletionRequest, Usage, approx_tokens
from seeker.materialize import (
    EvidenceGap,
    MaterializationRequest,
    Materializer,
    NotTabular,
    parse_tabular_evidence,
)
from seeker.model import (
    Action,
    ActionKind,
    ColumnSpec,
    DocKind,
    Document,
    Dtype,
    QueryEdit,
    Relation,
    SeekerError,
    State,
    StateDiff,
    TableSpec,
    Turn,
    serialize_table_document,
)
from seeker.session import Session, TurnEvent, state_hash
from seeker.sql import analyze, catalog_of, execute, parse
from seeker.sql import ast as sql_ast
from seeker.sql.lexer import SqlSyntaxError

TOOL_MANIFEST = """\
- ir_search: {"action": "tool_call", "tool": "ir_search", "arguments": {"query": "<text>", "k": <int, optional>, "kinds": ["table"|"knowledge"|"web", ...] (optional)}}
- materialize: {"action": "tool_call", "tool": "materialize", "arguments": {"table": "<name in T>", "note": "<instruction>"}}
- sql_execute: {"action": "tool_call", "tool": "sql_execute", "arguments": {"queries": [<0-based indexes into Q>] (optional, default all)}}"""

ENVELOPE_CONTRACT = """\
Respond with exactly ONE JSON object, no prose around it, in one of these forms:
{"action": "reason", "text": "<your internal reasoning>"}
{"action": "tool_call", "tool": "<ir_search|materialize|sql_execute>", "arguments": {...}}
{"action": "state_update", "diff": {"add_tables": [{"name": ..., "columns": [{"name": ..., "dtype": "int|float|text|date|bool", "description": "..."}]}], "remove_tables": ["name"], "modify_tables": [...], "query_edits": [{"index": <int>, "old": "<text or null>", "new": "<text or null>"}]}}
{"action": "user_message", "text": "<message to the user>"}"""

ROLE_PREAMBLE = """\
You are the conductor of an interactive data-discovery and preparation
engine. The user's evolving information need is reified as a relational
state (T, Q): target table schemas T and an ordered SQL statement list Q.
Ground every schema and query decision in retrieved evidence rather than
assumption; when evidence is missing, search further or ask the user.
Tables in T must be materialized before Q can run against them. Close
every turn with a user-facing message."""

FORCED_SUMMARY_PROMPT = """\
Your action budget for this turn is spent and no user-facing message was
produced. Summarize, in 2-4 sentences addressed to the user, what was done
this turn, the current shape of (T, Q), and what input you need next.

{state_section}

Actions taken this turn:
{actions_digest}"""


class EnvelopeError(SeekerError):
    pass


class ContextOverflow(SeekerError):
    pass


class TurnFailed(SeekerError):
    def __init__(self, message: str, consumed: Optional[list[str]] = None):
        super().__init__(message)
        self.consumed = list(consumed or [])


@dataclass(frozen=True)
class ConductorConfig:
    action_budget: int = 5
    top_k: int = 10
    repair_rounds: int = 3
    grounding: bool = True
    sample_rows: int = 5
    context_token_ceiling: int = 8000
    envelope_retries: int = 3

    def __post_init__(self) -> None:
        if self.action_budget < 1:
            raise ValueError("action budget must be >= 1")

    def to_json_dict(self) -> dict:
        return {
            "action_budget": self.action_budget,
            "top_k": self.top_k,
            "repair_rounds": self.repair_rounds,
            "grounding": self.grounding,
            "sample_rows": self.sample_rows,
            "context_token_ceiling": self.context_token_ceiling,
            "envelope_retries": self.envelope_retries,
        }


@dataclass
class GroundingGap:
    kind: str  # table | column | filter | query
    name: str
    suggestion: str  # search_more | ask_user

    def render(self) -> str:
        return (
            f"GROUNDING GAP: {self.kind} {self.name!r} is not supported by any "
            f"retrieved evidence - suggestion: {self.suggestion}"
        )


@dataclass
class TurnContext:
    state: State
    user_text: str
    state_rendering: str = ""
    retrieved_this_turn: list[Document] = field(default_factory=list)
    catalog_summary: list[str] = field(default_factory=list)
    turn_summaries: list[str] = field(default_factory=list)
    observations: list[str] = field(default_factory=list)
    token_ceiling: int = 8000
    sample_rows: int = 5


@dataclass
class TurnResult:
    final_message: str
    state: State
    actions: list[Action]
    forced: bool
    failed: bool
    usage: Usage
    events: list[TurnEvent]


# -- envelope parsing ----------------------------------------------------------

_ENVELOPE_KEYS = {
    "reason": {"action", "text"},
    "user_message": {"action", "text"},
    "tool_call": {"action", "tool", "arguments"},
    "state_update": {"action", "diff"},
}
_DIFF_KEYS = {"add_tables", "remove_tables", "modify_tables", "query_edits"}
_TOOLS = ("ir_search", "materialize", "sql_execute")


def parse_envelope(text: str) -> dict:
    """Validate one action envelope. Unknown fields are rejected, the
    action kind must be one of the four, payloads are shape-checked."""
    stripped = text.strip()
    if stripped.startswith("```"):
        lines = stripped.splitlines()
        stripped = "\n".join(
            ln for ln in lines if not ln.strip().startswith("```")
        )
    try:
        payload = json.loads(stripped)
    except json.JSONDecodeError as exc:
        raise EnvelopeError(f"not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise EnvelopeError("envelope must be a JSON object")
    kind = payload.get("action")
    if kind not in _ENVELOPE_KEYS:
        raise EnvelopeError(f"unknown action kind {kind!r}")
    extra = set(payload) - _ENVELOPE_KEYS[kind]
    if extra:
        raise EnvelopeError(f"unknown fields for {kind}: {sorted(extra)}")
    if kind in ("reason", "user_message"):
        if not isinstance(payload.get("text"), str) or not payload["text"].strip():
            raise EnvelopeError(f"{kind} needs non-empty text")
    elif kind == "tool_call":
        if payload.get("tool") not in _TOOLS:
            raise EnvelopeError(f"unknown tool {payload.get('tool')!r}")
        if not isinstance(payload.get("arguments"), dict):
            raise EnvelopeError("tool_call needs an arguments object")
        _check_tool_args(payload["tool"], payload["arguments"])
    else:
        diff = payload.get("diff")
        if not isinstance(diff, dict):
            raise EnvelopeError("state_update needs a diff object")
        extra = set(diff) - _DIFF_KEYS
        if extra:
            raise EnvelopeError(f"unknown diff fields: {sorted(extra)}")
        if not diff:
            raise EnvelopeError("state_update diff is empty")
    return payload


def _check_tool_args(tool: str, args: dict) -> None:
    if tool == "ir_search":
        if not isinstance(args.get("query"), str) or not args["query"].strip():
            raise EnvelopeError("ir_search needs a query string")
        allowed = {"query", "k", "kinds"}
    elif tool == "materialize":
        for key in ("table", "note"):
            if not isinstance(args.get(key), str) or not args[key].strip():
                raise EnvelopeError(f"materialize needs {key}")
        allowed = {"table", "note"}
    else:
        if "queries" in args and not (
            isinstance(args["queries"], list)
            and all(isinstance(i, int) for i in args["queries"])
        ):
            raise EnvelopeError("sql_execute queries must be a list of indexes")
        allowed = {"queries"}
    extra = set(args) - allowed
    if extra:
        raise EnvelopeError(f"unknown {tool} arguments: {sorted(extra)}")


def diff_from_envelope(diff: dict, state: State) -> StateDiff:
    """Build a StateDiff from envelope JSON, stamping version numbers."""
    def spec(d: dict) -> TableSpec:
        return TableSpec(
            name=d["name"],
            columns=tuple(
                ColumnSpec(c["name"], Dtype(c["dtype"]), c.get("description", ""))
                for c in d.get("columns", ())
            ),
            materialized=bool(d.get("materialized", False)),
            provenance=tuple(d.get("provenance", ())),
        )

    try:
        return StateDiff(
            added_tables=tuple(spec(d) for d in diff.get("add_tables", ())),
            removed_tables=tuple(diff.get("remove_tables", ())),
            modified_tables=tuple(spec(d) for d in diff.get("modify_tables", ())),
            query_edits=tuple(
                QueryEdit(e["index"], e.get("old"), e.get("new"))
                for e in diff.get("query_edits", ())
            ),
            from_version=state.version,
            to_version=state.version + 1,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise EnvelopeError(f"malformed diff: {exc}") from exc


# -- prompt construction ---------------------------------------------------------


def render_state(state: State, catalog: dict[str, Relation], sample_rows: int = 5) -> str:
    if not state.tables and not state.queries:
        return "T: (empty)\nQ: []"
    lines = []
    if not state.tables:
        lines.append("T: (empty)")
    else:
        lines.append("T:")
        for t in state.tables:
            cols = ", ".join(f"{c.name}:{c.dtype.value}" for c in t.columns)
            status = "materialized" if t.materialized else "not materialized"
            lines.append(f"  - {t.name}({cols}) [{status}]")
            if t.materialized and t.name in catalog:
                rel = catalog[t.name]
                doc = serialize_table_document(rel, sample_rows)
                for row_line in doc.body.splitlines()[2:]:
                    lines.append(f"      {row_line}")
    if not state.queries:
        lines.append("Q: []")
    else:
        lines.append("Q:")
        for i, q in enumerate(state.queries):
            lines.append(f"  [{i}] {q}")
    return "\n".join(lines)


def build_prompt(ctx: TurnContext) -> str:
    """Deterministic serialization of the turn context. History summaries
    are dropped oldest-first to fit the token ceiling; everything else is
    irreducible and overflowing it raises ContextOverflow."""
    rendering = ctx.state_rendering or render_state(ctx.state, {}, ctx.sample_rows)
    state_section = f"version {ctx.state.version}\n{rendering}"
    evidence_lines = []
    for doc in ctx.retrieved_this_turn:
        first = doc.body.splitlines()[: ctx.sample_rows + 2]
        evidence_lines.append(
            f"--- id={doc.id} kind={doc.kind.value} title={doc.title}\n"
            + "\n".join(first)
        )
    sections_fixed = [
        ("ROLE", ROLE_PREAMBLE),
        ("TOOLS", TOOL_MANIFEST),
        ("STATE", state_section),
        ("CATALOG", "\n".join(ctx.catalog_summary) or "(no materialized relations)"),
        ("EVIDENCE", "\n".join(evidence_lines) or "(none this turn)"),
        ("OBSERVATIONS", "\n".join(ctx.observations) or "(none yet)"),
        ("USER", ctx.user_text),
        ("RESPOND", ENVELOPE_CONTRACT),
    ]

    def assemble(summaries: list[str]) -> str:
        parts = []
        for title, body in sections_fixed:
            if title == "EVIDENCE":
                history = "\n".join(summaries) or "(no prior turns)"
                parts.append(f"HISTORY\n{history}")
            parts.append(f"{title}\n{body}")
        return "\n\n".join(parts)

    summaries = list(ctx.turn_summaries)
    prompt = assemble(summaries)
    while approx_tokens(prompt) > ctx.token_ceiling and summaries:
        summaries.pop(0)  # oldest summary goes first
        prompt = assemble(summaries)
    if approx_tokens(prompt) > ctx.token_ceiling:
        raise ContextOverflow(
            f"irreducible prompt needs {approx_tokens(prompt)} tokens, "
            f"ceiling is {ctx.token_ceiling}"
        )
    return prompt


# -- grounding ----------------------------------------------------------------------


def _evidence_relations(evidence: list[Document]) -> list[Relation]:
    rels = []
    for doc in evidence:
        try:
            rels.append(parse_tabular_evidence(doc))
        except (NotTabular, Exception):
            continue
    return rels


def _collect_query_tables(item) -> list[str]:
    if item is None:
        return []
    if isinstance(item, sql_ast.TableRef):
        return [item.name]
    return _collect_query_tables(item.left) + [item.right.name]


def _constant_filters(expr) -> list[tuple[str, str, object]]:
    """(column, op, literal) comparisons found in a predicate tree."""
    out = []
    if isinstance(expr, sql_ast.BinaryOp):
        if expr.op in ("=", "!=", "<", "<=", ">", ">="):
            left, right = expr.left, expr.right
            if isinstance(left, sql_ast.ColumnRef) and isinstance(right, sql_ast.Literal):
                out.append((left.name, expr.op, right.value))
            elif isinstance(right, sql_ast.ColumnRef) and isinstance(left, sql_ast.Literal):
                flipped = {"<": ">", "<=": ">=", ">": "<", ">=": "<="}
                out.append((right.name, flipped.get(expr.op, expr.op), left.value))
        else:
            out.extend(_constant_filters(expr.left))
            out.extend(_constant_filters(expr.right))
    elif isinstance(expr, sql_ast.UnaryOp):
        out.extend(_constant_filters(expr.operand))
    return out


def _filter_satisfied(op: str, literal, values: list) -> bool:
    for v in values:
        if v is None:
            continue
        try:
            if op == "=" and v == literal:
                return True
            if op == "!=" and v != literal:
                return True
            if op == "<" and v < literal:
                return True
            if op == "<=" and v <= literal:
                return True
            if op == ">" and v > literal:
                return True
            if op == ">=" and v >= literal:
                return True
        except TypeError:
            continue
    return False


def ground_check(
    proposed: StateDiff,
    evidence: list[Document],
    catalog: dict[str, Relation],
) -> list[GroundingGap]:
    """Check every table/column/constant-filter the diff introduces against
    evidence and catalog. Unwitnessed names suggest searching further;
    witnessed columns whose filter no observed value can satisfy suggest
    asking the user."""
    rels = _evidence_relations(evidence)
    witnessed: set[str] = set()
    values: dict[str, list] = {}
    for rel in list(catalog.values()) + rels:
        for i, col in enumerate(rel.columns):
            witnessed.add(col.name.lower())
            values.setdefault(col.name.lower(), []).extend(
                row[i] for row in rel.rows
            )

    gaps: list[GroundingGap] = []
    seen: set[tuple[str, str]] = set()

    def add(kind: str, name: str, suggestion: str) -> None:
        if (kind, name) not in seen:
            seen.add((kind, name))
            gaps.append(GroundingGap(kind, name, suggestion))

    for spec in list(proposed.added_tables) + list(proposed.modified_tables):
        for col in spec.columns:
            if col.name.lower() not in witnessed:
                add("column", col.name, "search_more")

    table_names = {t.name for t in proposed.added_tables} | {
        t.name for t in proposed.modified_tables
    } | set(catalog)

    for edit in proposed.query_edits:
        if edit.new is None:
            continue
        try:
            stmt = parse(edit.new)
        except SqlSyntaxError as exc:
            add("query", f"[{edit.index}] {exc}", "ask_user")
            continue
        query = stmt.query if isinstance(stmt, sql_ast.CreateTableAs) else stmt
        for sel in query.selects:
            for tname in _collect_query_tables(sel.from_clause):
                if tname not in table_names:
                    add("table", tname, "search_more")
            if sel.where is not None:
                for col, op, literal in _constant_filters(sel.where):
                    if col.lower() not in witnessed:
                        add("column", col, "search_more")
                    elif not _filter_satisfied(op, literal, values.get(col.lower(), [])):
                        add("filter", f"{col} {op} {literal!r}", "ask_user")
    return gaps


# -- the conductor ---------------------------------------------------------------------


APOLOGY = (
    "I hit an internal error while planning this turn and could not make "
    "progress. The state (T, Q) is unchanged; please try again or rephrase."
)


class Conductor:
    def __init__(
        self,
        backend,
        store,
        config: Optional[ConductorConfig] = None,
        event_sink: Optional[Callable[[dict], None]] = None,
    ):
        self.backend = backend
        self.store = store
        self.config = config or ConductorConfig()
        self.materializer = Materializer(
            backend,
            repair_rounds=self.config.repair_rounds,
            sample_rows=self.config.sample_rows,
        )
        self.event_sink = event_sink

    # -- helpers ------------------------------------------------------------

    def _emit(self, event: dict) -> None:
        if self.event_sink:
            self.event_sink(event)

    def _catalog_summary(self, session: Session) -> list[str]:
        out = []
        for name in sorted(session.catalog):
            rel = session.catalog[name]
            cols = ", ".join(f"{c.name}:{c.dtype.value}" for c in rel.columns)
            out.append(f"- {name}({cols}) rows={len(rel.rows)}")
        return out

    def _complete_envelope(
        self, prompt: str, usage_box: list[Usage], sink: list[str]
    ) -> tuple[dict, str, list[str]]:
        """One envelope with bounded reprompting on validation errors.
        Returns (envelope, accepted raw text, rejected raw texts). Every
        completion consumed is also appended to sink so a failed turn can
        record the full call sequence for replay."""
        attempts = self.config.envelope_retries + 1
        last_error = ""
        current = prompt
        rejected: list[str] = []
        for _ in range(attempts):
            try:
                text, usage = self.backend.complete(
                    CompletionRequest(role="conductor", prompt=current)
                )
            except BackendError as exc:
                raise TurnFailed(str(exc)) from exc
            usage_box.append(usage)
            sink.append(text)
            try:
                return parse_envelope(text), text, rejected
            except EnvelopeError as exc:
                rejected.append(text)
                last_error = str(exc)
                current = (
                    prompt
                    + f"\n\nYour previous response was rejected: {last_error}\n"
                    + "Respond with exactly one valid JSON action envelope."
                )
        raise TurnFailed(f"envelope invalid after {attempts} attempts: {last_error}")

    # -- tools -----------------------------------------------------------------

    def dispatch_tool(
        self, session: Session, tool: str, args: dict, ctx: TurnContext
    ) -> dict:
        """Run one tool call; errors become structured observations, never
        exceptions (ReAct observation semantics)."""
        try:
            if tool == "ir_search":
                return self._tool_ir_search(session, args, ctx)
            if tool == "materialize":
                return self._tool_materialize(session, args, ctx)
            return self._tool_sql_execute(session, args, ctx)
        except SeekerError as exc:
            return {"tool": tool, "ok": False, "error": str(exc), "summary": f"{tool} failed: {exc}"}

    def _tool_ir_search(self, session: Session, args: dict, ctx: TurnContext) -> dict:
        kinds = None
        if "kinds" in args:
            kinds = {DocKind(k) for k in args["kinds"]}
        k = args.get("k", self.config.top_k)
        ranked = self.store.search(args["query"], k=k, kinds=kinds)
        docs = [doc for doc, _ in ranked]
        session.remember_documents(docs)
        ctx.retrieved_this_turn.extend(docs)
        digest = [
            f"{d.id} [{d.kind.value}] {d.title or d.body.splitlines()[0][:60]}"
            for d in docs
        ]
        summary = (
            f"ir_search {args['query']!r} returned {len(docs)} document(s):\n"
            + "\n".join(digest)
            if docs
            else f"ir_search {args['query']!r} returned no documents"
        )
        return {
            "tool": "ir_search",
            "ok": True,
            "summary": summary,
            "documents": [d.to_json_dict() for d in docs],
        }

    def _tool_materialize(self, session: Session, args: dict, ctx: TurnContext) -> dict:
        name = args["table"]
        if not session.state.has_table(name):
            return {
                "tool": "materialize",
                "ok": False,
                "error": f"table {name!r} is not in T",
                "summary": f"materialize failed: table {name!r} is not in T",
            }
        target = session.state.table(name)
        evidence = tuple(session.retrieved.values())
        req = MaterializationRequest(
            target=target,
            note=args["note"],
            evidence=evidence,
            queries_context=session.state.queries,
        )
        try:
            relation, attempts = self.materializer.materialize(req, session.catalog)
        except EvidenceGap as exc:
            return {
                "tool": "materialize",
                "ok": False,
                "error": str(exc),
                "summary": f"materialize blocked by evidence gap: {exc}",
            }
        except SeekerError as exc:
            session.persist_plan(getattr(exc, "attempts", []) or [{"error": str(exc)}])
            return {
                "tool": "materialize",
                "ok": False,
                "error": str(exc),
                "summary": f"materialize failed after repair rounds: {exc}",
            }
        session.persist_plan(attempts)
        provenance = tuple(
            step["document_id"]
            for step in attempts[-1]["plan"]["steps"]
            if step["op"] == "load"
        )
        updated = TableSpec(
            name=target.name,
            columns=target.columns,
            materialized=True,
            provenance=provenance or target.provenance,
        )
        internal = StateDiff(
            modified_tables=(updated,),
            from_version=session.state.version,
            to_version=session.state.version + 1,
        )
        doc = serialize_table_document(relation, self.config.sample_rows)
        return {
            "tool": "materialize",
            "ok": True,
            "summary": (
                f"materialized {name}: {len(relation.rows)} row(s)\n{doc.body}"
            ),
            "rows": len(relation.rows),
            "internal_diff": internal,
        }

    def _tool_sql_execute(self, session: Session, args: dict, ctx: TurnContext) -> dict:
        queries = list(session.state.queries)
        indexes = args.get("queries")
        if indexes is None:
            indexes = list(range(len(queries)))
        bad = [i for i in indexes if not 0 <= i < len(queries)]
        if bad:
            return {
                "tool": "sql_execute",
                "ok": False,
                "error": f"query index out of range: {bad}",
                "summary": f"sql_execute failed: query index out of range: {bad}",
            }
        if not indexes:
            return {
                "tool": "sql_execute",
                "ok": False,
                "error": "Q is empty",
                "summary": "sql_execute failed: Q is empty",
            }

        # dependency rule: every referenced table in T must be materialized
        scratch = dict(session.catalog)
        produced: set[str] = set()
        for i in indexes:
            try:
                stmt = parse(queries[i])
            except SqlSyntaxError as exc:
                return {
                    "tool": "sql_execute",
                    "ok": False,
                    "error": f"query [{i}] does not parse: {exc}",
                    "summary": f"sql_execute failed: query [{i}] does not parse: {exc}",
                }
            query = stmt.query if isinstance(stmt, sql_ast.CreateTableAs) else stmt
            for sel in query.selects:
                for tname in _collect_query_tables(sel.from_clause):
                    if session.state.has_table(tname):
                        if not session.state.table(tname).materialized:
                            return {
                                "tool": "sql_execute",
                                "ok": False,
                                "error": f"table {tname!r} not materialized",
                                "summary": (
                                    f"sql_execute refused: table {tname!r} must be "
                                    "materialized before executing Q"
                                ),
                            }
                    elif tname not in scratch and tname not in produced:
                        return {
                            "tool": "sql_execute",
                            "ok": False,
                            "error": f"unknown table {tname!r}",
                            "summary": f"sql_execute refused: unknown table {tname!r}",
                        }
            if isinstance(stmt, sql_ast.CreateTableAs):
                produced.add(stmt.table_name)

        summaries = []
        results = []
        for i in indexes:
            try:
                stmt = parse(queries[i])
                plan = analyze(stmt, catalog_of(scratch))
                rel = execute(plan, scratch, result_name=f"q{i}_result")
                if plan.create_table:
                    scratch[plan.create_table] = rel
                doc = serialize_table_document(rel, self.config.sample_rows)
                summaries.append(
                    f"query [{i}] -> {len(rel.rows)} row(s)\n{doc.body}"
                )
                results.append(
                    {"index": i, "rows": len(rel.rows), "table_doc": doc.body}
                )
            except SeekerError as exc:
                summaries.append(f"query [{i}] failed: {exc}")
                return {
                    "tool": "sql_execute",
                    "ok": False,
                    "error": str(exc),
                    "summary": "\n".join(summaries),
                    "results": results,
                }
        # CREATE TABLE AS products persist into the session catalog
        for name, rel in scratch.items():
            if name not in session.catalog:
                session.catalog[name] = rel
        return {
            "tool": "sql_execute",
            "ok": True,
            "summary": "\n".join(summaries),
            "results": results,
        }

    # -- the turn loop ------------------------------------------------------------

    def run_turn(self, session: Session, user_text: str) -> TurnResult:
        start_state = session.state
        start_catalog = dict(session.catalog)
        start_history_len = len(session.state_history)
        turn_no = len(session.transcript.turns) + 1
        session.append_log(
            {
                "type": "turn_start",
                "turn": turn_no,
                "user_text": user_text,
                "state_version": session.state.version,
            }
        )
        try:
            result = self._run_turn_inner(session, user_text, turn_no)
        except TurnFailed as failure:
            session.state = start_state
            del session.state_history[start_history_len:]
            session.catalog.clear()
            session.catalog.update(start_catalog)
            action = Action(
                kind=ActionKind.USER_MESSAGE, index_in_turn=0, text=APOLOGY
            )
            event = TurnEvent(
                action=action,
                rejected_completions=failure.consumed,
                state_version_after=session.state.version,
                state_hash_after=state_hash(session.state),
            )
            self._emit({"type": "action", "kind": "user_message", "summary": APOLOGY})
            result = TurnResult(
                final_message=APOLOGY,
                state=session.state,
                actions=[action],
                forced=False,
                failed=True,
                usage=Usage(),
                events=[event],
            )
        # action events are buffered during the turn and written only here,
        # so the on-disk log always reflects the durable state chain even
        # when a failed turn rolled its changes back
        for event in result.events:
            session.append_log(event.to_json_dict() | {"turn": turn_no})
        turn = Turn(
            user_text=user_text,
            actions=result.actions,
            final_user_message=result.final_message,
            state_version_after=result.state.version,
            input_tokens=result.usage.input_tokens,
            output_tokens=result.usage.output_tokens,
            forced=result.forced,
        )
        session.transcript.append_turn(turn, self.config.action_budget)
        session.turn_summaries.append(self._summarize_turn(turn_no, turn))
        session.append_log(
            {
                "type": "turn_end",
                "turn": turn_no,
                "final_message": result.final_message,
                "forced": result.forced,
                "failed": result.failed,
                "state_version": result.state.version,
                "usage": {
                    "input_tokens": result.usage.input_tokens,
                    "output_tokens": result.usage.output_tokens,
                },
            }
        )
        self._emit({"type": "turn_end", "turn": turn_no})
        return result

    def _summarize_turn(self, turn_no: int, turn: Turn) -> str:
        kinds = ",".join(a.kind.value for a in turn.actions)
        user = turn.user_text[:80].replace("\n", " ")
        reply = turn.final_user_message[:80].replace("\n", " ")
        return f"turn {turn_no}: user={user!r} actions=[{kinds}] reply={reply!r}"

    def _run_turn_inner(
        self, session: Session, user_text: str, turn_no: int
    ) -> TurnResult:
        ctx = TurnContext(
            state=session.state,
            user_text=user_text,
            catalog_summary=self._catalog_summary(session),
            turn_summaries=list(session.turn_summaries),
            token_ceiling=self.config.context_token_ceiling,
            sample_rows=self.config.sample_rows,
        )
        actions: list[Action] = []
        events: list[TurnEvent] = []
        usage_box: list[Usage] = []
        all_raws: list[str] = []
        final_message: Optional[str] = None
        forced = False

        for step in range(self.config.action_budget):
            ctx.state = session.state
            ctx.state_rendering = render_state(
                session.state, session.catalog, self.config.sample_rows
            )
            ctx.catalog_summary = self._catalog_summary(session)
            prompt = build_prompt(ctx)
            try:
                envelope, raw, rejected = self._complete_envelope(
                    prompt, usage_box, all_raws
                )
            except TurnFailed as failure:
                raise TurnFailed(str(failure), consumed=all_raws) from failure

            kind = envelope["action"]
            internal_diff: Optional[StateDiff] = None
            observation: Optional[dict] = None

            if kind == "reason":
                action = Action(
                    kind=ActionKind.REASON, index_in_turn=step, text=envelope["text"]
                )
                ctx.observations.append(f"(reasoning) {envelope['text']}")
            elif kind == "user_message":
                action = Action(
                    kind=ActionKind.USER_MESSAGE,
                    index_in_turn=step,
                    text=envelope["text"],
                )
                final_message = envelope["text"]
            elif kind == "tool_call":
                action = Action(
                    kind=ActionKind.TOOL_CALL,
                    index_in_turn=step,
                    tool=envelope["tool"],
                    arguments=envelope["arguments"],
                )
                observation = self.dispatch_tool(
                    session, envelope["tool"], envelope["arguments"], ctx
                )
                if observation.get("internal_diff") is not None:
                    internal_diff = observation.pop("internal_diff")
                    session.advance_state(internal_diff)
                ctx.observations.append(observation["summary"])
            else:
                try:
                    diff = diff_from_envelope(envelope["diff"], session.state)
                except EnvelopeError as exc:
                    action = Action(
                        kind=ActionKind.REASON,
                        index_in_turn=step,
                        text=f"(rejected state_update: {exc})",
                    )
                    ctx.observations.append(f"state_update rejected: {exc}")
                    events.append(
                        self._record(session, turn_no, action, raw, None, None, rejected)
                    )
                    actions.append(action)
                    continue
                if self.config.grounding:
                    gaps = ground_check(
                        diff, list(session.retrieved.values()), session.catalog
                    )
                    for gap in gaps:
                        ctx.observations.append(gap.render())
                try:
                    session.advance_state(diff)
                except SeekerError as exc:
                    action = Action(
                        kind=ActionKind.REASON,
                        index_in_turn=step,
                        text=f"(state_update failed: {exc})",
                    )
                    ctx.observations.append(f"state_update failed: {exc}")
                    events.append(
                        self._record(session, turn_no, action, raw, None, None, rejected)
                    )
                    actions.append(action)
                    continue
                action = Action(
                    kind=ActionKind.STATE_UPDATE, index_in_turn=step, diff=diff
                )
                ctx.observations.append(
                    f"state updated to version {session.state.version}"
                )

            events.append(
                self._record(
                    session, turn_no, action, raw, observation, internal_diff, rejected
                )
            )
            actions.append(action)
            if final_message is not None:
                break

        if final_message is None:
            final_message, forced_raw = self._forced_summary(
                session, actions, usage_box
            )
            forced = True
            action = Action(
                kind=ActionKind.USER_MESSAGE,
                index_in_turn=len(actions),
                text=final_message,
                forced=True,
            )
            events.append(
                self._record(session, turn_no, action, forced_raw, None, None)
            )
            actions.append(action)

        total = Usage()
        for u in usage_box:
            total = total + u
        return TurnResult(
            final_message=final_message,
            state=session.state,
            actions=actions,
            forced=forced,
            failed=False,
            usage=total,
            events=events,
        )

    def _record(
        self,
        session: Session,
        turn_no: int,
        action: Action,
        raw: Optional[str],
        observation: Optional[dict],
        internal_diff: Optional[StateDiff],
        rejected: Optional[list[str]] = None,
    ) -> TurnEvent:
        event = TurnEvent(
            action=action,
            raw_completion=raw,
            rejected_completions=list(rejected or []),
            observation=observation,
            state_version_after=session.state.version,
            state_hash_after=state_hash(session.state),
            internal_diff=internal_diff,
        )
        self._emit(
            {
                "type": "action",
                "kind": action.kind.value,
                "index_in_turn": action.index_in_turn,
                "summary": _action_summary(action, observation),
                "state_version": session.state.version,
            }
        )
        return event

    def _forced_summary(
        self, session: Session, actions: list[Action], usage_box: list[Usage]
    ) -> tuple[str, Optional[str]]:
        """Returns (message, raw completion or None when the deterministic
        fallback produced it)."""
        digest = "\n".join(
            f"- {a.kind.value}" + (f" ({a.tool})" if a.tool else "")
            for a in actions
        ) or "(none)"
        prompt = FORCED_SUMMARY_PROMPT.format(
            state_section=render_state(session.state, session.catalog, self.config.sample_rows),
            actions_digest=digest,
        )
        try:
            text, usage = self.backend.complete(
                CompletionRequest(role="conductor", prompt=prompt)
            )
            usage_box.append(usage)
            return text.strip(), text
        except BackendError:
            # deterministic fallback keeps the turn-closure invariant
            n_tables = len(session.state.tables)
            n_queries = len(session.state.queries)
            return (
                f"I used this turn's action budget. Current state: {n_tables} "
                f"table(s) in T and {n_queries} query(ies) in Q at version "
                f"{session.state.version}. Let me know how you would like to proceed.",
                None,
            )


def _action_summary(action: Action, observation: Optional[dict]) -> str:
    if action.kind is ActionKind.REASON:
        return (action.text or "")[:200]
    if action.kind is ActionKind.USER_MESSAGE:
        return (action.text or "")[:200]
    if action.kind is ActionKind.TOOL_CALL:
        base = f"{action.tool} {json.dumps(action.arguments or {}, sort_keys=True)}"
        if observation is not None:
            status = "ok" if observation.get("ok") else "error"
            return f"{base} -> {status}"
        return base
    diff = action.diff
    bits = []
    if diff is not None:
        if diff.added_tables:
            bits.append(f"+{len(diff.added_tables)} table(s)")
        if diff.removed_tables:
            bits.append(f"-{len(diff.removed_tables)} table(s)")
        if diff.modified_tables:
            bits.append(f"~{len(diff.modified_tables)} table(s)")
        if diff.query_edits:
            bits.append(f"{len(diff.query_edits)} query edit(s)")
    return "state_update " + ", ".join(bits)
