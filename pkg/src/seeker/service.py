"""HTTP service: sessions, turns, state views, live action events, and
corpus management. The substrate both the web UI and the eval harness
drive.

Event streaming is server-sent events: subscribers get one event per
completed action, a turn-end event closes the stream, and idle streams
emit heartbeats. Turn submission and streaming are safe to use from
separate connections; per-session turn mutual exclusion returns 409.
"""

from __future__ import annotations

import json
import queue
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, StreamingResponse

from seeker.conductor import Conductor, ConductorConfig, render_state
from seeker.ir import IndexStore
from seeker.model import Relation, SeekerError, State, diff_states, serialize_table_document
from seeker.session import Session
from seeker.sql import CsvError, parse_csv


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def error_body(code: str, message: str, detail: Optional[dict] = None) -> dict:
    return {"code": code, "message": message, "detail": detail or {}}


class _EventBus:
    """Per-session fan-out with a bounded replay buffer. Every subscriber
    receives the same id-stamped sequence; subscribing with a last-seen id
    replays everything newer first, so dropped SSE connections can resume."""

    HISTORY_LIMIT = 1000

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._subscribers: list[queue.Queue] = []
        self._history: list[tuple[int, dict]] = []
        self._next_id = 1

    def subscribe(self, last_event_id: Optional[int] = None) -> queue.Queue:
        """last_event_id=None means live-only (fresh subscriber); an id
        replays everything newer, for reconnect resume."""
        q: queue.Queue = queue.Queue()
        with self._lock:
            if last_event_id is not None:
                for event_id, event in self._history:
                    if event_id > last_event_id:
                        q.put((event_id, event))
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def publish(self, event: dict) -> None:
        with self._lock:
            event_id = self._next_id
            self._next_id += 1
            self._history.append((event_id, event))
            if len(self._history) > self.HISTORY_LIMIT:
                del self._history[: -self.HISTORY_LIMIT]
            for q in self._subscribers:
                q.put((event_id, event))


@dataclass
class ManagedSession:
    session: Session
    bus: _EventBus = field(default_factory=_EventBus)
    created_at: str = field(default_factory=_now)
    config: ConductorConfig = field(default_factory=ConductorConfig)
    closed: bool = False

    def record(self) -> dict:
        return {
            "id": self.session.id,
            "created_at": self.created_at,
            "config": self.config.to_json_dict(),
            "state_version": self.session.state.version,
            "status": "closed" if self.closed else self.session.status,
        }


@dataclass
class ServiceConfig:
    sample_rows: int = 5
    heartbeat_seconds: float = 0.25
    sessions_dir: Optional[Path] = None


def state_changes(a: State, b: State) -> dict:
    """Version-gap-tolerant change summary between two states (the net
    effect of a whole turn, which may span several diffs)."""
    bridged = State(tables=b.tables, queries=b.queries, version=a.version + 1)
    diff = diff_states(a, bridged)
    return {
        "from_version": a.version,
        "to_version": b.version,
        "added_tables": [t.to_json_dict() for t in diff.added_tables],
        "removed_tables": list(diff.removed_tables),
        "modified_tables": [t.to_json_dict() for t in diff.modified_tables],
        "query_edits": [
            {"index": e.index, "old": e.old, "new": e.new} for e in diff.query_edits
        ],
    }


def create_app(
    store: IndexStore,
    backend,
    base_catalog: Optional[dict[str, Relation]] = None,
    config: Optional[ConductorConfig] = None,
    service_config: Optional[ServiceConfig] = None,
) -> FastAPI:
    app = FastAPI(title="seeker", docs_url=None, redoc_url=None)
    svc = service_config or ServiceConfig()
    default_config = config or ConductorConfig()
    sessions: dict[str, ManagedSession] = {}
    sessions_lock = threading.Lock()
    catalog = dict(base_catalog or {})

    app.state.store = store
    app.state.sessions = sessions

    def get_managed(session_id: str) -> Optional[ManagedSession]:
        with sessions_lock:
            return sessions.get(session_id)

    @app.exception_handler(SeekerError)
    async def seeker_error_handler(request: Request, exc: SeekerError):
        return JSONResponse(
            status_code=500, content=error_body("internal", str(exc))
        )

    # -- sessions ----------------------------------------------------------

    @app.post("/sessions")
    async def create_session(payload: Optional[dict] = None):
        overrides = (payload or {}).get("config", {})
        try:
            known = {
                k: v
                for k, v in overrides.items()
                if k in default_config.to_json_dict()
            }
            cfg = ConductorConfig(**{**default_config.to_json_dict(), **known})
        except (TypeError, ValueError) as exc:
            return JSONResponse(
                status_code=400, content=error_body("bad_config", str(exc))
            )
        session_id = uuid.uuid4().hex[:12]
        directory = svc.sessions_dir / session_id if svc.sessions_dir else None
        session = Session(session_id, base_catalog=catalog, directory=directory)
        managed = ManagedSession(session=session, config=cfg)
        session.write_meta(cfg.to_json_dict())
        with sessions_lock:
            sessions[session_id] = managed
        return managed.record()

    @app.get("/sessions/{session_id}")
    async def get_session(session_id: str):
        managed = get_managed(session_id)
        if managed is None:
            return JSONResponse(
                status_code=404, content=error_body("unknown_session", session_id)
            )
        return managed.record()

    @app.delete("/sessions/{session_id}")
    async def close_session(session_id: str):
        managed = get_managed(session_id)
        if managed is None:
            return JSONResponse(
                status_code=404, content=error_body("unknown_session", session_id)
            )
        managed.closed = True
        return managed.record()

    @app.post("/sessions/{session_id}/messages")
    async def post_message(session_id: str, payload: dict):
        managed = get_managed(session_id)
        if managed is None:
            return JSONResponse(
                status_code=404, content=error_body("unknown_session", session_id)
            )
        if managed.closed:
            return JSONResponse(
                status_code=410, content=error_body("session_closed", session_id)
            )
        text = payload.get("text", "")
        if not isinstance(text, str) or not text.strip():
            return JSONResponse(
                status_code=400, content=error_body("empty_message", "text required")
            )
        session = managed.session
        with session.lock:
            if session.status == "busy":
                return JSONResponse(
                    status_code=409, content=error_body("busy", "turn in flight")
                )
            session.status = "busy"
        try:
            before = session.state
            conductor = Conductor(
                backend, store, managed.config, event_sink=managed.bus.publish
            )
            import anyio

            result = await anyio.to_thread.run_sync(
                conductor.run_turn, session, text
            )
            return {
                "final_message": result.final_message,
                "forced": result.forced,
                "failed": result.failed,
                "state_version": result.state.version,
                "state_diff": state_changes(before, result.state),
                "actions": [a.to_json_dict() for a in result.actions],
                "usage": {
                    "input_tokens": result.usage.input_tokens,
                    "output_tokens": result.usage.output_tokens,
                },
            }
        finally:
            session.status = "idle"

    @app.get("/sessions/{session_id}/state")
    async def get_state(session_id: str, version: Optional[int] = Query(default=None)):
        managed = get_managed(session_id)
        if managed is None:
            return JSONResponse(
                status_code=404, content=error_body("unknown_session", session_id)
            )
        session = managed.session
        v = session.state.version if version is None else version
        try:
            state = session.state_at(v)
        except IndexError:
            return JSONResponse(
                status_code=404,
                content=error_body("unknown_version", f"version {v} not found"),
            )
        tables = []
        for t in state.tables:
            entry = t.to_json_dict()
            if t.materialized and t.name in session.catalog:
                rel = session.catalog[t.name]
                entry["row_count"] = len(rel.rows)
                entry["sample_rows"] = [
                    ["∅" if v_ is None else v_ for v_ in row]
                    for row in rel.rows[: svc.sample_rows]
                ]
            tables.append(entry)
        return {
            "version": state.version,
            "current_version": session.state.version,
            "tables": tables,
            "queries": list(state.queries),
            "rendering": render_state(state, session.catalog, svc.sample_rows),
        }

    # -- events -----------------------------------------------------------------

    @app.get("/sessions/{session_id}/events")
    async def stream_events(
        session_id: str,
        request: Request,
        last_event_id: Optional[int] = Query(default=None),
    ):
        managed = get_managed(session_id)
        if managed is None:
            return JSONResponse(
                status_code=404, content=error_body("unknown_session", session_id)
            )
        header_id = request.headers.get("last-event-id")
        if header_id and header_id.isdigit():
            last_event_id = max(last_event_id or 0, int(header_id))
        bus = managed.bus
        q = bus.subscribe(last_event_id)

        def sse(event: dict, event_id: int) -> str:
            kind = event.get("type", "message")
            data = json.dumps(event, sort_keys=True)
            return f"id: {event_id}\nevent: {kind}\ndata: {data}\n\n"

        async def generator():
            import anyio

            try:
                while True:
                    if await request.is_disconnected():
                        break
                    try:
                        event_id, event = await anyio.to_thread.run_sync(
                            lambda: q.get(timeout=svc.heartbeat_seconds)
                        )
                    except Exception:
                        yield "event: heartbeat\ndata: {}\n\n"
                        continue
                    yield sse(event, event_id)
                    if event.get("type") == "turn_end":
                        break
            finally:
                bus.unsubscribe(q)

        return StreamingResponse(generator(), media_type="text/event-stream")

    # -- corpus -----------------------------------------------------------------

    @app.post("/corpus/tables")
    async def upload_table(request: Request, name: str = Query(...)):
        raw = await request.body()
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError:
            return JSONResponse(
                status_code=400,
                content=error_body("bad_encoding", "body must be UTF-8 CSV"),
            )
        try:
            rel = parse_csv(text, name)
        except CsvError as exc:
            return JSONResponse(
                status_code=400,
                content=error_body("csv_error", str(exc), {"location": exc.line}),
            )
        doc = serialize_table_document(rel, svc.sample_rows)
        if doc.id in store:
            return JSONResponse(
                status_code=409,
                content=error_body("duplicate", f"table {rel.name!r} already ingested"),
            )
        catalog[rel.name] = rel
        store.index_document(doc)
        return {
            "document_id": doc.id,
            "table": rel.name,
            "rows": len(rel.rows),
            "columns": rel.column_names(),
        }

    @app.get("/corpus/search")
    async def corpus_search(q: str = Query(...), k: int = Query(default=10)):
        ranked = store.search(q, k=k)
        return {
            "results": [
                {**doc.to_json_dict(), "score": score} for doc, score in ranked
            ]
        }

    @app.get("/healthz")
    async def healthz():
        return {"ok": True, "documents": len(store)}

    return app
