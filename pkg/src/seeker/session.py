"""Session state and on-disk persistence.

A session owns the evolving (T,Q) state, the relation store backing it,
the retrieved-evidence pool, and the transcript. Turns are appended to
sessions/<id>/transcript.jsonl as they complete (one action per line plus
turn boundary records); materialization plans go to sessions/<id>/plans/.
Replaying that log reconstructs every state version exactly.
"""

from __future__ import annotations

import hashlib
import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from seeker.model import (
    Action,
    Document,
    Relation,
    SessionTranscript,
    State,
    StateDiff,
    apply_diff,
)


def state_hash(state: State) -> str:
    """Stable content hash of a state (tables are already name-sorted)."""
    payload = {
        "tables": [t.to_json_dict() for t in state.tables],
        "queries": list(state.queries),
        "version": state.version,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class TurnEvent:
    """One persisted action record: the model-level Action plus everything
    replay needs to re-drive and verify it (raw completion texts, including
    rejected envelope attempts, tool observations, and the state hash)."""

    action: Action
    raw_completion: Optional[str] = None
    rejected_completions: list[str] = field(default_factory=list)
    observation: Optional[dict] = None
    state_version_after: int = 0
    state_hash_after: str = ""
    internal_diff: Optional[StateDiff] = None

    def to_json_dict(self) -> dict:
        out = {"type": "action", **self.action.to_json_dict()}
        out["raw_completion"] = self.raw_completion
        if self.rejected_completions:
            out["rejected_completions"] = list(self.rejected_completions)
        if self.observation is not None:
            out["observation"] = self.observation
        if self.internal_diff is not None:
            out["internal_diff"] = self.internal_diff.to_json_dict()
        out["state_version_after"] = self.state_version_after
        out["state_hash_after"] = self.state_hash_after
        return out

    @classmethod
    def from_json_dict(cls, d: dict) -> "TurnEvent":
        action_fields = {
            k: d[k]
            for k in ("kind", "index_in_turn", "text", "tool", "arguments", "diff", "forced")
            if k in d
        }
        return cls(
            action=Action.from_json_dict(action_fields),
            raw_completion=d.get("raw_completion"),
            rejected_completions=list(d.get("rejected_completions", ())),
            observation=d.get("observation"),
            state_version_after=d.get("state_version_after", 0),
            state_hash_after=d.get("state_hash_after", ""),
            internal_diff=StateDiff.from_json_dict(d["internal_diff"])
            if d.get("internal_diff")
            else None,
        )


class Session:
    def __init__(
        self,
        session_id: Optional[str] = None,
        base_catalog: Optional[dict[str, Relation]] = None,
        directory: Optional[str | Path] = None,
    ):
        self.id = session_id or uuid.uuid4().hex[:12]
        self.state = State()
        self.state_history: list[State] = [self.state]
        self.catalog: dict[str, Relation] = dict(base_catalog or {})
        self.transcript = SessionTranscript(self.id)
        self.retrieved: dict[str, Document] = {}
        self.turn_summaries: list[str] = []
        self.status = "idle"
        self.lock = threading.Lock()
        self.directory = Path(directory) if directory else None
        self._plan_counter = 0
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)

    # -- state ------------------------------------------------------------

    def advance_state(self, diff: StateDiff) -> State:
        self.state = apply_diff(self.state, diff)
        self.state_history.append(self.state)
        return self.state

    def state_at(self, version: int) -> State:
        if not 0 <= version < len(self.state_history):
            raise IndexError(f"no state version {version}")
        return self.state_history[version]

    def remember_documents(self, docs: list[Document]) -> None:
        for d in docs:
            self.retrieved[d.id] = d

    # -- persistence ----------------------------------------------------------

    def _transcript_path(self) -> Optional[Path]:
        return self.directory / "transcript.jsonl" if self.directory else None

    def append_log(self, record: dict) -> None:
        path = self._transcript_path()
        if path is None:
            return
        with open(path, "a") as f:
            f.write(json.dumps(record, sort_keys=True) + "\n")

    def persist_plan(self, attempts: list[dict]) -> Optional[Path]:
        if self.directory is None:
            return None
        plans_dir = self.directory / "plans"
        plans_dir.mkdir(exist_ok=True)
        self._plan_counter += 1
        path = plans_dir / f"{self._plan_counter}.json"
        path.write_text(json.dumps(attempts, indent=2, sort_keys=True))
        return path

    def write_meta(self, config_dict: dict) -> None:
        if self.directory is None:
            return
        (self.directory / "meta.json").write_text(
            json.dumps({"session_id": self.id, "config": config_dict}, indent=2)
        )


def read_transcript_log(directory: str | Path) -> list[dict]:
    path = Path(directory) / "transcript.jsonl"
    if not path.exists():
        raise FileNotFoundError(f"no transcript.jsonl under {directory}")
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def reconstruct_states(records: list[dict]) -> list[State]:
    """Re-apply every recorded diff in order; returns all state versions.
    Raises if any recorded hash disagrees with the recomputed state."""
    state = State()
    states = [state]
    for rec in records:
        if rec.get("type") != "action":
            continue
        for key in ("diff", "internal_diff"):
            if rec.get(key):
                state = apply_diff(state, StateDiff.from_json_dict(rec[key]))
                states.append(state)
        expect = rec.get("state_hash_after", "")
        if expect and state_hash(state) != expect:
            raise ValueError(
                f"state hash mismatch after action index {rec.get('index_in_turn')} "
                f"(version {state.version})"
            )
    return states
