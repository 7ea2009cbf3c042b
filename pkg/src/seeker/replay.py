"""Replay audit: re-drive a persisted session and verify it reproduces
the recorded actions, diffs, and state hashes exactly.

The recorded raw completions become the scripted fixture list; tool calls
are answered from the recorded observations (after checking the call
matches the recording), so a replay needs neither the corpus nor any
backend. The first divergent action is reported with its turn, index, and
reason.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from seeker.backend import ScriptedBackend
from seeker.conductor import Conductor, ConductorConfig, TurnContext
from seeker.model import Document, SeekerError
from seeker.session import Session, TurnEvent, read_transcript_log, reconstruct_states


class ReplayError(SeekerError):
    pass


@dataclass
class Divergence:
    turn: int
    index_in_turn: int
    reason: str

    def render(self) -> str:
        return (
            f"turn {self.turn}, action {self.index_in_turn}: {self.reason}"
        )


@dataclass
class ReplayResult:
    ok: bool
    turns: int
    actions: int
    divergence: Optional[Divergence] = None


@dataclass
class _RecordedTurn:
    turn: int
    user_text: str
    events: list[TurnEvent] = field(default_factory=list)
    final_message: str = ""
    forced: bool = False
    state_version: int = 0


def _group_turns(records: list[dict]) -> list[_RecordedTurn]:
    turns: list[_RecordedTurn] = []
    current: Optional[_RecordedTurn] = None
    for rec in records:
        kind = rec.get("type")
        if kind == "turn_start":
            current = _RecordedTurn(turn=rec["turn"], user_text=rec["user_text"])
            turns.append(current)
        elif kind == "action":
            if current is None:
                raise ReplayError("action record before any turn_start")
            current.events.append(TurnEvent.from_json_dict(rec))
        elif kind == "turn_end":
            if current is None:
                raise ReplayError("turn_end before any turn_start")
            current.final_message = rec.get("final_message", "")
            current.forced = rec.get("forced", False)
            current.state_version = rec.get("state_version", 0)
            current = None
    return turns


class _PlaybackConductor(Conductor):
    """Conductor whose tools answer from the recorded observations."""

    def __init__(self, backend, config: ConductorConfig):
        super().__init__(backend, store=None, config=config)
        self.tool_queue: list[TurnEvent] = []
        self.mismatch: Optional[str] = None

    def dispatch_tool(
        self, session: Session, tool: str, args: dict, ctx: TurnContext
    ) -> dict:
        if not self.tool_queue:
            self.mismatch = f"unexpected extra tool call {tool}"
            return {"tool": tool, "ok": False, "error": "no recorded observation",
                    "summary": "replay: no recorded observation"}
        recorded = self.tool_queue.pop(0)
        if recorded.action.tool != tool or (recorded.action.arguments or {}) != args:
            self.mismatch = (
                f"tool call mismatch: replayed {tool} {args!r}, recorded "
                f"{recorded.action.tool} {recorded.action.arguments!r}"
            )
        observation = dict(recorded.observation or {})
        if tool == "ir_search" and observation.get("documents"):
            docs = [Document.from_json_dict(d) for d in observation["documents"]]
            session.remember_documents(docs)
            ctx.retrieved_this_turn.extend(docs)
        if recorded.internal_diff is not None:
            observation["internal_diff"] = recorded.internal_diff
        return observation


def replay_session(directory: str | Path) -> ReplayResult:
    """Re-drive every recorded turn and compare action-for-action."""
    directory = Path(directory)
    records = read_transcript_log(directory)
    try:
        reconstruct_states(records)  # hash-chain check over the raw log
    except (SeekerError, ValueError) as exc:
        return ReplayResult(
            ok=False, turns=0, actions=0,
            divergence=Divergence(0, 0, f"state chain broken: {exc}"),
        )

    config = ConductorConfig()
    meta_path = directory / "meta.json"
    if meta_path.exists():
        cfg = json.loads(meta_path.read_text()).get("config", {})
        known = {k: v for k, v in cfg.items() if k in ConductorConfig().__dict__}
        config = ConductorConfig(**known)

    recorded_turns = _group_turns(records)
    fixtures: list[str] = []
    for turn in recorded_turns:
        for event in turn.events:
            fixtures.extend(event.rejected_completions)
            if event.raw_completion is not None:
                fixtures.append(event.raw_completion)

    backend = ScriptedBackend({"conductor": fixtures})
    conductor = _PlaybackConductor(backend, config)
    session = Session("replay")

    total_actions = 0
    for recorded in recorded_turns:
        conductor.tool_queue = [
            e for e in recorded.events if e.action.tool is not None
        ]
        result = conductor.run_turn(session, recorded.user_text)
        for i, (got, want) in enumerate(zip(result.events, recorded.events)):
            total_actions += 1
            problem = _compare_events(got, want)
            if problem is None and conductor.mismatch:
                problem = conductor.mismatch
            if problem:
                return ReplayResult(
                    ok=False,
                    turns=recorded.turn,
                    actions=total_actions,
                    divergence=Divergence(recorded.turn, i, problem),
                )
        if len(result.events) != len(recorded.events):
            return ReplayResult(
                ok=False,
                turns=recorded.turn,
                actions=total_actions,
                divergence=Divergence(
                    recorded.turn,
                    min(len(result.events), len(recorded.events)),
                    f"action count differs: replayed {len(result.events)}, "
                    f"recorded {len(recorded.events)}",
                ),
            )
        if result.final_message != recorded.final_message:
            return ReplayResult(
                ok=False,
                turns=recorded.turn,
                actions=total_actions,
                divergence=Divergence(
                    recorded.turn,
                    len(recorded.events) - 1,
                    "final message differs",
                ),
            )
    return ReplayResult(ok=True, turns=len(recorded_turns), actions=total_actions)


def _compare_events(got: TurnEvent, want: TurnEvent) -> Optional[str]:
    if got.action.kind != want.action.kind:
        return f"kind differs: replayed {got.action.kind.value}, recorded {want.action.kind.value}"
    if got.action.text != want.action.text:
        return "action text differs"
    if got.action.tool != want.action.tool or (got.action.arguments or {}) != (
        want.action.arguments or {}
    ):
        return "tool call differs"
    got_diff = got.action.diff.to_json_dict() if got.action.diff else None
    want_diff = want.action.diff.to_json_dict() if want.action.diff else None
    if got_diff != want_diff:
        return "state diff differs"
    if got.state_version_after != want.state_version_after:
        return (
            f"state version differs: replayed {got.state_version_after}, "
            f"recorded {want.state_version_after}"
        )
    if got.state_hash_after != want.state_hash_after:
        return "state hash differs"
    return None
