"""Session persistence and replay-audit tests."""

from __future__ import annotations

import json

import pytest

from seeker.backend import ScriptedBackend
from seeker.conductor import Conductor, ConductorConfig
from seeker.ir import IndexStore
from seeker.model import ColumnSpec, Dtype, Relation, serialize_table_document
from seeker.replay import replay_session
from seeker.session import Session, read_transcript_log, reconstruct_states, state_hash

from .test_conductor import (
    TARIFF_QUERY,
    add_procurement_update,
    envelope,
    message,
    reason,
)


def scripted_store():
    store = IndexStore(ef_construction=32)
    rel = Relation(
        "tariff_records",
        (
            ColumnSpec("country", Dtype.TEXT),
            ColumnSpec("year", Dtype.INT),
            ColumnSpec("rate", Dtype.FLOAT),
        ),
        (("Germany", 2020, 0.05), ("Germany", 2021, 0.07)),
    )
    store.index_document(serialize_table_document(rel, sample_rows=5))
    return store


def golden_fixtures():
    return [
        reason("tariff impact needs procurement data"),
        envelope("tool_call", tool="ir_search", arguments={"query": "tariff records"}),
        add_procurement_update(),
        message("I drafted procurement_data and the impact query."),
        # second turn
        reason("user asked about scope"),
        message("The query covers all suppliers; narrow it when ready."),
    ]


def drive_golden_session(tmp_path, session_id="golden"):
    backend = ScriptedBackend({"conductor": golden_fixtures()})
    conductor = Conductor(backend, scripted_store(), ConductorConfig())
    session = Session(session_id, directory=tmp_path / session_id)
    session.write_meta(conductor.config.to_json_dict())
    conductor.run_turn(session, "what is the tariff impact?")
    conductor.run_turn(session, "which suppliers does this cover?")
    return session


def test_transcript_log_reconstructs_states(tmp_path):
    session = drive_golden_session(tmp_path)
    records = read_transcript_log(session.directory)
    states = reconstruct_states(records)
    assert states[-1].version == session.state.version
    assert state_hash(states[-1]) == state_hash(session.state)
    assert states[-1].queries == (TARIFF_QUERY,)


def test_replay_passes_on_untouched_session(tmp_path):
    session = drive_golden_session(tmp_path)
    result = replay_session(session.directory)
    assert result.ok, result.divergence and result.divergence.render()
    assert result.turns == 2
    assert result.actions == 6


def test_replay_fails_on_tampered_action_text(tmp_path):
    session = drive_golden_session(tmp_path)
    path = session.directory / "transcript.jsonl"
    lines = path.read_text().splitlines()
    tampered = []
    flipped_at = None
    for i, line in enumerate(lines):
        rec = json.loads(line)
        if rec.get("type") == "action" and rec.get("kind") == "user_message" and flipped_at is None:
            rec["text"] = "doctored message"
            flipped_at = i
        tampered.append(json.dumps(rec, sort_keys=True))
    path.write_text("\n".join(tampered) + "\n")
    result = replay_session(session.directory)
    assert not result.ok
    assert result.divergence is not None
    assert result.divergence.turn == 1
    assert "text differs" in result.divergence.reason


def test_replay_fails_on_tampered_diff(tmp_path):
    session = drive_golden_session(tmp_path)
    path = session.directory / "transcript.jsonl"
    lines = path.read_text().splitlines()
    tampered = []
    for line in lines:
        rec = json.loads(line)
        if rec.get("type") == "action" and rec.get("kind") == "state_update":
            rec["diff"]["query_edits"][0]["new"] = "SELECT 42"
        tampered.append(json.dumps(rec, sort_keys=True))
    path.write_text("\n".join(tampered) + "\n")
    result = replay_session(session.directory)
    assert not result.ok
    assert "state" in result.divergence.reason or "chain" in result.divergence.reason


def test_replay_detects_hash_chain_break(tmp_path):
    session = drive_golden_session(tmp_path)
    path = session.directory / "transcript.jsonl"
    lines = path.read_text().splitlines()
    tampered = []
    for line in lines:
        rec = json.loads(line)
        if rec.get("type") == "action" and rec.get("state_hash_after"):
            rec["state_hash_after"] = "0" * 16
        tampered.append(json.dumps(rec, sort_keys=True))
    path.write_text("\n".join(tampered) + "\n")
    result = replay_session(session.directory)
    assert not result.ok
    assert "chain" in result.divergence.reason


def test_scripted_sessions_are_bit_reproducible(tmp_path):
    s1 = drive_golden_session(tmp_path / "a", session_id="same-id")
    s2 = drive_golden_session(tmp_path / "b", session_id="same-id")
    t1 = (s1.directory / "transcript.jsonl").read_text()
    t2 = (s2.directory / "transcript.jsonl").read_text()
    assert t1 == t2


def test_prompts_are_bit_reproducible(tmp_path):
    backend1 = ScriptedBackend({"conductor": golden_fixtures()})
    backend2 = ScriptedBackend({"conductor": golden_fixtures()})
    for backend in (backend1, backend2):
        conductor = Conductor(backend, scripted_store(), ConductorConfig())
        session = Session("p")
        conductor.run_turn(session, "what is the tariff impact?")
        conductor.run_turn(session, "which suppliers does this cover?")
    prompts1 = [c.prompt for c in backend1.calls]
    prompts2 = [c.prompt for c in backend2.calls]
    assert prompts1 == prompts2


def test_failed_turn_replays_cleanly(tmp_path):
    fixtures = ["junk"] * 4  # exhausts envelope retries -> apology
    backend = ScriptedBackend({"conductor": fixtures})
    conductor = Conductor(backend, scripted_store(), ConductorConfig())
    session = Session("faily", directory=tmp_path / "faily")
    session.write_meta(conductor.config.to_json_dict())
    result = conductor.run_turn(session, "hello")
    assert result.failed
    replay = replay_session(session.directory)
    assert replay.ok, replay.divergence and replay.divergence.render()


def test_empty_directory_is_an_error(tmp_path):
    with pytest.raises(FileNotFoundError):
        replay_session(tmp_path / "nothing")
