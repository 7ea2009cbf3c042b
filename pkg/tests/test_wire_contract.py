"""Wire-contract test: the exact JSON field names the web client consumes,
asserted against a live server driving a real materialization turn."""

from __future__ import annotations

import json
import threading
import time

import requests

from seeker.backend import ScriptedBackend

from .test_conductor import envelope, message
from .test_service import live_server


def scripted_materialization_backend():
    plan = json.dumps(
        {
            "steps": [
                {"op": "load", "document_id": "table:parts", "as": "parts_src"},
                {
                    "op": "sql",
                    "statement": "CREATE TABLE parts AS SELECT part, price FROM parts_src",
                },
            ]
        }
    )
    conductor = [
        envelope(
            "tool_call",
            tool="ir_search",
            arguments={"query": "parts prices"},
        ),
        envelope(
            "state_update",
            diff={
                "add_tables": [
                    {
                        "name": "parts",
                        "columns": [
                            {"name": "part", "dtype": "text"},
                            {"name": "price", "dtype": "float"},
                        ],
                    }
                ],
                "query_edits": [
                    {"index": 0, "new": "SELECT AVG(price) AS avg_price FROM parts"}
                ],
            },
        ),
        envelope(
            "tool_call",
            tool="materialize",
            arguments={"table": "parts", "note": "load the parts table"},
        ),
        message("parts is materialized and the average query is ready"),
    ]
    return ScriptedBackend({"conductor": conductor, "materializer": [plan]})


def test_turn_and_state_wire_shapes():
    with live_server(backend=scripted_materialization_backend()) as (base, _):
        upload = requests.post(
            f"{base}/corpus/tables",
            params={"name": "parts"},
            data="part,price\nbolt,1.5\nnut,0.5\n",
            timeout=10,
        )
        assert upload.status_code == 200
        assert set(upload.json()) == {"document_id", "table", "rows", "columns"}

        record = requests.post(f"{base}/sessions", timeout=10).json()
        assert set(record) == {"id", "created_at", "config", "state_version", "status"}
        session_id = record["id"]

        raw_lines: list[str] = []

        def listen():
            with requests.get(
                f"{base}/sessions/{session_id}/events", stream=True, timeout=30
            ) as resp:
                for raw in resp.iter_lines():
                    line = raw.decode() if isinstance(raw, bytes) else raw
                    raw_lines.append(line)

        listener = threading.Thread(target=listen)
        listener.start()
        time.sleep(0.3)

        turn = requests.post(
            f"{base}/sessions/{session_id}/messages",
            json={"text": "prepare the parts table"},
            timeout=30,
        ).json()
        listener.join(timeout=15)

        # -- turn result fields the client reads --------------------------------
        assert set(turn) >= {
            "final_message", "forced", "failed", "state_version",
            "state_diff", "actions", "usage",
        }
        diff = turn["state_diff"]
        assert set(diff) == {
            "from_version", "to_version", "added_tables",
            "removed_tables", "modified_tables", "query_edits",
        }
        assert diff["added_tables"][0]["name"] == "parts"
        assert diff["added_tables"][0]["columns"][0] == {
            "name": "part", "dtype": "text", "description": "",
        }
        assert diff["query_edits"][0]["old"] is None
        assert turn["actions"][0]["kind"] == "tool_call"
        assert {"input_tokens", "output_tokens"} == set(turn["usage"])
        # two diffs this turn: the explicit update plus the materialize flag
        assert turn["state_version"] == 2

        # -- state view fields ---------------------------------------------------
        view = requests.get(f"{base}/sessions/{session_id}/state", timeout=10).json()
        assert set(view) == {
            "version", "current_version", "tables", "queries", "rendering",
        }
        table = view["tables"][0]
        assert table["materialized"] is True
        assert table["row_count"] == 2
        assert table["sample_rows"] == [["bolt", 1.5], ["nut", 0.5]]
        assert table["provenance"] == ["table:parts"]
        assert view["queries"] == ["SELECT AVG(price) AS avg_price FROM parts"]

        # -- SSE framing -----------------------------------------------------------
        ids = [l for l in raw_lines if l.startswith("id: ")]
        assert ids and ids[0] == "id: 1"
        kinds = [l[len("event: ") :] for l in raw_lines if l.startswith("event: ")]
        assert [k for k in kinds if k != "heartbeat"] == [
            "action", "action", "action", "action", "turn_end",
        ]
        first_action_data = json.loads(
            next(
                raw_lines[i + 1][len("data: ") :]
                for i, line in enumerate(raw_lines)
                if line == "event: action"
            )
        )
        assert set(first_action_data) == {
            "type", "kind", "index_in_turn", "summary", "state_version",
        }
