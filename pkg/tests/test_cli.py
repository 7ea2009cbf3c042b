"""CLI tests: ingest/index/replay/bench/report subcommands and exit codes."""

from __future__ import annotations

import json
import socket
import subprocess
import sys
import time

import requests

from seeker.cli import main

from .benchkit import EXPECTED, build_suite
from .test_session_replay import drive_golden_session


def run_cli(*argv):
    return main(list(argv))


def write_csv(path, text="a,b\n1,2\n3,4\n"):
    path.write_text(text)
    return path


# -- ingest / index ----------------------------------------------------------------


def test_ingest_single_csv(tmp_path, capsys):
    csv = write_csv(tmp_path / "prices.csv")
    code = run_cli("ingest", str(csv), "--corpus-dir", str(tmp_path / "corpus"))
    assert code == 0
    assert "1 table(s) indexed" in capsys.readouterr().out
    corpus = (tmp_path / "corpus" / "corpus.jsonl").read_text()
    assert "table:prices" in corpus
    assert (tmp_path / "corpus" / "relations" / "prices.csv").exists()


def test_ingest_partial_failure_exits_1(tmp_path, capsys):
    good1 = write_csv(tmp_path / "one.csv")
    bad = write_csv(tmp_path / "bad.csv", "a,b\n1\n")
    good2 = write_csv(tmp_path / "two.csv")
    code = run_cli(
        "ingest", str(good1), str(bad), str(good2),
        "--corpus-dir", str(tmp_path / "corpus"), "--json",
    )
    assert code == 1
    payload = json.loads(capsys.readouterr().out)
    assert len(payload["ingested"]) == 2
    assert len(payload["errors"]) == 1
    assert "bad.csv" in payload["errors"][0]["path"]


def test_reingest_requires_replace(tmp_path, capsys):
    csv = write_csv(tmp_path / "t.csv")
    corpus = str(tmp_path / "corpus")
    assert run_cli("ingest", str(csv), "--corpus-dir", corpus) == 0
    assert run_cli("ingest", str(csv), "--corpus-dir", corpus) == 1
    capsys.readouterr()
    assert run_cli("ingest", str(csv), "--corpus-dir", corpus, "--replace") == 0


def test_index_builds_binary_layout(tmp_path, capsys):
    csv = write_csv(tmp_path / "t.csv")
    corpus = str(tmp_path / "corpus")
    run_cli("ingest", str(csv), "--corpus-dir", corpus)
    capsys.readouterr()
    code = run_cli("index", "--corpus-dir", corpus, "--json")
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["documents"] == 1
    index_dir = tmp_path / "corpus" / "index"
    for name in ("corpus.jsonl", "bm25.bin", "vectors.bin", "meta.json"):
        assert (index_dir / name).exists()


def test_index_without_corpus_exits_2(tmp_path):
    assert run_cli("index", "--corpus-dir", str(tmp_path / "nowhere")) == 2


# -- replay ------------------------------------------------------------------------


def test_replay_pass_and_exit_zero(tmp_path, capsys):
    session = drive_golden_session(tmp_path)
    code = run_cli("replay", str(session.directory))
    assert code == 0
    assert "PASS" in capsys.readouterr().out


def test_replay_tampered_exits_1_with_location(tmp_path, capsys):
    session = drive_golden_session(tmp_path)
    path = session.directory / "transcript.jsonl"
    lines = path.read_text().splitlines()
    out = []
    for line in lines:
        rec = json.loads(line)
        if rec.get("type") == "action" and rec.get("kind") == "user_message":
            rec["text"] = "tampered"
        out.append(json.dumps(rec))
    path.write_text("\n".join(out) + "\n")
    code = run_cli("replay", str(session.directory), "--json")
    assert code == 1
    payload = json.loads(capsys.readouterr().out)
    assert payload["ok"] is False
    assert payload["divergence"]["turn"] == 1


def test_replay_empty_dir_exits_2(tmp_path):
    assert run_cli("replay", str(tmp_path / "ghost")) == 2


# -- bench -------------------------------------------------------------------------


def prepared_suite(tmp_path):
    paths = build_suite(tmp_path)
    run_cli("ingest", str(paths["csv"]), "--corpus-dir", str(paths["corpus"]))
    run_cli("index", "--corpus-dir", str(paths["corpus"]))
    return paths


def test_bench_scripted_suite_metrics(tmp_path, capsys):
    paths = prepared_suite(tmp_path)
    report_path = tmp_path / "report.json"
    capsys.readouterr()
    code = run_cli(
        "bench", str(paths["bench"]),
        "--adapter", "seeker",
        "--fixtures", str(paths["fixtures"]),
        "--corpus-dir", str(paths["corpus"]),
        "--report", str(report_path),
        "--json",
    )
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["convergence_pct"] == EXPECTED["convergence_pct"]
    assert payload["median_turns"] == EXPECTED["median_turns"]
    assert payload["accuracy_pct"] == EXPECTED["accuracy_pct"]
    report = json.loads(report_path.read_text())
    assert report["n_questions"] == 6


def test_bench_is_byte_deterministic(tmp_path):
    paths = prepared_suite(tmp_path)
    blobs = []
    for n in (1, 2):
        report_path = tmp_path / f"report{n}.json"
        code = run_cli(
            "bench", str(paths["bench"]),
            "--adapter", "seeker",
            "--fixtures", str(paths["fixtures"]),
            "--corpus-dir", str(paths["corpus"]),
            "--report", str(report_path),
        )
        assert code == 0
        blobs.append(report_path.read_bytes())
    assert blobs[0] == blobs[1]


def test_bench_fts_never_calls_conductor(tmp_path):
    # fixture dirs carry no conductor.jsonl; an fts run must not need one
    paths = prepared_suite(tmp_path)
    for qdir in paths["fixtures"].iterdir():
        (qdir / "conductor.jsonl").unlink()
    report_path = tmp_path / "fts_report.json"
    code = run_cli(
        "bench", str(paths["bench"]),
        "--adapter", "fts",
        "--fixtures", str(paths["fixtures"]),
        "--corpus-dir", str(paths["corpus"]),
        "--report", str(report_path),
    )
    assert code == 0
    report = json.loads(report_path.read_text())
    assert report["adapter"] == "fts"
    assert report["convergence_pct"] == EXPECTED["convergence_pct"]
    # no record errored on a missing conductor fixture
    assert all(r["error"] is None for r in report["records"])


def test_bench_missing_file_exits_2(tmp_path):
    assert run_cli("bench", str(tmp_path / "none.jsonl")) == 2


def test_bench_parallel_matches_sequential(tmp_path):
    paths = prepared_suite(tmp_path)
    blobs = []
    for n, parallel in ((1, "1"), (2, "3")):
        report_path = tmp_path / f"par{n}.json"
        code = run_cli(
            "bench", str(paths["bench"]),
            "--adapter", "seeker",
            "--fixtures", str(paths["fixtures"]),
            "--corpus-dir", str(paths["corpus"]),
            "--parallel", parallel,
            "--report", str(report_path),
        )
        assert code == 0
        blobs.append(report_path.read_bytes())
    assert blobs[0] == blobs[1]


def test_ingest_custom_delimiter(tmp_path, capsys):
    csv = tmp_path / "semi.csv"
    csv.write_text("a;b\n1;2\n")
    corpus = str(tmp_path / "corpus")
    assert run_cli("ingest", str(csv), "--corpus-dir", corpus, "--delimiter", ";") == 0
    doc_line = (tmp_path / "corpus" / "corpus.jsonl").read_text()
    assert "columns: a:int, b:int" in doc_line


def test_ingest_corpus_dir_from_config(tmp_path, capsys):
    csv = write_csv(tmp_path / "t.csv")
    config = tmp_path / "seeker.toml"
    config.write_text(f'[corpus]\ndir = "{tmp_path / "from_config"}"\n')
    assert run_cli("ingest", str(csv), "--config", str(config)) == 0
    assert (tmp_path / "from_config" / "corpus.jsonl").exists()
    # an explicit flag beats the config file
    assert run_cli(
        "ingest", str(csv), "--config", str(config),
        "--corpus-dir", str(tmp_path / "from_flag"),
    ) == 0
    assert (tmp_path / "from_flag" / "corpus.jsonl").exists()


def test_report_renders_markdown(tmp_path, capsys):
    paths = prepared_suite(tmp_path)
    report_path = tmp_path / "report.json"
    run_cli(
        "bench", str(paths["bench"]),
        "--adapter", "seeker",
        "--fixtures", str(paths["fixtures"]),
        "--corpus-dir", str(paths["corpus"]),
        "--report", str(report_path),
    )
    capsys.readouterr()
    code = run_cli("report", str(report_path))
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith("| System |")
    assert "66.67%" in out


# -- serve --------------------------------------------------------------------------


def test_serve_smoke_boots_and_answers(tmp_path):
    csv = write_csv(tmp_path / "t.csv")
    corpus = str(tmp_path / "corpus")
    run_cli("ingest", str(csv), "--corpus-dir", corpus)
    fixtures = tmp_path / "fix"
    fixtures.mkdir()
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    proc = subprocess.Popen(
        [
            sys.executable, "-m", "seeker.cli", "serve",
            "--port", str(port),
            "--backend", f"scripted:{fixtures}",
            "--corpus-dir", corpus,
        ],
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
    )
    try:
        deadline = time.time() + 15
        last_err = None
        while time.time() < deadline:
            try:
                resp = requests.get(f"http://127.0.0.1:{port}/healthz", timeout=2)
                assert resp.json()["documents"] == 1
                break
            except requests.RequestException as exc:
                last_err = exc
                time.sleep(0.2)
        else:
            raise AssertionError(f"server never became healthy: {last_err}")
    finally:
        proc.terminate()
        out, _ = proc.communicate(timeout=10)
    assert b"seeker serving on" in out


def test_serve_busy_port_exits_2(tmp_path, capsys):
    blocker = socket.socket()
    blocker.bind(("127.0.0.1", 0))
    port = blocker.getsockname()[1]
    try:
        code = run_cli(
            "serve", "--port", str(port), "--corpus-dir", str(tmp_path / "c"),
            "--backend", f"scripted:{tmp_path}",
        )
        assert code == 2
        assert "cannot bind" in capsys.readouterr().out
    finally:
        blocker.close()


def test_usage_error_exits_2():
    assert run_cli("frobnicate") == 2
