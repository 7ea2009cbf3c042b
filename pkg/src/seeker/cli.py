"""Operator entry point: corpus ingestion, index building, serving,
replay audits, and benchmark runs.

Exit codes: 0 success, 1 partial data errors (some inputs failed or a
replay diverged), 2 usage/config errors. Every subcommand takes --json
for machine-readable output.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from seeker.backend import PriceSheet, ScriptedBackend
from seeker.config import Settings, load_settings
from seeker.evalharness import (
    FtsAdapter,
    RagTopKAdapter,
    RetrieverAdapter,
    SeekerAdapter,
    SimConfig,
    aggregate,
    load_benchmark,
    render_markdown,
    run_simulation,
)
from seeker.ir import IndexFormatError, IndexStore, StubWebSearch
from seeker.model import Document, Relation, serialize_table_document
from seeker.replay import replay_session
from seeker.sql import CsvError, parse_csv, relation_to_csv

SAMPLE_ROWS = 5


def _emit(payload: dict, as_json: bool, human: str) -> None:
    print(json.dumps(payload, sort_keys=True) if as_json else human)


def _load_corpus_docs(corpus_dir: Path) -> dict[str, Document]:
    docs: dict[str, Document] = {}
    corpus_file = corpus_dir / "corpus.jsonl"
    if corpus_file.exists():
        for line in corpus_file.read_text().splitlines():
            if line.strip():
                doc = Document.from_json_dict(json.loads(line))
                docs[doc.id] = doc
    return docs


def _write_corpus_docs(corpus_dir: Path, docs: dict[str, Document]) -> None:
    corpus_dir.mkdir(parents=True, exist_ok=True)
    with open(corpus_dir / "corpus.jsonl", "w") as f:
        for doc in docs.values():
            f.write(json.dumps(doc.to_json_dict(), sort_keys=True) + "\n")


def _load_base_catalog(corpus_dir: Path) -> dict[str, Relation]:
    catalog: dict[str, Relation] = {}
    relations_dir = corpus_dir / "relations"
    if relations_dir.exists():
        for path in sorted(relations_dir.glob("*.csv")):
            rel = parse_csv(path.read_text(), path.stem)
            catalog[rel.name] = rel
    return catalog


def _open_store(corpus_dir: Path, settings: Settings) -> IndexStore:
    web = None
    if settings.ir.web_search_enabled:
        web = StubWebSearch(settings.ir.web_fixtures_dir)
    index_dir = corpus_dir / "index"
    if (index_dir / "meta.json").exists():
        try:
            return IndexStore.load(
                index_dir, web=web, web_enabled=settings.ir.web_search_enabled
            )
        except IndexFormatError:
            pass
    store = IndexStore.rebuild(
        corpus_dir, web=web, web_enabled=settings.ir.web_search_enabled
    )
    return store


# -- subcommands --------------------------------------------------------------------


def _resolve_corpus_dir(args: argparse.Namespace):
    """Flag wins over config file; config file wins over the default."""
    try:
        settings = load_settings(args.config)
    except FileNotFoundError as exc:
        return None, str(exc)
    return Path(args.corpus_dir or settings.corpus_dir), None


def cmd_ingest(args: argparse.Namespace) -> int:
    corpus_dir, config_error = _resolve_corpus_dir(args)
    if config_error:
        _emit({"error": config_error}, args.json, f"error: {config_error}")
        return 2
    docs = _load_corpus_docs(corpus_dir)
    relations_dir = corpus_dir / "relations"
    relations_dir.mkdir(parents=True, exist_ok=True)

    ok, errors = [], []
    for raw_path in args.paths:
        path = Path(raw_path)
        try:
            rel = parse_csv(path.read_text(), path.stem, delimiter=args.delimiter)
            doc = serialize_table_document(rel, SAMPLE_ROWS)
            if doc.id in docs and not args.replace:
                raise CsvError("duplicate_id", f"{doc.id} already ingested", 0)
            doc.source = str(path)
            docs[doc.id] = doc
            (relations_dir / f"{rel.name}.csv").write_text(relation_to_csv(rel))
            ok.append({"path": str(path), "document_id": doc.id, "rows": len(rel.rows)})
        except (OSError, CsvError) as exc:
            errors.append({"path": str(path), "error": str(exc)})
    _write_corpus_docs(corpus_dir, docs)

    payload = {"ingested": ok, "errors": errors}
    human = f"{len(ok)} table(s) indexed" + (
        f", {len(errors)} failed:\n" + "\n".join(f"  {e['path']}: {e['error']}" for e in errors)
        if errors
        else ""
    )
    _emit(payload, args.json, human)
    return 1 if errors else 0


def cmd_index(args: argparse.Namespace) -> int:
    corpus_dir, config_error = _resolve_corpus_dir(args)
    if config_error:
        _emit({"error": config_error}, args.json, f"error: {config_error}")
        return 2
    if not (corpus_dir / "corpus.jsonl").exists():
        _emit(
            {"error": f"no corpus.jsonl under {corpus_dir}"},
            args.json,
            f"error: no corpus.jsonl under {corpus_dir}",
        )
        return 2
    store = IndexStore.rebuild(corpus_dir)
    store.save(corpus_dir / "index")
    payload = {"documents": len(store), "index_dir": str(corpus_dir / "index")}
    _emit(payload, args.json, f"indexed {len(store)} document(s)")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from seeker.service import ServiceConfig, create_app

    try:
        settings = load_settings(args.config)
    except FileNotFoundError as exc:
        _emit({"error": str(exc)}, args.json, f"error: {exc}")
        return 2
    if args.port is not None:
        settings.service.port = args.port
    if args.backend:
        kind, _, rest = args.backend.partition(":")
        settings.backend.kind = kind
        if rest:
            settings.backend.fixtures_dir = rest
    if args.corpus_dir:
        settings.corpus_dir = args.corpus_dir

    backend = _make_backend(settings)
    if backend is None:
        _emit(
            {"error": "remote backend needs base_url"},
            args.json,
            "error: remote backend needs base_url (set [backend] in seeker.toml)",
        )
        return 2
    corpus_dir = Path(settings.corpus_dir)
    store = _open_store(corpus_dir, settings)
    catalog = _load_base_catalog(corpus_dir)
    app = create_app(
        store,
        backend,
        base_catalog=catalog,
        config=settings.conductor,
        service_config=ServiceConfig(
            sample_rows=settings.conductor.sample_rows,
            sessions_dir=Path(settings.service.sessions_dir),
        ),
    )
    import socket

    probe = socket.socket()
    try:
        probe.bind((settings.service.host, settings.service.port))
        probe.close()
    except OSError as exc:
        probe.close()
        _emit(
            {"error": f"cannot bind {settings.service.host}:{settings.service.port}: {exc}"},
            args.json,
            f"error: cannot bind {settings.service.host}:{settings.service.port}: {exc}",
        )
        return 2
    print(
        f"seeker serving on http://{settings.service.host}:{settings.service.port} "
        f"({len(store)} documents, backend={settings.backend.kind})",
        flush=True,
    )
    uvicorn.run(
        app, host=settings.service.host, port=settings.service.port, log_level="warning"
    )
    return 0


def _make_backend(settings: Settings):
    if settings.backend.kind == "scripted":
        return ScriptedBackend.from_dir(settings.backend.fixtures_dir)
    from seeker.backend import RemoteBackend

    if not settings.backend.base_url:
        return None
    return RemoteBackend(
        base_url=settings.backend.base_url,
        model=settings.backend.model,
        api_key_env=settings.backend.api_key_env,
    )


def cmd_replay(args: argparse.Namespace) -> int:
    directory = Path(args.session_dir)
    try:
        result = replay_session(directory)
    except FileNotFoundError as exc:
        _emit({"error": str(exc)}, args.json, f"error: {exc}")
        return 2
    if result.ok:
        _emit(
            {"ok": True, "turns": result.turns, "actions": result.actions},
            args.json,
            f"PASS: {result.turns} turn(s), {result.actions} action(s) replayed identically",
        )
        return 0
    div = result.divergence
    _emit(
        {
            "ok": False,
            "divergence": {
                "turn": div.turn,
                "index_in_turn": div.index_in_turn,
                "reason": div.reason,
            },
        },
        args.json,
        f"FAIL: first divergent action at {div.render()}",
    )
    return 1


def cmd_bench(args: argparse.Namespace) -> int:
    bench_path = Path(args.bench_file)
    if not bench_path.exists():
        _emit(
            {"error": f"benchmark file not found: {bench_path}"},
            args.json,
            f"error: benchmark file not found: {bench_path}",
        )
        return 2
    try:
        settings = load_settings(args.config)
    except FileNotFoundError as exc:
        _emit({"error": str(exc)}, args.json, f"error: {exc}")
        return 2
    if args.corpus_dir:
        settings.corpus_dir = args.corpus_dir

    questions = load_benchmark(bench_path)
    corpus_dir = Path(settings.corpus_dir)
    store = _open_store(corpus_dir, settings)
    catalog = _load_base_catalog(corpus_dir)
    fixtures_root = Path(args.fixtures) if args.fixtures else None
    cfg = SimConfig(turn_limit=args.limit, adapter=args.adapter)

    def run_one(q):
        # every question gets its own scripted backend, so parallel runs
        # stay deterministic
        fixture_dir = fixtures_root / q.id if fixtures_root else None
        if fixture_dir is None or not fixture_dir.exists():
            backend = ScriptedBackend({})
        else:
            backend = ScriptedBackend.from_dir(fixture_dir)
        adapter = _make_adapter(args.adapter, store, backend, catalog, settings)
        return run_simulation(q, cfg, adapter, backend, backend)

    if args.parallel > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.parallel) as pool:
            records = list(pool.map(run_one, questions))
    else:
        records = [run_one(q) for q in questions]

    sheet = model = None
    if args.price_sheet and args.model:
        sheet = PriceSheet.from_file(args.price_sheet)
        model = args.model
    report = aggregate(records, adapter=args.adapter, price_sheet=sheet, model=model)

    out_path = Path(args.report)
    out_path.write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n"
    )
    if args.markdown:
        Path(args.markdown).write_text(render_markdown([report]))
    payload = {
        "report": str(out_path),
        "convergence_pct": report.convergence_pct,
        "median_turns": report.median_turns,
        "accuracy_pct": report.accuracy_pct,
    }
    human = (
        f"bench complete: convergence {report.convergence_pct:.2f}%, "
        f"median turns {report.median_turns}, accuracy {report.accuracy_pct:.2f}% "
        f"-> {out_path}"
    )
    _emit(payload, args.json, human)
    return 0


def _make_adapter(name, store, backend, catalog, settings):
    if name == "fts":
        return FtsAdapter(store, k=settings.conductor.top_k)
    if name == "retriever":
        return RetrieverAdapter(store, k=settings.conductor.top_k)
    if name == "rag-topk":
        return RagTopKAdapter(store, backend, k=settings.conductor.top_k, ledger=[])
    return SeekerAdapter(
        store, backend, base_catalog=catalog, config=settings.conductor, ledger=[]
    )


def cmd_report(args: argparse.Namespace) -> int:
    path = Path(args.report_file)
    if not path.exists():
        _emit(
            {"error": f"report not found: {path}"},
            args.json,
            f"error: report not found: {path}",
        )
        return 2
    data = json.loads(path.read_text())
    from seeker.evalharness import QuestionRecord, RunReport
    from seeker.backend import Usage

    records = [
        QuestionRecord(
            question_id=r["question_id"],
            converged=r["converged"],
            turns_to_convergence=r["turns_to_convergence"],
            answer_correct=r["answer_correct"],
            final_answer=r.get("final_answer"),
            usage=Usage(r["usage"]["input_tokens"], r["usage"]["output_tokens"]),
            error=r.get("error"),
        )
        for r in data.get("records", [])
    ]
    report = RunReport(
        adapter=data["adapter"],
        records=records,
        convergence_pct=data["convergence_pct"],
        median_turns=data["median_turns"],
        accuracy_pct=data["accuracy_pct"],
        avg_input_tokens=data["avg_input_tokens"],
        avg_output_tokens=data["avg_output_tokens"],
        cost_model=data.get("cost_model"),
        input_cost=data.get("input_cost"),
        output_cost=data.get("output_cost"),
    )
    text = render_markdown([report])
    if args.out:
        Path(args.out).write_text(text)
        _emit({"out": args.out}, args.json, f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


# -- argument parsing ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seeker",
        description="data discovery and preparation engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="ingest CSV files into a corpus directory")
    p.add_argument("paths", nargs="+", help="CSV files")
    p.add_argument("--corpus-dir", default=None)
    p.add_argument("--config", default=None, help="seeker.toml path")
    p.add_argument("--delimiter", default=",", help="CSV field delimiter")
    p.add_argument("--replace", action="store_true", help="overwrite duplicate ids")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", help="build search indexes from corpus.jsonl")
    p.add_argument("--corpus-dir", default=None)
    p.add_argument("--config", default=None, help="seeker.toml path")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", default=None, help="seeker.toml path")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--backend", default=None, help="scripted:<fixtures-dir> or remote")
    p.add_argument("--corpus-dir", default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="verify a persisted session replays identically")
    p.add_argument("session_dir")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("bench", help="run a benchmark suite with a simulated user")
    p.add_argument("bench_file", help="bench.jsonl")
    p.add_argument("--adapter", default="seeker",
                   choices=["seeker", "fts", "retriever", "rag-topk"])
    p.add_argument("--limit", type=int, default=15, help="turn limit per question")
    p.add_argument("--fixtures", default=None,
                   help="scripted fixtures root (per-question subdirectories)")
    p.add_argument("--parallel", type=int, default=1,
                   help="questions run concurrently up to this limit")
    p.add_argument("--corpus-dir", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--report", default="report.json")
    p.add_argument("--markdown", default=None)
    p.add_argument("--price-sheet", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="render a report.json as markdown")
    p.add_argument("report_file")
    p.add_argument("--out", default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
