"""Web search adapters: a fixture-serving stub for offline runs and tests,
and a thin HTTP client for a real search endpoint."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Optional, Protocol

from seeker.model import DocKind, Document


def query_fixture_name(query: str) -> str:
    """Stable fixture filename for a query: sha256 of the stripped text."""
    digest = hashlib.sha256(query.strip().encode("utf-8")).hexdigest()
    return f"{digest[:16]}.json"


class WebSearch(Protocol):
    def search(self, query: str, k: int) -> list[Document]: ...


class StubWebSearch:
    """Serves canned results from fixtures/<query-hash>.json; unknown
    queries return nothing."""

    def __init__(self, fixtures_dir: str | Path):
        self.fixtures_dir = Path(fixtures_dir)

    def search(self, query: str, k: int) -> list[Document]:
        path = self.fixtures_dir / query_fixture_name(query)
        if not path.exists():
            return []
        docs = [Document.from_json_dict(d) for d in json.loads(path.read_text())]
        for d in docs:
            d.kind = DocKind.WEB
        return docs[:k]

    def save_fixture(self, query: str, docs: list[Document]) -> Path:
        self.fixtures_dir.mkdir(parents=True, exist_ok=True)
        path = self.fixtures_dir / query_fixture_name(query)
        path.write_text(json.dumps([d.to_json_dict() for d in docs], indent=2))
        return path


class HttpWebSearch:
    """GETs a configurable endpoint expecting JSON
    [{"title": ..., "url": ..., "snippet": ...}, ...]."""

    def __init__(self, endpoint: str, api_key: Optional[str] = None):
        self.endpoint = endpoint
        self.api_key = api_key

    def search(self, query: str, k: int) -> list[Document]:
        import requests

        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        resp = requests.get(
            self.endpoint, params={"q": query, "k": k}, headers=headers, timeout=30
        )
        resp.raise_for_status()
        out = []
        for item in resp.json()[:k]:
            url = item.get("url", "")
            out.append(
                Document(
                    id="web:" + hashlib.sha256(url.encode()).hexdigest()[:16],
                    kind=DocKind.WEB,
                    title=item.get("title", ""),
                    body=item.get("snippet", ""),
                    source=url,
                )
            )
        return out
