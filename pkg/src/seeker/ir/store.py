"""The retrieval front door: one corpus, three retrievers, one interface.

Lexical and vector retrieval run over the same document set and are fused
by reciprocal rank fusion; web search is dispatched to an adapter and
merged the same way. Readers work against a frozen snapshot; writers take
the store lock and publish atomically.

On-disk layout (save/load):
    corpus.jsonl   one Document JSON object per line
    bm25.bin       magic SKBM, u32 version, u64 length, JSON payload
    vectors.bin    magic SKVX, u32 version, u64 header length, JSON header,
                   then count*dim float32 little-endian vector data
    meta.json      parameters, dimension, tokenizer version
"""

from __future__ import annotations

import json
import struct
import threading
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from seeker.model import DocKind, Document, SeekerError

from .bm25 import Bm25Index, DuplicateId
from .embedding import EmbeddingProvider, HashingEmbedding
from .hnsw import EmptyIndex, HnswIndex
from .tokenize import TOKENIZER_VERSION
from .web import WebSearch

RRF_C = 60

_BM25_MAGIC = b"SKBM"
_VEC_MAGIC = b"SKVX"
_FORMAT_VERSION = 1


class IndexFormatError(SeekerError):
    pass


def rrf_fuse(
    lists: Sequence[Sequence[tuple[Document, float]]], c: int = RRF_C
) -> list[tuple[Document, float]]:
    """Fuse ranked lists: fused(d) = sum over lists of 1 / (c + rank_list(d)),
    rank 1-based, absent-from-list contributing 0. Ties break by doc id."""
    fused: dict[str, float] = {}
    docs: dict[str, Document] = {}
    for ranked in lists:
        for rank, (doc, _score) in enumerate(ranked, start=1):
            fused[doc.id] = fused.get(doc.id, 0.0) + 1.0 / (c + rank)
            docs.setdefault(doc.id, doc)
    ordered = sorted(fused.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(docs[doc_id], score) for doc_id, score in ordered]


class IndexStore:
    def __init__(
        self,
        embedding: Optional[EmbeddingProvider] = None,
        k1: float = 1.2,
        b: float = 0.75,
        m: int = 16,
        ef_construction: int = 200,
        ef_search: int = 64,
        seed: int = 0,
        web: Optional[WebSearch] = None,
        web_enabled: bool = False,
    ):
        self.embedding = embedding or HashingEmbedding()
        self.bm25 = Bm25Index(k1=k1, b=b)
        self.hnsw = HnswIndex(
            dim=self.embedding.dim,
            m=m,
            ef_construction=ef_construction,
            ef_search=ef_search,
            seed=seed,
        )
        self.docs: dict[str, Document] = {}
        self.web = web
        self.web_enabled = web_enabled
        self._lock = threading.RLock()

    def __len__(self) -> int:
        return len(self.docs)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.docs

    @staticmethod
    def _doc_text(doc: Document) -> str:
        return f"{doc.title}\n{doc.body}" if doc.title else doc.body

    def index_document(self, doc: Document) -> None:
        with self._lock:
            if doc.id in self.docs:
                raise DuplicateId(doc.id)
            text = self._doc_text(doc)
            self.bm25.add(doc.id, text)
            self.hnsw.add(doc.id, self.embedding.embed(text))
            self.docs[doc.id] = Document.from_json_dict(doc.to_json_dict())

    # -- retrievers ---------------------------------------------------------

    def _filter_ids(self, kinds: Optional[set[DocKind]]) -> Optional[set[str]]:
        if kinds is None:
            return None
        return {d.id for d in self.docs.values() if d.kind in kinds}

    def bm25_search(
        self, query: str, k: int, kinds: Optional[set[DocKind]] = None
    ) -> list[tuple[Document, float]]:
        # reads share the store lock with writes, so no search ever sees a
        # half-indexed document
        with self._lock:
            allowed = self._filter_ids(kinds)
            # score the full corpus, then filter, so kind filters can't starve k
            ranked = self.bm25.search(query, k=max(len(self.docs), 1))
            out = []
            for doc_id, score in ranked:
                if allowed is not None and doc_id not in allowed:
                    continue
                doc = self._scored(doc_id, score)
                out.append((doc, score))
                if len(out) == k:
                    break
            return out

    def vector_search(
        self, query: str, k: int, kinds: Optional[set[DocKind]] = None
    ) -> list[tuple[Document, float]]:
        with self._lock:
            if not self.docs:
                raise EmptyIndex("no documents indexed")
            allowed = self._filter_ids(kinds)
            fetch = len(self.docs) if allowed is not None else k
            ranked = self.hnsw.search(self.embedding.embed(query), k=max(fetch, k))
            out = []
            for doc_id, dist in ranked:
                if allowed is not None and doc_id not in allowed:
                    continue
                out.append((self._scored(doc_id, dist), dist))
                if len(out) == k:
                    break
            return out

    def hybrid_search(
        self, query: str, k: int, kinds: Optional[set[DocKind]] = None
    ) -> list[tuple[Document, float]]:
        """BM25 and vector rankings fused by RRF with c=60."""
        if k < 1:
            raise ValueError("k must be >= 1")
        with self._lock:  # both sub-rankings see the same snapshot
            lexical = self.bm25_search(query, k, kinds)
            try:
                semantic = self.vector_search(query, k, kinds)
            except EmptyIndex:
                semantic = []
            fused = rrf_fuse([lexical, semantic])
            out = []
            for doc, score in fused[:k]:
                out.append((self._scored(doc.id, score), score))
            return out

    def search(
        self, query: str, k: int, kinds: Optional[set[DocKind]] = None
    ) -> list[tuple[Document, float]]:
        """Kind-dispatching search. table/knowledge kinds go through hybrid
        retrieval, web goes to the adapter (nothing when disabled); per-kind
        lists are merged by RRF. A single contributing list passes through
        with its native scores."""
        if kinds is None:
            kinds = {DocKind.TABLE, DocKind.KNOWLEDGE}
            if self.web_enabled:
                kinds = kinds | {DocKind.WEB}
        per_kind: list[list[tuple[Document, float]]] = []
        for kind in (DocKind.TABLE, DocKind.KNOWLEDGE):
            if kind in kinds:
                ranked = self.hybrid_search(query, k, kinds={kind})
                if ranked:
                    per_kind.append(ranked)
        if DocKind.WEB in kinds and self.web_enabled and self.web is not None:
            web_docs = self.web.search(query, k)
            if web_docs:
                per_kind.append([(d, float(len(web_docs) - i)) for i, d in enumerate(web_docs)])
        if not per_kind:
            return []
        if len(per_kind) == 1:
            return per_kind[0][:k]
        return rrf_fuse(per_kind)[:k]

    def _scored(self, doc_id: str, score: float) -> Document:
        doc = Document.from_json_dict(self.docs[doc_id].to_json_dict())
        doc.score = score
        return doc

    # -- persistence ----------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with self._lock:
            with open(directory / "corpus.jsonl", "w") as f:
                for doc in self.docs.values():
                    f.write(json.dumps(doc.to_json_dict(), sort_keys=True) + "\n")

            bm25_payload = json.dumps(
                {
                    "postings": {
                        t: [[d, tf] for d, tf in plist]
                        for t, plist in self.bm25.postings.items()
                    },
                    "doc_lengths": self.bm25.doc_lengths,
                    "k1": self.bm25.k1,
                    "b": self.bm25.b,
                }
            ).encode()
            with open(directory / "bm25.bin", "wb") as f:
                f.write(_BM25_MAGIC)
                f.write(struct.pack("<IQ", _FORMAT_VERSION, len(bm25_payload)))
                f.write(bm25_payload)

            state = self.hnsw.to_state()
            count = len(state["ids"])
            header = json.dumps({k: v for k, v in state.items()}).encode()
            with open(directory / "vectors.bin", "wb") as f:
                f.write(_VEC_MAGIC)
                f.write(struct.pack("<IQ", _FORMAT_VERSION, len(header)))
                f.write(header)
                block = np.ascontiguousarray(
                    self.hnsw._vectors[:count], dtype="<f4"
                )
                f.write(block.tobytes())

            meta = {
                "dim": self.embedding.dim,
                "k1": self.bm25.k1,
                "b": self.bm25.b,
                "m": self.hnsw.m,
                "ef_construction": self.hnsw.ef_construction,
                "ef_search": self.hnsw.ef_search,
                "tokenizer_version": TOKENIZER_VERSION,
                "format_version": _FORMAT_VERSION,
            }
            (directory / "meta.json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def load(
        cls,
        directory: str | Path,
        embedding: Optional[EmbeddingProvider] = None,
        web: Optional[WebSearch] = None,
        web_enabled: bool = False,
    ) -> "IndexStore":
        directory = Path(directory)
        meta = json.loads((directory / "meta.json").read_text())
        if meta.get("tokenizer_version") != TOKENIZER_VERSION:
            raise IndexFormatError(
                "index built with a different tokenizer version; rebuild from corpus"
            )
        if meta.get("format_version") != _FORMAT_VERSION:
            raise IndexFormatError("unsupported index format version")

        store = cls(
            embedding=embedding,
            k1=meta["k1"],
            b=meta["b"],
            m=meta["m"],
            ef_construction=meta["ef_construction"],
            ef_search=meta["ef_search"],
            web=web,
            web_enabled=web_enabled,
        )
        if store.embedding.dim != meta["dim"]:
            raise IndexFormatError(
                f"embedding dim {store.embedding.dim} != index dim {meta['dim']}"
            )

        for line in (directory / "corpus.jsonl").read_text().splitlines():
            if line.strip():
                doc = Document.from_json_dict(json.loads(line))
                store.docs[doc.id] = doc

        with open(directory / "bm25.bin", "rb") as f:
            if f.read(4) != _BM25_MAGIC:
                raise IndexFormatError("bad bm25.bin magic")
            version, length = struct.unpack("<IQ", f.read(12))
            if version != _FORMAT_VERSION:
                raise IndexFormatError("unsupported bm25.bin version")
            payload = json.loads(f.read(length))
        store.bm25 = Bm25Index(k1=payload["k1"], b=payload["b"])
        store.bm25.doc_lengths = dict(payload["doc_lengths"])
        store.bm25.postings = {
            t: [(d, tf) for d, tf in plist] for t, plist in payload["postings"].items()
        }

        with open(directory / "vectors.bin", "rb") as f:
            if f.read(4) != _VEC_MAGIC:
                raise IndexFormatError("bad vectors.bin magic")
            version, length = struct.unpack("<IQ", f.read(12))
            if version != _FORMAT_VERSION:
                raise IndexFormatError("unsupported vectors.bin version")
            state = json.loads(f.read(length))
            count = len(state["ids"])
            data = np.frombuffer(
                f.read(count * state["dim"] * 4), dtype="<f4"
            ).reshape(count, state["dim"])
        store.hnsw.load_state(state, data.copy())
        return store

    @classmethod
    def rebuild(
        cls,
        directory: str | Path,
        embedding: Optional[EmbeddingProvider] = None,
        web: Optional[WebSearch] = None,
        web_enabled: bool = False,
        **params,
    ) -> "IndexStore":
        """Rebuild indexes from corpus.jsonl alone; always available when
        binary formats are stale."""
        store = cls(embedding=embedding, web=web, web_enabled=web_enabled, **params)
        corpus = Path(directory) / "corpus.jsonl"
        if corpus.exists():
            for line in corpus.read_text().splitlines():
                if line.strip():
                    store.index_document(Document.from_json_dict(json.loads(line)))
        return store
