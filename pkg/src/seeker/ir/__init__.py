"""Retrieval: hybrid BM25 + vector search over documents, a knowledge
store fed by session capture, and web search adapters."""

from .bm25 import Bm25Index, DuplicateId
from .embedding import EmbeddingProvider, HashingEmbedding, RemoteEmbedding
from .hnsw import EmptyIndex, HnswIndex
from .knowledge import ExtractionError, KnowledgeEntry, capture_knowledge
from .store import RRF_C, IndexFormatError, IndexStore, rrf_fuse
from .tokenize import TOKENIZER_VERSION, tokenize
from .web import HttpWebSearch, StubWebSearch, WebSearch, query_fixture_name

__all__ = [
    "Bm25Index",
    "DuplicateId",
    "EmbeddingProvider",
    "EmptyIndex",
    "ExtractionError",
    "HashingEmbedding",
    "HnswIndex",
    "HttpWebSearch",
    "IndexFormatError",
    "IndexStore",
    "KnowledgeEntry",
    "RRF_C",
    "RemoteEmbedding",
    "StubWebSearch",
    "TOKENIZER_VERSION",
    "WebSearch",
    "capture_knowledge",
    "query_fixture_name",
    "rrf_fuse",
    "tokenize",
]
