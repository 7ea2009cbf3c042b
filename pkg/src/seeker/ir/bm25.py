"""BM25 inverted index.

Scoring uses the non-negative idf variant

    idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
    score(d, q) = sum_t idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))

so single-term corpora still rank by term frequency. Only documents
containing at least one query term are returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from seeker.model import SeekerError

from .tokenize import tokenize


class DuplicateId(SeekerError):
    pass


@dataclass
class Bm25Index:
    k1: float = 1.2
    b: float = 0.75
    postings: dict[str, list[tuple[str, int]]] = field(default_factory=dict)
    doc_lengths: dict[str, int] = field(default_factory=dict)

    @property
    def n_docs(self) -> int:
        return len(self.doc_lengths)

    @property
    def avgdl(self) -> float:
        if not self.doc_lengths:
            return 0.0
        return sum(self.doc_lengths.values()) / len(self.doc_lengths)

    def add(self, doc_id: str, text: str) -> None:
        if doc_id in self.doc_lengths:
            raise DuplicateId(doc_id)
        tokens = tokenize(text)
        self.doc_lengths[doc_id] = len(tokens)
        counts: dict[str, int] = {}
        for t in tokens:
            counts[t] = counts.get(t, 0) + 1
        for term, tf in counts.items():
            plist = self.postings.setdefault(term, [])
            plist.append((doc_id, tf))
            plist.sort()  # postings stay sorted by doc id

    def remove(self, doc_id: str) -> None:
        if doc_id not in self.doc_lengths:
            return
        del self.doc_lengths[doc_id]
        for term in list(self.postings):
            plist = [(d, tf) for d, tf in self.postings[term] if d != doc_id]
            if plist:
                self.postings[term] = plist
            else:
                del self.postings[term]

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        if df == 0:
            return 0.0
        n = self.n_docs
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    def search(self, query: str, k: int) -> list[tuple[str, float]]:
        """Top-k (doc id, score), non-increasing scores, ties by doc id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self.doc_lengths:
            return []
        avgdl = self.avgdl
        scores: dict[str, float] = {}
        for term in tokenize(query):
            plist = self.postings.get(term)
            if not plist:
                continue
            idf = self.idf(term)
            for doc_id, tf in plist:
                dl = self.doc_lengths[doc_id]
                norm = tf + self.k1 * (1.0 - self.b + self.b * dl / avgdl)
                scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (self.k1 + 1.0) / norm
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
        return ranked[:k]
