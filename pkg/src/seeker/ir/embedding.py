"""Embedding providers.

The default used by tests and offline mode is a feature-hashing
bag-of-words: fully deterministic, no model download, no network. A
remote provider can be slotted in behind the same interface for
production embeddings.
"""

from __future__ import annotations

import hashlib
from typing import Protocol

import numpy as np

from .tokenize import tokenize


class EmbeddingProvider(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray:
        """Deterministic d-dimensional embedding of text."""
        ...


class HashingEmbedding:
    """Feature-hashing bag of words with L2 normalization.

    Tokens hash to a bucket and a sign via blake2b, so the mapping is
    stable across processes and platforms.
    """

    def __init__(self, dim: int = 256):
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in tokenize(text):
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            h = int.from_bytes(digest, "big")
            idx = h % self.dim
            sign = 1.0 if (h >> 63) & 1 else -1.0
            vec[idx] += sign
        norm = float(np.linalg.norm(vec))
        if norm > 0:
            vec /= norm
        return vec


class RemoteEmbedding:
    """HTTP client for an embeddings endpoint returning {"embedding": [...]}.

    Configured like the remote completion backend: base URL plus model
    name, API key from the environment.
    """

    def __init__(self, base_url: str, model: str, api_key: str = "", dim: int = 256):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        resp = requests.post(
            f"{self.base_url}/embeddings",
            json={"model": self.model, "input": text},
            headers=headers,
            timeout=30,
        )
        resp.raise_for_status()
        vec = np.asarray(resp.json()["embedding"], dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ValueError(f"provider returned dim {vec.shape}, expected {self.dim}")
        return vec
