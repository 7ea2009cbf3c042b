"""Hierarchical navigable small-world graph for approximate nearest
neighbor search under cosine distance.

Vectors are L2-normalized on insert, so distance is 1 - dot. Layer
assignment draws from a seeded RNG, making index construction fully
deterministic for a fixed insertion order. Neighbor selection uses the
diversity heuristic (keep an element only if it is closer to the query
than to any already-kept neighbor), keeping pruned links to fill up to M;
this preserves graph connectivity, which the tests check by BFS.
"""

from __future__ import annotations

import heapq
import math
import random
from typing import Optional

import numpy as np

from seeker.model import SeekerError


class EmptyIndex(SeekerError):
    pass


class HnswIndex:
    def __init__(
        self,
        dim: int,
        m: int = 16,
        ef_construction: int = 200,
        ef_search: int = 64,
        seed: int = 0,
    ):
        self.dim = dim
        self.m = m
        self.m0 = 2 * m
        self.ef_construction = ef_construction
        self.ef_search = ef_search
        self._ml = 1.0 / math.log(m)
        self._rng = random.Random(seed)
        self._vectors = np.zeros((0, dim), dtype=np.float32)
        self._ids: list[str] = []
        self._levels: list[int] = []
        self._links: list[list[list[int]]] = []  # node -> layer -> neighbors
        self._entry = -1
        self._max_level = -1

    def __len__(self) -> int:
        return len(self._ids)

    # -- construction -----------------------------------------------------

    def _normalize(self, vector) -> np.ndarray:
        v = np.asarray(vector, dtype=np.float32)
        if v.shape != (self.dim,):
            raise ValueError(f"vector has shape {v.shape}, expected ({self.dim},)")
        norm = float(np.linalg.norm(v))
        return v / norm if norm > 0 else v

    def add(self, doc_id: str, vector) -> None:
        v = self._normalize(vector)
        idx = len(self._ids)
        if len(self._vectors) <= idx:
            grown = np.zeros((max(16, 2 * len(self._vectors)), self.dim), np.float32)
            grown[: len(self._vectors)] = self._vectors[: len(self._ids)]
            self._vectors = grown
        self._vectors[idx] = v
        self._ids.append(doc_id)
        level = int(-math.log(max(self._rng.random(), 1e-300)) * self._ml)
        self._levels.append(level)
        self._links.append([[] for _ in range(level + 1)])

        if self._entry < 0:
            self._entry = idx
            self._max_level = level
            return

        ep = self._entry
        for layer in range(self._max_level, level, -1):
            ep = self._greedy_closest(v, ep, layer)

        for layer in range(min(level, self._max_level), -1, -1):
            candidates = self._search_layer(v, [ep], self.ef_construction, layer)
            neighbors = self._select_neighbors(v, candidates, self.m)
            self._links[idx][layer] = [n for _, n in neighbors]
            cap = self.m0 if layer == 0 else self.m
            for dist, n in neighbors:
                nlinks = self._links[n][layer]
                nlinks.append(idx)
                if len(nlinks) > cap:
                    self._shrink(n, layer, cap)
            ep = candidates[0][1]

        if level > self._max_level:
            self._entry = idx
            self._max_level = level

    def _shrink(self, node: int, layer: int, cap: int) -> None:
        links = self._links[node][layer]
        base = self._vectors[node]
        dists = 1.0 - self._vectors[links] @ base
        cands = sorted(zip(dists.tolist(), links))
        self._links[node][layer] = [n for _, n in self._select_neighbors_sorted(cands, cap)]

    def _select_neighbors(
        self, query: np.ndarray, candidates: list[tuple[float, int]], m: int
    ) -> list[tuple[float, int]]:
        return self._select_neighbors_sorted(sorted(candidates), m)

    def _select_neighbors_sorted(
        self, cands: list[tuple[float, int]], m: int
    ) -> list[tuple[float, int]]:
        kept: list[tuple[float, int]] = []
        kept_vecs: Optional[np.ndarray] = None
        pruned: list[tuple[float, int]] = []
        for dist, node in cands:
            if len(kept) >= m:
                break
            if kept:
                to_kept = 1.0 - kept_vecs @ self._vectors[node]
                if float(to_kept.min()) < dist:
                    pruned.append((dist, node))
                    continue
            kept.append((dist, node))
            row = self._vectors[node].reshape(1, -1)
            kept_vecs = row if kept_vecs is None else np.vstack([kept_vecs, row])
        for dist, node in pruned:
            if len(kept) >= m:
                break
            kept.append((dist, node))
        return kept

    # -- search -----------------------------------------------------------

    def _greedy_closest(self, query: np.ndarray, ep: int, layer: int) -> int:
        best = ep
        best_dist = 1.0 - float(self._vectors[best] @ query)
        improved = True
        while improved:
            improved = False
            neigh = self._links[best][layer]
            if not neigh:
                break
            dists = 1.0 - self._vectors[neigh] @ query
            i = int(np.argmin(dists))
            if float(dists[i]) < best_dist:
                best = neigh[i]
                best_dist = float(dists[i])
                improved = True
        return best

    def _search_layer(
        self, query: np.ndarray, eps: list[int], ef: int, layer: int
    ) -> list[tuple[float, int]]:
        visited = set(eps)
        dists = 1.0 - self._vectors[eps] @ query
        candidates = [(float(d), e) for d, e in zip(dists, eps)]
        heapq.heapify(candidates)
        results = [(-d, e) for d, e in candidates]
        heapq.heapify(results)
        while candidates:
            dist, node = heapq.heappop(candidates)
            if dist > -results[0][0] and len(results) >= ef:
                break
            unvisited = [n for n in self._links[node][layer] if n not in visited]
            if not unvisited:
                continue
            visited.update(unvisited)
            ndists = 1.0 - self._vectors[unvisited] @ query
            worst = -results[0][0]
            for nd, nn in zip(ndists.tolist(), unvisited):
                if len(results) < ef or nd < worst:
                    heapq.heappush(candidates, (nd, nn))
                    heapq.heappush(results, (-nd, nn))
                    if len(results) > ef:
                        heapq.heappop(results)
                    worst = -results[0][0]
        return sorted((-d, n) for d, n in results)

    def search(self, vector, k: int) -> list[tuple[str, float]]:
        """Top-k (doc id, cosine distance), ascending distance."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if self._entry < 0:
            raise EmptyIndex("vector index is empty")
        q = self._normalize(vector)
        ep = self._entry
        for layer in range(self._max_level, 0, -1):
            ep = self._greedy_closest(q, ep, layer)
        found = self._search_layer(q, [ep], max(self.ef_search, k), 0)
        out = []
        for dist, node in found[:k]:
            out.append((self._ids[node], max(dist, 0.0)))
        return out

    # -- introspection for invariant checks and persistence ------------------

    def graph_layers(self, node: int) -> list[list[int]]:
        return self._links[node]

    def level_of(self, node: int) -> int:
        return self._levels[node]

    @property
    def entry_point(self) -> int:
        return self._entry

    def vector_of(self, node: int) -> np.ndarray:
        return self._vectors[node]

    def to_state(self) -> dict:
        return {
            "dim": self.dim,
            "m": self.m,
            "ef_construction": self.ef_construction,
            "ef_search": self.ef_search,
            "ids": list(self._ids),
            "levels": list(self._levels),
            "links": self._links,
            "entry": self._entry,
            "max_level": self._max_level,
        }

    def load_state(self, state: dict, vectors: np.ndarray) -> None:
        self.dim = state["dim"]
        self.m = state["m"]
        self.m0 = 2 * self.m
        self.ef_construction = state["ef_construction"]
        self.ef_search = state["ef_search"]
        self._ids = list(state["ids"])
        self._levels = list(state["levels"])
        self._links = [[list(lvl) for lvl in node] for node in state["links"]]
        self._entry = state["entry"]
        self._max_level = state["max_level"]
        self._vectors = np.asarray(vectors, dtype=np.float32)
