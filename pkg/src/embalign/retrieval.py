"""Exact top-k cosine retrieval over unit-norm candidate embeddings.

Scores are plain dot products (rows are unit-norm, so dot == cosine).
Ranking is exact: full scan, sort by score descending with ties broken by
ascending candidate id, which keeps fixture tests deterministic. At desk
scale (tens of thousands of candidates) no ANN is warranted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RankedList:
    """Candidates sorted by score descending, ties by ascending id."""

    entries: tuple[tuple[str, float], ...]

    def ids(self) -> list[str]:
        return [cid for cid, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


class Index:
    """Immutable candidate index; rows must already be unit-norm."""

    def __init__(self, candidate_ids: list[str], embeddings: np.ndarray):
        if len(candidate_ids) == 0:
            raise ValueError("empty index is disallowed")
        if len(set(candidate_ids)) != len(candidate_ids):
            raise ValueError("duplicate candidate ids in index")
        emb = np.asarray(embeddings, dtype=np.float64)
        if emb.ndim != 2 or emb.shape[0] != len(candidate_ids):
            raise ValueError(f"embeddings shape {emb.shape} does not match {len(candidate_ids)} ids")
        norms = np.linalg.norm(emb, axis=1)
        worst = float(np.max(np.abs(norms - 1.0)))
        if worst > 1e-9:
            raise ValueError(f"index rows must be unit-norm within 1e-9 (worst deviation {worst:.3e})")
        self._ids = np.array(candidate_ids)
        # Rank of each id in ascending id order, for fast integer tie-breaks.
        self._id_rank = np.argsort(np.argsort(self._ids, kind="stable"), kind="stable")
        self._emb = emb.copy()
        self._emb.setflags(write=False)
        self.norm_checked = True

    @property
    def candidate_ids(self) -> list[str]:
        return list(self._ids)

    @property
    def size(self) -> int:
        return self._emb.shape[0]

    @property
    def embed_dim(self) -> int:
        return self._emb.shape[1]

    def scores(self, query_emb: np.ndarray) -> np.ndarray:
        q = np.asarray(query_emb, dtype=np.float64)
        if q.shape != (self.embed_dim,):
            raise ValueError(f"query embedding shape {q.shape}, index expects ({self.embed_dim},)")
        return self._emb @ q


def build_index(candidate_ids: list[str], embeddings: np.ndarray) -> Index:
    return Index(candidate_ids, embeddings)


def top_k(index: Index, query_emb: np.ndarray, k: int) -> RankedList:
    """The k highest-cosine candidates (all of them when k > n), exact.

    Partial selection: partition down to every candidate scoring at least
    the k-th largest score (so score ties at the boundary are never cut
    arbitrarily), then sort that subset by score descending with ties by
    ascending id.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = index.scores(query_emb)
    n = index.size
    kk = min(k, n)
    if kk < n:
        kth_score = -np.partition(-scores, kk - 1)[kk - 1]
        subset = np.flatnonzero(scores >= kth_score)
    else:
        subset = np.arange(n)
    # lexsort's last key is primary: score descending, then id ascending.
    order = subset[np.lexsort((index._id_rank[subset], -scores[subset]))]
    take = order[:kk]
    return RankedList(entries=tuple((str(index._ids[i]), float(scores[i])) for i in take))
