"""Judge-guided hard-negative mining.

Per query: retrieve a generous candidate list from a frozen baseline
index (never the encoder being trained), drop the target and everything
at or above the similarity ceiling delta, keep the top pool_size as the
potential hard-negative pool, judge every pool pair plus the target pair,
drop false negatives whose score exceeds alpha = target_score - beta
(strictly: score == alpha is kept), then stride-sample the survivors.

Cyclic sampling with interval s over the ranked survivors: pass one takes
ranks 0, s, 2s, ...; pass two takes 1, s+1, ...; offsets keep advancing
until mined_size picks are collected. When fewer distinct survivors exist
than mined_size, earlier picks repeat in selection order. When no
candidate survives at all, the fallback draws mined_size candidates
uniformly (seeded per query) from the pre-filter retrieval list and pins
every score to fallback_score.

Mined-set files are line-delimited JSON, one record per query with fields
in this order: query_id, target_id, target_score, negatives (list of
[candidate_id, score] pairs, exactly mined_size of them), fallback_used.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus, Item, derive_rng
from .encoder import EncoderParams, encode
from .judge import Judge, ScoreCache, judge_batch
from .retrieval import Index, top_k


@dataclass(frozen=True)
class MinerConfig:
    delta: float
    pool_size: int = 50
    beta: float = 0.01
    cycle_interval: int = 5
    mined_size: int = 10
    fallback_score: float = 1.0

    def __post_init__(self):
        if not (self.pool_size >= self.mined_size >= 1):
            raise ValueError(f"need pool_size >= mined_size >= 1, got {self.pool_size} / {self.mined_size}")
        if not (0.0 < self.beta < 1.0):
            raise ValueError(f"beta must lie in (0,1), got {self.beta}")
        if self.cycle_interval < 1:
            raise ValueError(f"cycle_interval must be >= 1, got {self.cycle_interval}")


@dataclass
class CandidatePool:
    query_id: str
    entries: list[tuple[str, float]]  # (candidate_id, retrieval score), score desc
    judge_scores: list[float] | None = None


@dataclass
class MinedSet:
    query_id: str
    target_id: str
    target_score: float
    negatives: list[tuple[str, float]]
    fallback_used: bool

    def negative_ids(self) -> list[str]:
        return [cid for cid, _ in self.negatives]


def build_pool(query: Item, target_id: str, index: Index, baseline_params: EncoderParams,
               config: MinerConfig) -> CandidatePool:
    """Potential hard-negative pool: top pool_size below delta, target dropped.

    Retrieval fetches 2*pool_size (+1 for the target) before filtering so
    the ceiling rarely starves the pool.
    """
    query_emb = encode(baseline_params, query)
    ranked = top_k(index, query_emb, 2 * config.pool_size)
    kept = [
        (cid, score)
        for cid, score in ranked.entries
        if cid != target_id and score < config.delta
    ]
    return CandidatePool(query_id=query.id, entries=kept[: config.pool_size])


def filter_false_negatives(pool: CandidatePool, target_score: float, beta: float) -> list[tuple[str, float]]:
    """Survivors (candidate_id, judge_score) with score <= alpha, rank order kept.

    Exclusion is strict: a candidate is a false negative only when its
    score *exceeds* alpha = target_score - beta.
    """
    if pool.judge_scores is None or len(pool.judge_scores) != len(pool.entries):
        raise ValueError(f"pool for query {pool.query_id!r} has no aligned judge scores")
    alpha = target_score - beta
    return [
        (cid, score)
        for (cid, _), score in zip(pool.entries, pool.judge_scores)
        if score <= alpha
    ]


def cyclic_sample(survivors: list, interval: int, m: int) -> list | None:
    """Stride-interval picks over the ranked survivors, exactly m of them.

    Returns None when there are no survivors (fallback needed), never an
    error: empty survivors are an expected downstream condition.
    """
    if interval < 1 or m < 1:
        raise ValueError("interval and m must be >= 1")
    n = len(survivors)
    if n == 0:
        return None
    picks: list[int] = []
    for offset in range(interval):
        for i in range(offset, n, interval):
            picks.append(i)
            if len(picks) == m:
                return [survivors[j] for j in picks]
    # Fewer distinct survivors than m: duplicate earlier picks in selection order.
    out = list(picks)
    j = 0
    while len(out) < m:
        out.append(picks[j % len(picks)])
        j += 1
    return [survivors[i] for i in out]


def mine_query(query: Item, target_id: str, index: Index, baseline_params: EncoderParams,
               judge: Judge, config: MinerConfig, corpus: Corpus, seed: int,
               cache: ScoreCache | None = None) -> MinedSet:
    """Full mining pipeline for one query; deterministic given (corpus, config, seed)."""
    n_available = sum(1 for cid in corpus.candidates if cid != target_id)
    if n_available < config.mined_size:
        raise ValueError(
            f"corpus has {n_available} non-target candidates, need at least {config.mined_size}"
        )
    pool = build_pool(query, target_id, index, baseline_params, config)
    target_item = corpus.item(target_id)
    pairs = [(query, target_item)] + [(query, corpus.item(cid)) for cid, _ in pool.entries]
    scores = judge_batch(judge, pairs, cache=cache)
    target_score = scores[0]
    pool.judge_scores = scores[1:]

    survivors = filter_false_negatives(pool, target_score, config.beta)
    mined = cyclic_sample(survivors, config.cycle_interval, config.mined_size)
    if mined is not None:
        return MinedSet(
            query_id=query.id,
            target_id=target_id,
            target_score=target_score,
            negatives=mined,
            fallback_used=False,
        )

    # Fallback: nothing survived; draw from the pre-filter retrieval list.
    query_emb = encode(baseline_params, query)
    ranked = top_k(index, query_emb, config.pool_size + 1)
    fallback_ids = [cid for cid, _ in ranked.entries if cid != target_id][: config.pool_size]
    if len(fallback_ids) < config.mined_size:
        raise ValueError(
            f"query {query.id!r}: only {len(fallback_ids)} fallback candidates, need {config.mined_size}"
        )
    rng = derive_rng(seed, "mine-fallback", query.id)
    chosen = rng.choice(len(fallback_ids), size=config.mined_size, replace=False)
    negatives = [(fallback_ids[i], config.fallback_score) for i in sorted(chosen)]
    return MinedSet(
        query_id=query.id,
        target_id=target_id,
        target_score=target_score,
        negatives=negatives,
        fallback_used=True,
    )


def mine_corpus(corpus: Corpus, query_ids: list[str], index: Index, baseline_params: EncoderParams,
                judge: Judge, config: MinerConfig, seed: int,
                cache: ScoreCache | None = None) -> dict[str, MinedSet]:
    """Mine a set of queries; per-query RNG streams make order irrelevant."""
    targets = dict(corpus.queries)
    mined: dict[str, MinedSet] = {}
    for qid in query_ids:
        mined[qid] = mine_query(
            corpus.item(qid), targets[qid], index, baseline_params, judge, config, corpus, seed, cache
        )
    return mined


def persist_mined(path: str | Path, sets: list[MinedSet]) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for s in sets:
            rec = {
                "query_id": s.query_id,
                "target_id": s.target_id,
                "target_score": s.target_score,
                "negatives": [[cid, score] for cid, score in s.negatives],
                "fallback_used": s.fallback_used,
            }
            fh.write(json.dumps(rec) + "\n")


def load_mined(path: str | Path) -> list[MinedSet]:
    sets: list[MinedSet] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                sets.append(
                    MinedSet(
                        query_id=rec["query_id"],
                        target_id=rec["target_id"],
                        target_score=float(rec["target_score"]),
                        negatives=[(cid, float(score)) for cid, score in rec["negatives"]],
                        fallback_used=bool(rec["fallback_used"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"malformed mined-set record at line {lineno}: {exc}") from exc
    return sets
