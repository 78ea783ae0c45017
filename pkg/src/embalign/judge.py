"""Semantic-alignment judging of (query, candidate) pairs, scored in [0,1].

The score is the two-token softmax over a yes-logit and a no-logit,
sigmoid(yes - no) computed with max subtraction. Applied to raw
(possibly negative) logits the plain ratio e_y/(e_y+e_n) can leave [0,1];
the softmax form agrees with that ratio whenever the two values are
already exponentiated token scores and is well-defined always.

Two implementations:
  OracleJudge  — scores straight from synthetic ground-truth relevance,
                 plus optional seeded noise, so tests can dial judge
                 quality from perfect to useless.
  RemoteJudge  — JSON-over-HTTP client for any served judge model; the
                 request carries the verbatim pair-judging prompt template
                 and opaque query/candidate payloads, the response carries
                 yes_logit/no_logit.

Scores are cached by (query_id, candidate_id); cache flushes are atomic
(write temp, then rename).
"""

from __future__ import annotations

import json
import math
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .corpus import Item, derive_rng
from .datagen import GroundTruth

PAIR_JUDGE_PROMPT_ID = "pair-judge-v1"
PAIR_JUDGE_PROMPT_TEMPLATE = (
    "I will provide you with a query and a candidate. Please evaluate whether "
    "the candidate meets the requirements of the query. If it does, respond "
    "with 'Yes'; if it doesn't, respond with 'No'. "
    "Query:<Query>, Candidates:<Candidate>."
)


class JudgeError(Exception):
    """Base class for judging failures."""


class JudgeTransportError(JudgeError):
    """Remote judge unreachable after the configured retries."""


class JudgeProtocolError(JudgeError):
    """Remote judge answered with something other than the wire contract."""


def two_token_score(yes_logit: float, no_logit: float) -> float:
    """Two-token softmax probability of the yes token, always in [0,1]."""
    if not (math.isfinite(yes_logit) and math.isfinite(no_logit)):
        raise ValueError("logits must be finite")
    m = max(yes_logit, no_logit)
    ey = math.exp(yes_logit - m)
    en = math.exp(no_logit - m)
    return ey / (ey + en)


@dataclass(frozen=True)
class JudgeResponse:
    yes_logit: float
    no_logit: float

    @property
    def score(self) -> float:
        return two_token_score(self.yes_logit, self.no_logit)


class Judge(Protocol):
    def judge_pair(self, query: Item, candidate: Item) -> float: ...


class OracleJudge:
    """Ground-truth-backed judge: score = clamp(relevance + noise, 0, 1).

    Pure function of (ground truth, noise amplitude, noise seed): the
    per-pair noise stream is derived from the pair ids, so repeated and
    concurrent calls always agree.
    """

    def __init__(self, ground_truth: GroundTruth, noise: float = 0.0, seed: int = 0):
        if noise < 0:
            raise ValueError("noise amplitude must be >= 0")
        self.gt = ground_truth
        self.noise = noise
        self.seed = seed

    def _noise_for(self, query_id: str, candidate_id: str) -> float:
        if self.noise == 0.0:
            return 0.0
        rng = derive_rng(self.seed, "judge-noise", query_id, candidate_id)
        return self.noise * float(rng.standard_normal())

    def judge_pair(self, query: Item, candidate: Item) -> float:
        rel = self.gt.relevance(query.id, candidate.id)
        return float(np.clip(rel + self._noise_for(query.id, candidate.id), 0.0, 1.0))

    def judge_many(self, query: Item, candidates: list[Item]) -> list[float]:
        rels = self.gt.relevance_many(query.id, [c.id for c in candidates])
        if self.noise == 0.0:
            return [float(np.clip(r, 0.0, 1.0)) for r in rels]
        return [
            float(np.clip(r + self._noise_for(query.id, c.id), 0.0, 1.0))
            for r, c in zip(rels, candidates)
        ]


def _item_payload(item: Item) -> dict:
    return {"id": item.id, "modality": item.modality, "features": [float(x) for x in item.features]}


class RemoteJudge:
    """HTTP client for a served judge; request/response bodies are JSON.

    Request:  {prompt_template_id, prompt_template, query, candidate}
    Response: {yes_logit: float, no_logit: float}

    Transport failures (connection refused, timeouts, 5xx) are retried up
    to `retries` times with a short backoff, then raised as
    JudgeTransportError naming the pair. Malformed responses are permanent
    JudgeProtocolError.
    """

    def __init__(self, endpoint: str, retries: int = 3, timeout: float = 10.0,
                 backoff: float = 0.05, max_workers: int = 1):
        if retries < 0 or max_workers < 1:
            raise ValueError("retries must be >= 0 and max_workers >= 1")
        self.endpoint = endpoint
        self.retries = retries
        self.timeout = timeout
        self.backoff = backoff
        self.max_workers = max_workers

    def _post(self, body: dict) -> dict:
        data = json.dumps(body).encode("utf-8")
        req = urllib.request.Request(
            self.endpoint, data=data, headers={"Content-Type": "application/json"}, method="POST"
        )
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            return json.loads(resp.read().decode("utf-8"))

    def judge_pair(self, query: Item, candidate: Item) -> float:
        body = {
            "prompt_template_id": PAIR_JUDGE_PROMPT_ID,
            "prompt_template": PAIR_JUDGE_PROMPT_TEMPLATE,
            "query": _item_payload(query),
            "candidate": _item_payload(candidate),
        }
        pair = f"({query.id}, {candidate.id})"
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                payload = self._post(body)
            except urllib.error.HTTPError as exc:
                if exc.code >= 500:
                    last_exc = exc
                    time.sleep(self.backoff * (attempt + 1))
                    continue
                raise JudgeProtocolError(f"judge rejected pair {pair}: HTTP {exc.code}") from exc
            except (urllib.error.URLError, TimeoutError, ConnectionError, OSError) as exc:
                last_exc = exc
                time.sleep(self.backoff * (attempt + 1))
                continue
            try:
                resp = JudgeResponse(float(payload["yes_logit"]), float(payload["no_logit"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise JudgeProtocolError(f"malformed judge response for pair {pair}: {payload!r}") from exc
            return resp.score
        raise JudgeTransportError(
            f"judge unreachable for pair {pair} after {self.retries + 1} attempts: {last_exc}"
        )

    def judge_many(self, query: Item, candidates: list[Item]) -> list[float]:
        if self.max_workers == 1 or len(candidates) <= 1:
            return [self.judge_pair(query, c) for c in candidates]
        with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
            return list(pool.map(lambda c: self.judge_pair(query, c), candidates))


class ScoreCache:
    """(query_id, candidate_id) -> score map with line-delimited persistence.

    One JSON record per line; reads are idempotent, flush() rewrites the
    whole map through a temp file and an atomic rename.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._scores: dict[tuple[str, str], float] = {}
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        with self.path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    self._scores[(rec["query_id"], rec["candidate_id"])] = float(rec["score"])
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise ValueError(f"malformed cache record at line {lineno}: {exc}") from exc

    def __len__(self) -> int:
        return len(self._scores)

    def get(self, query_id: str, candidate_id: str) -> float | None:
        return self._scores.get((query_id, candidate_id))

    def put(self, query_id: str, candidate_id: str, score: float) -> None:
        self._scores[(query_id, candidate_id)] = float(score)

    def flush(self) -> None:
        if self.path is None:
            return
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        with tmp.open("w", encoding="utf-8") as fh:
            for (qid, cid), score in sorted(self._scores.items()):
                fh.write(json.dumps({"query_id": qid, "candidate_id": cid, "score": score}) + "\n")
        tmp.replace(self.path)


def judge_batch(judge: Judge, pairs: list[tuple[Item, Item]], cache: ScoreCache | None = None) -> list[float]:
    """Score pairs in order; cache hits and in-batch duplicates judged once."""
    if not pairs:
        raise ValueError("judge_batch needs at least one pair")
    results: dict[tuple[str, str], float] = {}
    todo: list[tuple[Item, Item]] = []
    for query, cand in pairs:
        key = (query.id, cand.id)
        if key in results:
            continue
        hit = cache.get(*key) if cache is not None else None
        if hit is not None:
            results[key] = hit
        else:
            results[key] = math.nan
            todo.append((query, cand))

    by_query: dict[str, list[Item]] = {}
    query_items: dict[str, Item] = {}
    for query, cand in todo:
        by_query.setdefault(query.id, []).append(cand)
        query_items[query.id] = query
    for qid, cands in by_query.items():
        query = query_items[qid]
        if hasattr(judge, "judge_many"):
            scores = judge.judge_many(query, cands)
        else:
            scores = [judge.judge_pair(query, c) for c in cands]
        for cand, score in zip(cands, scores):
            results[(qid, cand.id)] = float(score)
            if cache is not None:
                cache.put(qid, cand.id, float(score))
    return [results[(q.id, c.id)] for q, c in pairs]
