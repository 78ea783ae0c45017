"""Items, corpora, and the seeded RNG derivation used by every stage.

An Item is a raw feature vector plus a modality tag and a unique id. A
Corpus is the universe of queries and candidates; each query has exactly
one target candidate. Corpus files are line-delimited JSON, one item per
line with fields id / modality / features; the query->target pairing
lives in the ground-truth file (see datagen).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MODALITIES = ("query_text", "candidate_text", "candidate_image", "interleaved")


def derive_seed(root_seed: int, *names: str | int) -> int:
    """Stable per-stage/per-query RNG seed, hash(root_seed, *names).

    Python's builtin hash is salted per process, so this goes through
    sha256; parallel and sequential runs see identical streams.
    """
    tag = "|".join([str(root_seed), *[str(n) for n in names]])
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(root_seed: int, *names: str | int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root_seed, *names))


@dataclass(frozen=True)
class Item:
    id: str
    modality: str
    features: np.ndarray

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r} for item {self.id!r}")
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 1:
            raise ValueError(f"item {self.id!r} features must be 1-d, got shape {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise ValueError(f"item {self.id!r} has non-finite features")
        object.__setattr__(self, "features", feats)


@dataclass
class Corpus:
    items: list[Item]
    queries: list[tuple[str, str]]  # (query_id, target_candidate_id)
    candidates: list[str]
    by_id: dict[str, Item] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.by_id = {}
        for item in self.items:
            if item.id in self.by_id:
                raise ValueError(f"duplicate item id {item.id!r}")
            self.by_id[item.id] = item
        cand_set = set(self.candidates)
        if len(cand_set) != len(self.candidates):
            raise ValueError("duplicate candidate ids")
        seen_queries = set()
        for qid, tid in self.queries:
            if qid not in self.by_id:
                raise ValueError(f"query {qid!r} references no item")
            if tid not in cand_set:
                raise ValueError(f"query {qid!r} target {tid!r} is not a candidate")
            if qid in seen_queries:
                raise ValueError(f"query {qid!r} listed twice")
            seen_queries.add(qid)
        for cid in self.candidates:
            if cid not in self.by_id:
                raise ValueError(f"candidate {cid!r} references no item")

    def item(self, item_id: str) -> Item:
        try:
            return self.by_id[item_id]
        except KeyError:
            raise KeyError(f"unknown item id {item_id!r}") from None

    def target_of(self, query_id: str) -> str:
        for qid, tid in self.queries:
            if qid == query_id:
                return tid
        raise KeyError(f"unknown query id {query_id!r}")


def save_corpus(path: str | Path, corpus: Corpus) -> None:
    """One JSON record per item: {"id", "modality", "features"}."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for item in corpus.items:
            rec = {
                "id": item.id,
                "modality": item.modality,
                "features": [float(x) for x in item.features],
            }
            fh.write(json.dumps(rec) + "\n")


def load_corpus(path: str | Path, queries: list[tuple[str, str]]) -> Corpus:
    """Rebuild a Corpus from an items file plus the query->target pairing.

    Queries are the items whose modality is query_text; everything else is
    a candidate. The pairing comes from the ground-truth file.
    """
    items = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                items.append(Item(rec["id"], rec["modality"], np.array(rec["features"])))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"malformed corpus record at line {lineno}: {exc}") from exc
    candidates = [it.id for it in items if it.modality != "query_text"]
    return Corpus(items=items, queries=queries, candidates=candidates)
