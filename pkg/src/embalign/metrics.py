"""Retrieval evaluation metrics and the eval report container."""

from __future__ import annotations

from dataclasses import dataclass, field

from .retrieval import RankedList


def precision_at_1(ranked_lists: dict[str, RankedList], targets: dict[str, str]) -> float:
    """Fraction of queries whose rank-1 candidate is the target."""
    if not targets:
        raise ValueError("no queries to evaluate")
    hits = 0
    for qid, target in targets.items():
        if qid not in ranked_lists:
            raise KeyError(f"missing ranked list for query {qid!r}")
        ranked = ranked_lists[qid]
        if len(ranked) and ranked.entries[0][0] == target:
            hits += 1
    return hits / len(targets)


def recall_at_k(ranked_lists: dict[str, RankedList], targets: dict[str, str], k: int) -> float:
    """Fraction of queries whose target appears in the top k."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not targets:
        raise ValueError("no queries to evaluate")
    hits = 0
    for qid, target in targets.items():
        if qid not in ranked_lists:
            raise KeyError(f"missing ranked list for query {qid!r}")
        if target in ranked_lists[qid].ids()[:k]:
            hits += 1
    return hits / len(targets)


@dataclass
class EvalReport:
    precision_at_1: float
    recall_at_k: dict[int, float]
    hits: dict[str, int | None] = field(default_factory=dict)  # rank of target (1-based) or None
    fingerprint: str = ""

    def to_json(self) -> dict:
        return {
            "precision_at_1": self.precision_at_1,
            "recall_at_k": {str(k): v for k, v in self.recall_at_k.items()},
            "hits": self.hits,
            "fingerprint": self.fingerprint,
        }

    @staticmethod
    def from_json(payload: dict) -> "EvalReport":
        return EvalReport(
            precision_at_1=float(payload["precision_at_1"]),
            recall_at_k={int(k): float(v) for k, v in payload["recall_at_k"].items()},
            hits={k: (None if v is None else int(v)) for k, v in payload["hits"].items()},
            fingerprint=payload.get("fingerprint", ""),
        )


def build_report(ranked_lists: dict[str, RankedList], targets: dict[str, str],
                 recall_ks: list[int], fingerprint: str = "") -> EvalReport:
    hits: dict[str, int | None] = {}
    for qid, target in sorted(targets.items()):
        if qid not in ranked_lists:
            raise KeyError(f"missing ranked list for query {qid!r}")
        ids = ranked_lists[qid].ids()
        hits[qid] = ids.index(target) + 1 if target in ids else None
    return EvalReport(
        precision_at_1=precision_at_1(ranked_lists, targets),
        recall_at_k={k: recall_at_k(ranked_lists, targets, k) for k in recall_ks},
        hits=hits,
        fingerprint=fingerprint,
    )
