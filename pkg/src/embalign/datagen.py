"""Seeded synthetic corpus with known latent ground truth.

Construction: n_concepts unit latent directions, each query gets a base
latent jittered around its concept (concept_spread), and each query/target
pair shares that base latent with per-item noise of amplitude
view_noise_sigma added in latent space before the fixed linear view maps
(query items through A_q, candidate items through A_c). At sigma=0 the
query and its target have identical latents, so their relevance is exactly
1.0 and the target is the unique relevance argmax.

Candidate mix beyond the targets:
  - distractors (distractor_ratio of all candidates): fresh random latents,
    relevance ~0.06 to everything;
  - near-duplicates (near_dup_ratio): planted at an exact latent angle
    (near_dup_cos) from some query's base, close enough to land above the
    false-negative threshold alpha when sigma=0;
  - the rest: concept siblings at concept_spread, giving graded mid-range
    relevance.

relevance(q, c) = clamp((cos(latent_q, latent_c)+1)/2)^relevance_exponent,
recomputable from the persisted latents.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus, Item, derive_rng


@dataclass(frozen=True)
class LatentCorpusSpec:
    n_concepts: int
    n_queries: int
    n_candidates: int
    latent_dim: int
    raw_dim: int
    view_noise_sigma: float
    distractor_ratio: float
    seed: int
    near_dup_ratio: float = 0.0
    near_dup_cos: float = 0.997
    concept_spread: float = 0.2
    relevance_exponent: float = 4.0

    def __post_init__(self):
        if self.n_queries < 1 or self.n_candidates < self.n_queries:
            raise ValueError("need n_candidates >= n_queries >= 1")
        if self.n_concepts < 1:
            raise ValueError("need at least one concept")
        if self.view_noise_sigma < 0:
            raise ValueError("view_noise_sigma must be >= 0")
        if not (0.0 <= self.distractor_ratio <= 1.0 and 0.0 <= self.near_dup_ratio <= 1.0):
            raise ValueError("ratios must lie in [0,1]")
        if self.latent_dim < 2 or self.raw_dim < 1:
            raise ValueError("latent_dim must be >= 2 and raw_dim >= 1")
        planted = self.n_queries + self._n_distractors() + self._n_near_dups()
        if planted > self.n_candidates:
            raise ValueError(
                f"targets + distractors + near-dups = {planted} exceed n_candidates={self.n_candidates}"
            )

    def _n_distractors(self) -> int:
        return int(round(self.distractor_ratio * self.n_candidates))

    def _n_near_dups(self) -> int:
        return int(round(self.near_dup_ratio * self.n_candidates))


@dataclass
class GroundTruth:
    """Per-item latents plus everything needed to recompute relevance."""

    latents: dict[str, np.ndarray]
    targets: dict[str, str]
    relevance_exponent: float

    def relevance(self, query_id: str, candidate_id: str) -> float:
        if query_id not in self.latents:
            raise KeyError(f"unknown query id {query_id!r}")
        if candidate_id not in self.latents:
            raise KeyError(f"unknown candidate id {candidate_id!r}")
        # Delegates to the batch path so single and batched judging agree
        # to the last bit.
        return float(self.relevance_many(query_id, [candidate_id])[0])

    def relevance_many(self, query_id: str, candidate_ids: list[str]) -> np.ndarray:
        """Relevance of one query against many candidates.

        Per-pair dot products rather than one matrix product: BLAS batches
        accumulate in a different order than single rows, and batched
        judging is contractually bit-identical to sequential judging.
        """
        zq = self.latents[query_id]
        zq = zq / np.linalg.norm(zq)
        cos = np.empty(len(candidate_ids))
        for i, cid in enumerate(candidate_ids):
            zc = self.latents[cid]
            cos[i] = np.dot(zc / np.linalg.norm(zc), zq)
        cos = np.clip(cos, -1.0, 1.0)
        return np.clip((cos + 1.0) / 2.0, 0.0, 1.0) ** self.relevance_exponent


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _rotate_to_exact_cos(anchor: np.ndarray, rng: np.random.Generator, target_cos: float) -> np.ndarray:
    """Unit vector at exactly arccos(target_cos) from the unit anchor."""
    eps = rng.standard_normal(anchor.shape[0])
    perp = eps - np.dot(eps, anchor) * anchor
    norm = np.linalg.norm(perp)
    while norm < 1e-12:  # pathological draw, retry
        eps = rng.standard_normal(anchor.shape[0])
        perp = eps - np.dot(eps, anchor) * anchor
        norm = np.linalg.norm(perp)
    perp = perp / norm
    sin = float(np.sqrt(max(0.0, 1.0 - target_cos**2)))
    return _unit(target_cos * anchor + sin * perp)


def generate(spec: LatentCorpusSpec) -> tuple[Corpus, GroundTruth]:
    """Build the corpus and its ground truth, bit-reproducible under spec.seed."""
    rng = derive_rng(spec.seed, "datagen")
    d = spec.latent_dim

    concepts = rng.standard_normal((spec.n_concepts, d))
    concepts /= np.linalg.norm(concepts, axis=1, keepdims=True)

    view_q = rng.standard_normal((spec.raw_dim, d)) / np.sqrt(d)
    view_c = rng.standard_normal((spec.raw_dim, d)) / np.sqrt(d)

    def noisy(base: np.ndarray) -> np.ndarray:
        if spec.view_noise_sigma == 0.0:
            return base.copy()
        return _unit(base + spec.view_noise_sigma * rng.standard_normal(d))

    query_bases = np.empty((spec.n_queries, d))
    latents: dict[str, np.ndarray] = {}
    targets: dict[str, str] = {}
    items: list[Item] = []

    query_ids = [f"q{i:05d}" for i in range(spec.n_queries)]
    cand_ids = [f"c{i:05d}" for i in range(spec.n_candidates)]

    for i, qid in enumerate(query_ids):
        concept = concepts[i % spec.n_concepts]
        base = _unit(concept + spec.concept_spread * rng.standard_normal(d))
        query_bases[i] = base
        z_query = noisy(base)
        z_target = noisy(base)
        latents[qid] = z_query
        latents[cand_ids[i]] = z_target
        targets[qid] = cand_ids[i]

    n_dup = spec._n_near_dups()
    n_distract = spec._n_distractors()
    for j in range(spec.n_queries, spec.n_candidates):
        cid = cand_ids[j]
        slot = j - spec.n_queries
        if slot < n_dup:
            anchor_idx = int(rng.integers(0, spec.n_queries))
            latents[cid] = _rotate_to_exact_cos(query_bases[anchor_idx], rng, spec.near_dup_cos)
        elif slot < n_dup + n_distract:
            latents[cid] = _unit(rng.standard_normal(d))
        else:
            concept = concepts[j % spec.n_concepts]
            base = _unit(concept + spec.concept_spread * rng.standard_normal(d))
            latents[cid] = noisy(base)

    for i, qid in enumerate(query_ids):
        items.append(Item(qid, "query_text", view_q @ latents[qid]))
    for j, cid in enumerate(cand_ids):
        modality = "candidate_text" if j % 2 == 0 else "candidate_image"
        items.append(Item(cid, modality, view_c @ latents[cid]))

    corpus = Corpus(
        items=items,
        queries=[(qid, targets[qid]) for qid in query_ids],
        candidates=cand_ids,
    )
    gt = GroundTruth(latents=latents, targets=targets, relevance_exponent=spec.relevance_exponent)
    return corpus, gt


GROUND_TRUTH_FORMAT_VERSION = 1


def save_ground_truth(path: str | Path, gt: GroundTruth) -> None:
    payload = {
        "format_version": GROUND_TRUTH_FORMAT_VERSION,
        "relevance_exponent": gt.relevance_exponent,
        "targets": gt.targets,
        "latents": {k: [float(x) for x in v] for k, v in gt.latents.items()},
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_ground_truth(path: str | Path) -> GroundTruth:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    version = payload.get("format_version")
    if version != GROUND_TRUTH_FORMAT_VERSION:
        raise ValueError(f"unsupported ground-truth format_version {version!r}")
    return GroundTruth(
        latents={k: np.asarray(v, dtype=np.float64) for k, v in payload["latents"].items()},
        targets=dict(payload["targets"]),
        relevance_exponent=float(payload["relevance_exponent"]),
    )
