"""Distribution-alignment training of the encoder.

Per query with target-first candidates {c_t, c_1..c_k}: P is the
temperature softmax over the query-candidate cosines, Q the same softmax
over the judge scores (a constant target, no gradient flows through it),
and the loss is the batch mean of the symmetrized KL between them. The
one-hot mode replaces Q with the target indicator, i.e. plain
cross-entropy over the same softmax — the ablation baseline.

Gradient of the symmetrized KL through the softmax, per example, with
g_a = dLoss/dP_a = 0.5 * (log(P_a/Q_a) + 1 - Q_a/P_a):

    dLoss/dz_j = P_j * (g_j - sum_a g_a P_a),   z = cosines / tau

then dz/d(cosine) = 1/tau and the cosine of unit embeddings is their dot
product, so gradients reach the encoder through each embedding. All
reductions run in batch order; results are bit-stable under a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .corpus import Corpus, Item, derive_rng
from .encoder import EncoderGrads, EncoderParams, SGD, encode_backward_batch, encode_batch
from .mathutils import softmax_t
from .miner import MinedSet


@dataclass(frozen=True)
class AlignConfig:
    tau: float = 0.02
    k_negatives: int = 8
    batch_size: int = 32
    steps: int = 500
    lr: float = 0.01
    momentum: float = 0.0
    score_tau: float | None = None  # optional override for the judge-score softmax
    mode: str = "soft"  # "soft" (judge-score Q) or "one_hot" (ablation baseline)

    def __post_init__(self):
        if self.tau <= 0 or (self.score_tau is not None and self.score_tau <= 0):
            raise ValueError("temperatures must be positive")
        if self.k_negatives < 1:
            raise ValueError("k_negatives must be >= 1")
        if self.batch_size < 1 or self.steps < 0 or self.lr < 0:
            raise ValueError("batch_size >= 1, steps >= 0, lr >= 0 required")
        if self.mode not in ("soft", "one_hot"):
            raise ValueError(f"mode must be 'soft' or 'one_hot', got {self.mode!r}")


@dataclass
class TrainingExample:
    query: Item
    target: Item
    negatives: list[Item]
    scores: np.ndarray  # (k+1,), target score first

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.shape != (len(self.negatives) + 1,):
            raise ValueError("scores must have one entry per candidate, target first")
        if np.any(self.scores < 0) or np.any(self.scores > 1):
            raise ValueError("judge scores must lie in [0,1]")

    @property
    def candidates(self) -> list[Item]:
        return [self.target, *self.negatives]


def relation_distribution(query_emb: np.ndarray, candidate_embs: np.ndarray, tau: float) -> np.ndarray:
    """Softmax over query-candidate cosines; candidate rows unit-norm, target first."""
    cands = np.asarray(candidate_embs, dtype=np.float64)
    if cands.ndim != 2 or cands.shape[0] < 2:
        raise ValueError("need a (k+1) x dim candidate matrix with k >= 1")
    if np.max(np.abs(np.linalg.norm(cands, axis=1) - 1.0)) > 1e-9 or abs(np.linalg.norm(query_emb) - 1.0) > 1e-9:
        raise ValueError("relation_distribution expects unit-norm embeddings")
    return softmax_t(cands @ np.asarray(query_emb, dtype=np.float64), tau)


def score_distribution(scores: np.ndarray, tau: float) -> np.ndarray:
    """Softmax over judge scores, the soft supervision target."""
    s = np.asarray(scores, dtype=np.float64)
    if np.any(s < 0) or np.any(s > 1):
        raise ValueError("judge scores must lie in [0,1]")
    return softmax_t(s, tau)


def select_negatives(mined: MinedSet, k: int) -> list[tuple[str, float]]:
    """The k highest-score mined negatives; stable under score ties."""
    if k > len(mined.negatives):
        raise ValueError(
            f"query {mined.query_id!r}: mined set holds {len(mined.negatives)} negatives, need k={k}"
        )
    ranked = sorted(mined.negatives, key=lambda pair: -pair[1])
    return ranked[:k]


def build_training_examples(corpus: Corpus, mined_sets: dict[str, MinedSet],
                            query_ids: list[str], k: int) -> list[TrainingExample]:
    examples = []
    for qid in query_ids:
        if qid not in mined_sets:
            raise KeyError(f"no mined set for query {qid!r}")
        mined = mined_sets[qid]
        chosen = select_negatives(mined, k)
        examples.append(
            TrainingExample(
                query=corpus.item(qid),
                target=corpus.item(mined.target_id),
                negatives=[corpus.item(cid) for cid, _ in chosen],
                scores=np.array([mined.target_score, *[s for _, s in chosen]]),
            )
        )
    return examples


def alignment_loss(examples: list[TrainingExample], params: EncoderParams, tau: float,
                   score_tau: float | None = None, mode: str = "soft") -> tuple[float, EncoderGrads]:
    """Batch-mean loss and encoder gradients; Q is constant, P carries grads."""
    if not examples:
        raise ValueError("empty batch")
    if mode not in ("soft", "one_hot"):
        raise ValueError(f"unknown mode {mode!r}")
    n = len(examples)
    total = 0.0
    grads = EncoderGrads.zeros(params.dims)
    for ex in examples:
        items = [ex.query, *ex.candidates]
        cache = encode_batch(params, items)
        e_q = cache.embeddings[0]
        cands = cache.embeddings[1:]
        cosines = cands @ e_q
        p = softmax_t(cosines, tau)
        if mode == "soft":
            q = softmax_t(ex.scores, score_tau if score_tau is not None else tau)
            loss_i = 0.5 * float(np.sum(p * np.log(p / q)) + np.sum(q * np.log(q / p)))
            g = 0.5 * (np.log(p / q) + 1.0 - q / p)
        else:
            loss_i = -float(np.log(p[0]))
            g = None
        if not np.isfinite(loss_i):
            raise ValueError(f"non-finite loss for query {ex.query.id!r}")
        total += loss_i
        if mode == "soft":
            dz = p * (g - float(np.dot(g, p)))
        else:
            dz = p.copy()
            dz[0] -= 1.0
        dcos = dz / tau
        grad_emb = np.empty_like(cache.embeddings)
        grad_emb[0] = cands.T @ dcos
        grad_emb[1:] = dcos[:, None] * e_q
        grads.add_(encode_backward_batch(params, cache, grad_emb), scale=1.0 / n)
    return total / n, grads


@dataclass
class TraceRecord:
    step: int
    loss: float
    p_at_1: float | None = None


def train(corpus: Corpus, mined_sets: dict[str, MinedSet], config: AlignConfig,
          init_params: EncoderParams, seed: int,
          query_ids: list[str] | None = None, eval_every: int = 0,
          eval_fn: Callable[[EncoderParams], float] | None = None,
          ) -> tuple[EncoderParams, list[TraceRecord]]:
    """Seeded-shuffle minibatch training; deterministic for fixed inputs.

    The schedule covers query_ids (default: every corpus query); each
    scheduled query must have a mined set. config.mode picks the soft
    judge-score target or the one-hot ablation baseline.
    """
    mode = config.mode
    if query_ids is None:
        query_ids = [qid for qid, _ in corpus.queries]
    examples = build_training_examples(corpus, mined_sets, query_ids, config.k_negatives)

    params = init_params.copy()
    optimizer = SGD(lr=config.lr, momentum=config.momentum) if config.lr > 0 else None
    rng = derive_rng(seed, "align-schedule", mode)
    order: list[int] = []
    trace: list[TraceRecord] = []
    for step in range(config.steps):
        if len(order) < config.batch_size:
            order.extend(rng.permutation(len(examples)).tolist())
        batch_idx = order[: config.batch_size]
        order = order[config.batch_size :]
        batch = [examples[i] for i in batch_idx]
        loss, grads = alignment_loss(batch, params, config.tau, config.score_tau, mode)
        if optimizer is not None:
            params = optimizer.step(params, grads)
        record = TraceRecord(step=step, loss=loss)
        if eval_fn is not None and eval_every > 0 and (step + 1) % eval_every == 0:
            record.p_at_1 = eval_fn(params)
        trace.append(record)
    return params, trace
