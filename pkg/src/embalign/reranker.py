"""Pair-scoring reranker: one logit head over [e_q, e_c, e_q*e_c].

The pair logit stands in for a yes/no judgment head: sigmoid(logit) is
P(YES) for pairwise training, and a softmax over the logits of a
candidate list drives listwise training. Joint objective per query is
pairwise + listwise; batches average. The encoder is frozen throughout,
so gradients stop at the reranker parameters.

Losses, with l = pair logit:
    pairwise  softplus(-l_pos) + softplus(l_neg)
              (cross-entropy of YES on the target pair and NO on the
              hardest mined negative)
    listwise  -log softmax(list logits)[target position], the target
              inserted at a seeded-random position among the top-x
              highest-score mined negatives
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Item, derive_rng, derive_seed
from .encoder import EncoderParams, encode_batch
from .miner import MinedSet
from .retrieval import RankedList


@dataclass(frozen=True)
class RerankerDims:
    embed_dim: int
    hidden_dim: int = 32

    @property
    def input_dim(self) -> int:
        return 3 * self.embed_dim


@dataclass
class RerankerParams:
    w1: np.ndarray  # (hidden, 3*embed)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: float
    dims: RerankerDims

    def copy(self) -> "RerankerParams":
        return RerankerParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), float(self.b2), self.dims)

    def arrays(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": np.array([self.b2])}

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2, [self.b2]])

    @staticmethod
    def from_flat(theta: np.ndarray, dims: RerankerDims) -> "RerankerParams":
        h, di = dims.hidden_dim, dims.input_dim
        sizes = [h * di, h, h, 1]
        if theta.size != sum(sizes):
            raise ValueError(f"flat parameter vector has {theta.size} entries, expected {sum(sizes)}")
        parts = np.split(theta, np.cumsum(sizes)[:-1])
        return RerankerParams(parts[0].reshape(h, di).copy(), parts[1].copy(), parts[2].copy(),
                              float(parts[3][0]), dims)


@dataclass
class RerankerGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float

    @staticmethod
    def zeros(dims: RerankerDims) -> "RerankerGrads":
        return RerankerGrads(
            np.zeros((dims.hidden_dim, dims.input_dim)), np.zeros(dims.hidden_dim),
            np.zeros(dims.hidden_dim), 0.0,
        )

    def add_(self, other: "RerankerGrads", scale: float = 1.0) -> None:
        self.w1 += scale * other.w1
        self.b1 += scale * other.b1
        self.w2 += scale * other.w2
        self.b2 += scale * other.b2

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2, [self.b2]])


def init_reranker_params(dims: RerankerDims, seed: int) -> RerankerParams:
    rng = np.random.default_rng(seed)
    bound1 = 1.0 / np.sqrt(dims.input_dim)
    bound2 = 1.0 / np.sqrt(dims.hidden_dim)
    return RerankerParams(
        w1=rng.uniform(-bound1, bound1, size=(dims.hidden_dim, dims.input_dim)),
        b1=rng.uniform(-bound1, bound1, size=dims.hidden_dim),
        w2=rng.uniform(-bound2, bound2, size=dims.hidden_dim),
        b2=float(rng.uniform(-bound2, bound2)),
        dims=dims,
    )


def zero_reranker_params(dims: RerankerDims) -> RerankerParams:
    return RerankerParams(
        w1=np.zeros((dims.hidden_dim, dims.input_dim)), b1=np.zeros(dims.hidden_dim),
        w2=np.zeros(dims.hidden_dim), b2=0.0, dims=dims,
    )


def _pair_features(query_emb: np.ndarray, cand_embs: np.ndarray) -> np.ndarray:
    q = np.asarray(query_emb, dtype=np.float64)
    c = np.atleast_2d(np.asarray(cand_embs, dtype=np.float64))
    if c.shape[1] != q.shape[0]:
        raise ValueError(f"embedding dim mismatch: query {q.shape[0]}, candidates {c.shape[1]}")
    qrep = np.broadcast_to(q, c.shape)
    return np.concatenate([qrep, c, qrep * c], axis=1)


@dataclass
class _PairCache:
    features: np.ndarray  # (m, 3*embed)
    hidden: np.ndarray  # (m, hidden)
    logits: np.ndarray  # (m,)


def _pair_forward(params: RerankerParams, query_emb: np.ndarray, cand_embs: np.ndarray) -> _PairCache:
    feats = _pair_features(query_emb, cand_embs)
    if feats.shape[1] != params.dims.input_dim:
        raise ValueError(f"feature width {feats.shape[1]} != reranker input {params.dims.input_dim}")
    hidden = np.tanh(feats @ params.w1.T + params.b1)
    logits = hidden @ params.w2 + params.b2
    return _PairCache(features=feats, hidden=hidden, logits=logits)


def _pair_backward(params: RerankerParams, cache: _PairCache, d_logits: np.ndarray) -> RerankerGrads:
    d_logits = np.asarray(d_logits, dtype=np.float64)
    d_w2 = cache.hidden.T @ d_logits
    d_b2 = float(np.sum(d_logits))
    d_hidden = d_logits[:, None] * params.w2
    d_act = d_hidden * (1.0 - cache.hidden**2)
    d_w1 = d_act.T @ cache.features
    d_b1 = d_act.sum(axis=0)
    return RerankerGrads(w1=d_w1, b1=d_b1, w2=d_w2, b2=d_b2)


def pair_logit(params: RerankerParams, query_emb: np.ndarray, cand_emb: np.ndarray) -> float:
    """Deterministic pair score; sigmoid of it reads as P(YES)."""
    return float(_pair_forward(params, query_emb, np.asarray(cand_emb)[None, :]).logits[0])


def _sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x: float) -> float:
    return float(max(x, 0.0) + np.log1p(np.exp(-abs(x))))


def pairwise_loss(params: RerankerParams, query_emb: np.ndarray, target_emb: np.ndarray,
                  hardest_emb: np.ndarray) -> tuple[float, RerankerGrads]:
    """Binary cross-entropy: YES on the target pair, NO on the hardest negative."""
    cache = _pair_forward(params, query_emb, np.stack([target_emb, hardest_emb]))
    l_pos, l_neg = cache.logits
    loss = _softplus(-l_pos) + _softplus(l_neg)
    sig = _sigmoid(cache.logits)
    d_logits = np.array([sig[0] - 1.0, sig[1]])
    return loss, _pair_backward(params, cache, d_logits)


def listwise_loss(params: RerankerParams, query_emb: np.ndarray, list_embs: np.ndarray,
                  target_index: int) -> tuple[float, RerankerGrads]:
    """Cross-entropy on the target's position within the candidate list."""
    m = np.atleast_2d(list_embs).shape[0]
    if not (0 <= target_index < m):
        raise ValueError(f"target index {target_index} outside list of length {m}")
    cache = _pair_forward(params, query_emb, list_embs)
    z = cache.logits - np.max(cache.logits)
    ez = np.exp(z)
    p = ez / np.sum(ez)
    loss = -float(np.log(p[target_index]))
    d_logits = p.copy()
    d_logits[target_index] -= 1.0
    return loss, _pair_backward(params, cache, d_logits)


@dataclass
class ListwiseSample:
    query: Item
    candidates: list[Item]  # x+1 entries, target at target_index
    target_index: int

    def __post_init__(self):
        if not (0 <= self.target_index < len(self.candidates)):
            raise ValueError("target index outside candidate list")


def build_listwise_sample(corpus: Corpus, mined: MinedSet, x: int, seed: int) -> ListwiseSample:
    """Top-x mined negatives by score, target inserted at a seeded position."""
    if x > len(mined.negatives):
        raise ValueError(f"query {mined.query_id!r}: mined set holds {len(mined.negatives)}, need x={x}")
    ranked = sorted(mined.negatives, key=lambda pair: -pair[1])[:x]
    rng = derive_rng(seed, "listwise-pos", mined.query_id)
    idx = int(rng.integers(0, x + 1))
    negs = [corpus.item(cid) for cid, _ in ranked]
    cands = negs[:idx] + [corpus.item(mined.target_id)] + negs[idx:]
    return ListwiseSample(query=corpus.item(mined.query_id), candidates=cands, target_index=idx)


@dataclass(frozen=True)
class RerankTrainConfig:
    x_list: int = 4
    batch_size: int = 32
    steps: int = 500
    lr: float = 0.2
    hidden_dim: int = 64

    def __post_init__(self):
        if self.x_list < 1:
            raise ValueError("x_list must be >= 1")
        if self.batch_size < 1 or self.steps < 0 or self.lr < 0:
            raise ValueError("batch_size >= 1, steps >= 0, lr >= 0 required")


@dataclass
class RerankTraceRecord:
    step: int
    loss: float


def train_reranker(corpus: Corpus, mined_sets: dict[str, MinedSet], encoder_params: EncoderParams,
                   config: RerankTrainConfig, seed: int, query_ids: list[str] | None = None,
                   ) -> tuple[RerankerParams, list[RerankTraceRecord]]:
    """Joint pairwise+listwise training against a frozen encoder."""
    if query_ids is None:
        query_ids = [qid for qid, _ in corpus.queries]
    for qid in query_ids:
        if qid not in mined_sets:
            raise KeyError(f"no mined set for query {qid!r}")

    # Frozen encoder: embed every item this run touches, once.
    needed: list[str] = []
    seen: set[str] = set()
    for qid in query_ids:
        mined = mined_sets[qid]
        for item_id in (qid, mined.target_id, *mined.negative_ids()):
            if item_id not in seen:
                seen.add(item_id)
                needed.append(item_id)
    emb_cache = encode_batch(encoder_params, [corpus.item(i) for i in needed]).embeddings
    emb_of = {item_id: emb_cache[i] for i, item_id in enumerate(needed)}

    samples = []
    for qid in query_ids:
        mined = mined_sets[qid]
        hardest_id = sorted(mined.negatives, key=lambda pair: -pair[1])[0][0]
        lw = build_listwise_sample(corpus, mined, config.x_list, seed)
        samples.append((qid, mined.target_id, hardest_id, [c.id for c in lw.candidates], lw.target_index))

    dims = RerankerDims(embed_dim=encoder_params.dims.embed_dim, hidden_dim=config.hidden_dim)
    params = init_reranker_params(dims, derive_seed(seed, "rerank-init"))
    rng = derive_rng(seed, "rerank-schedule")
    order: list[int] = []
    trace: list[RerankTraceRecord] = []
    for step in range(config.steps):
        if len(order) < config.batch_size:
            order.extend(rng.permutation(len(samples)).tolist())
        batch_idx = order[: config.batch_size]
        order = order[config.batch_size :]
        total = 0.0
        grads = RerankerGrads.zeros(dims)
        for i in batch_idx:
            qid, target_id, hardest_id, list_ids, t_idx = samples[i]
            q_emb = emb_of[qid]
            loss_p, g_p = pairwise_loss(params, q_emb, emb_of[target_id], emb_of[hardest_id])
            loss_l, g_l = listwise_loss(params, q_emb, np.stack([emb_of[c] for c in list_ids]), t_idx)
            total += loss_p + loss_l
            grads.add_(g_p, scale=1.0 / len(batch_idx))
            grads.add_(g_l, scale=1.0 / len(batch_idx))
        if config.lr > 0:
            for name, g in (("w1", grads.w1), ("b1", grads.b1), ("w2", grads.w2)):
                if not np.all(np.isfinite(g)):
                    raise ValueError(f"non-finite gradient in reranker {name}")
                getattr(params, name)[...] = getattr(params, name) - config.lr * g
            params.b2 = float(params.b2 - config.lr * grads.b2)
        trace.append(RerankTraceRecord(step=step, loss=total / len(batch_idx)))
    return params, trace


def rerank(reranker_params: RerankerParams, encoder_params: EncoderParams, query: Item,
           ranked: RankedList, corpus: Corpus) -> RankedList:
    """Reorder a retrieval list by pair logit; ties keep retrieval order."""
    if len(ranked) == 0:
        raise ValueError("cannot rerank an empty list")
    items = [corpus.item(cid) for cid in ranked.ids()]
    embs = encode_batch(encoder_params, [query, *items]).embeddings
    logits = _pair_forward(reranker_params, embs[0], embs[1:]).logits
    order = np.argsort(-logits, kind="stable")
    return RankedList(entries=tuple((ranked.entries[i][0], float(logits[i])) for i in order))
