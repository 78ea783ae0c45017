"""Toy differentiable encoder: affine -> tanh -> affine -> L2 normalize.

One shared network for all modalities with a one-hot modality tag appended
to the raw features, so the input width is D_raw + 4. Backpropagation is
written out by hand and checked against central finite differences; the
normalization layer backward uses the (I - e e^T)/r projection.

Gradient accumulation over a batch walks items in their given order, so
results are bit-reproducible for a fixed seed regardless of thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import MODALITIES, Item

MODALITY_INDEX = {m: i for i, m in enumerate(MODALITIES)}
N_MODALITIES = len(MODALITIES)


@dataclass(frozen=True)
class EncoderDims:
    raw_dim: int
    hidden_dim: int = 64
    embed_dim: int = 32

    @property
    def input_dim(self) -> int:
        return self.raw_dim + N_MODALITIES


@dataclass
class EncoderParams:
    w1: np.ndarray  # (hidden, input)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (embed, hidden)
    b2: np.ndarray  # (embed,)
    dims: EncoderDims

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(), self.dims)

    def arrays(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    @staticmethod
    def from_flat(theta: np.ndarray, dims: EncoderDims) -> "EncoderParams":
        h, di, de = dims.hidden_dim, dims.input_dim, dims.embed_dim
        sizes = [h * di, h, de * h, de]
        if theta.size != sum(sizes):
            raise ValueError(f"flat parameter vector has {theta.size} entries, expected {sum(sizes)}")
        parts = np.split(theta, np.cumsum(sizes)[:-1])
        return EncoderParams(
            parts[0].reshape(h, di).copy(), parts[1].copy(), parts[2].reshape(de, h).copy(), parts[3].copy(), dims
        )


@dataclass
class EncoderGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @staticmethod
    def zeros(dims: EncoderDims) -> "EncoderGrads":
        return EncoderGrads(
            np.zeros((dims.hidden_dim, dims.input_dim)),
            np.zeros(dims.hidden_dim),
            np.zeros((dims.embed_dim, dims.hidden_dim)),
            np.zeros(dims.embed_dim),
        )

    def add_(self, other: "EncoderGrads", scale: float = 1.0) -> None:
        self.w1 += scale * other.w1
        self.b1 += scale * other.b1
        self.w2 += scale * other.w2
        self.b2 += scale * other.b2

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])


def init_encoder_params(dims: EncoderDims, seed: int) -> EncoderParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init from a seeded generator."""
    rng = np.random.default_rng(seed)
    bound1 = 1.0 / np.sqrt(dims.input_dim)
    bound2 = 1.0 / np.sqrt(dims.hidden_dim)
    return EncoderParams(
        w1=rng.uniform(-bound1, bound1, size=(dims.hidden_dim, dims.input_dim)),
        b1=rng.uniform(-bound1, bound1, size=dims.hidden_dim),
        w2=rng.uniform(-bound2, bound2, size=(dims.embed_dim, dims.hidden_dim)),
        b2=rng.uniform(-bound2, bound2, size=dims.embed_dim),
        dims=dims,
    )


def _input_row(dims: EncoderDims, item: Item) -> np.ndarray:
    if item.features.shape[0] != dims.raw_dim:
        raise ValueError(
            f"item {item.id!r} has {item.features.shape[0]} features, encoder expects {dims.raw_dim}"
        )
    x = np.zeros(dims.input_dim)
    x[: dims.raw_dim] = item.features
    x[dims.raw_dim + MODALITY_INDEX[item.modality]] = 1.0
    return x


@dataclass
class ForwardCache:
    """Intermediates for a batch of items, kept for the backward pass."""

    x: np.ndarray  # (n, input)
    hidden: np.ndarray  # (n, hidden), post-tanh
    pre_norm: np.ndarray  # (n, embed)
    norms: np.ndarray  # (n,)
    embeddings: np.ndarray  # (n, embed), unit rows


def encode_batch(params: EncoderParams, items: list[Item]) -> ForwardCache:
    dims = params.dims
    x = np.stack([_input_row(dims, item) for item in items])
    hidden = np.tanh(x @ params.w1.T + params.b1)
    pre = hidden @ params.w2.T + params.b2
    norms = np.linalg.norm(pre, axis=1)
    if np.any(norms == 0.0):
        bad = items[int(np.argmin(norms))].id
        raise ValueError(f"degenerate parameters: zero pre-normalization vector for item {bad!r}")
    emb = pre / norms[:, None]
    return ForwardCache(x=x, hidden=hidden, pre_norm=pre, norms=norms, embeddings=emb)


def encode(params: EncoderParams, item: Item) -> np.ndarray:
    """Unit-norm embedding of one item; ||e|| = 1 within 1e-12."""
    return encode_batch(params, [item]).embeddings[0]


def encode_backward_batch(params: EncoderParams, cache: ForwardCache, grad_emb: np.ndarray) -> EncoderGrads:
    """Parameter gradients given dLoss/dEmbedding for each cached item.

    Normalization backward: dY = (g - (g.e) e) / ||y|| rowwise, then the
    plain affine/tanh chain. Sums over the batch rows.
    """
    grad_emb = np.asarray(grad_emb, dtype=np.float64)
    if grad_emb.shape != cache.embeddings.shape:
        raise ValueError(f"grad shape {grad_emb.shape} != embeddings shape {cache.embeddings.shape}")
    if not np.all(np.isfinite(grad_emb)):
        raise ValueError("non-finite gradient w.r.t. embeddings")
    e = cache.embeddings
    proj = np.sum(grad_emb * e, axis=1, keepdims=True)
    d_pre = (grad_emb - proj * e) / cache.norms[:, None]
    d_w2 = d_pre.T @ cache.hidden
    d_b2 = d_pre.sum(axis=0)
    d_hidden = d_pre @ params.w2
    d_act = d_hidden * (1.0 - cache.hidden**2)
    d_w1 = d_act.T @ cache.x
    d_b1 = d_act.sum(axis=0)
    return EncoderGrads(w1=d_w1, b1=d_b1, w2=d_w2, b2=d_b2)


def encode_backward(params: EncoderParams, item: Item, grad_wrt_embedding: np.ndarray) -> EncoderGrads:
    cache = encode_batch(params, [item])
    return encode_backward_batch(params, cache, np.asarray(grad_wrt_embedding)[None, :])


class SGD:
    """Plain SGD with optional momentum; deterministic, in-place."""

    def __init__(self, lr: float, momentum: float = 0.0):
        if lr <= 0:
            raise ValueError(f"lr must be positive, got {lr}")
        if not (0.0 <= momentum < 1.0):
            raise ValueError(f"momentum must lie in [0,1), got {momentum}")
        self.lr = lr
        self.momentum = momentum
        self._velocity: dict[str, np.ndarray] | None = None

    def step(self, params: EncoderParams, grads: EncoderGrads) -> EncoderParams:
        grad_arrays = {"w1": grads.w1, "b1": grads.b1, "w2": grads.w2, "b2": grads.b2}
        for name, g in grad_arrays.items():
            if not np.all(np.isfinite(g)):
                raise ValueError(f"non-finite gradient in {name}")
        if self.momentum == 0.0:
            for name, p in params.arrays().items():
                p -= self.lr * grad_arrays[name]
            return params
        if self._velocity is None:
            self._velocity = {name: np.zeros_like(p) for name, p in params.arrays().items()}
        for name, p in params.arrays().items():
            v = self._velocity[name]
            v *= self.momentum
            v += grad_arrays[name]
            p -= self.lr * v
        return params
