"""Shared scalar/vector numerics: cosine, temperature softmax, KL divergences.

All arithmetic is 64-bit. The temperature softmax divides by tau *before*
max-subtraction: at tau=0.02 the logits reach +-50, so stabilization is
mandatory, not optional.

KL conventions: 0*log(0) := 0; a positive p entry over a zero q entry is a
contract violation (softmax outputs are strictly positive, so a zero there
means the caller fed something that never came out of softmax_t) and raises
instead of returning +-inf.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

ArrayLike = Sequence[float] | np.ndarray


def _as_vector(x: ArrayLike, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise ValueError(f"{name} must be a 1-d vector with at least one entry, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def cosine(u: ArrayLike, v: ArrayLike) -> float:
    """Cosine similarity dot(u,v)/(|u||v|), exactly 1.0 for v=u."""
    uv = _as_vector(u, "u")
    vv = _as_vector(v, "v")
    if uv.shape != vv.shape:
        raise ValueError(f"dimension mismatch: {uv.shape[0]} vs {vv.shape[0]}")
    nu = float(np.linalg.norm(uv))
    nv = float(np.linalg.norm(vv))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine undefined for zero vectors")
    if np.array_equal(uv, vv):  # sqrt(d)*sqrt(d) can round past d
        return 1.0
    return float(np.dot(uv, vv) / (nu * nv))


def softmax_t(x: ArrayLike, tau: float) -> np.ndarray:
    """Temperature softmax exp(x_i/tau) / sum_j exp(x_j/tau).

    Divides by tau first, then subtracts the max for stability, so the
    result is invariant to adding a constant to all inputs. Entries sum
    to 1 within 1e-12 and are strictly positive whenever the spread of
    x/tau stays below ~745 (exp underflow); cosines and judge scores at
    tau >= 0.01 sit far inside that.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    v = _as_vector(x, "x")
    z = v / tau
    z = z - np.max(z)
    e = np.exp(z)
    return e / np.sum(e)


def _check_distribution_pair(p: ArrayLike, q: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    pv = _as_vector(p, "p")
    qv = _as_vector(q, "q")
    if pv.shape != qv.shape:
        raise ValueError(f"length mismatch: {pv.shape[0]} vs {qv.shape[0]}")
    if pv.size < 2:
        raise ValueError("distributions need at least two entries")
    return pv, qv


def kl(p: ArrayLike, q: ArrayLike) -> float:
    """KL(p || q) = sum_i p_i log(p_i / q_i), with 0*log(0) = 0."""
    pv, qv = _check_distribution_pair(p, q)
    bad = (qv == 0.0) & (pv > 0.0)
    if np.any(bad):
        raise ValueError(f"q has zero mass at index {int(np.argmax(bad))} where p is positive")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(pv > 0.0, pv * np.log(pv / np.where(qv > 0.0, qv, 1.0)), 0.0)
    return float(np.sum(terms))


def sym_kl(p: ArrayLike, q: ArrayLike) -> float:
    """Symmetrized KL, 0.5*(KL(p||q) + KL(q||p)).

    Symmetric in its arguments bit-for-bit (IEEE addition commutes), zero
    iff p = q, and requires both supports to cover each other.
    """
    return 0.5 * (kl(p, q) + kl(q, p))


def finite_diff_grad(f: Callable[[np.ndarray], float], x: ArrayLike, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate.

    The independent oracle against which every analytic gradient in this
    package is checked; it never shares code with the paths it verifies.
    """
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    xv = _as_vector(x, "x").copy()
    grad = np.zeros_like(xv)
    for i in range(xv.size):
        orig = xv[i]
        xv[i] = orig + h
        f_plus = float(f(xv))
        xv[i] = orig - h
        f_minus = float(f(xv))
        xv[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise ValueError(f"f returned a non-finite value at coordinate {i}")
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Norm-relative disagreement ||a-b|| / max(1e-12, ||a||, ||b||).

    Elementwise ratios blow up on near-zero coordinates where central
    differences only carry ~1e-10 absolute accuracy; the norm form stays
    ~1e-8 for a correct gradient and ~1e-1 for a broken one.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(1e-12, float(np.linalg.norm(a)), float(np.linalg.norm(b)))
    return float(np.linalg.norm(a - b) / denom)
