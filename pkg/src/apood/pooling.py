"""Attention-pooling primitives.

A query block W holds T query vectors. Pooling a sequence Z against W
first forms the S x T similarity matrix A (dot products, or negated
half squared Euclidean distances for the low-dimensional variant), then
applies a single softmax over *all* entries of A. The pooled head value
is the expectation of the similarities under those weights,

    h = sum_{s,t} p_st * a_st,   p = matrix_softmax(A, beta),

which for dot-product similarities coincides with first pooling Z into T
prototype tokens and contracting with W (the sequence-form computation,
kept here as an independent formulation for equivalence testing).

Streaming: the head value over a concatenation too large for memory is
accumulated chunk by chunk with two running quantities, the log-sum-exp
of beta-scaled similarities and the current weighted mean. Merging a new
chunk reweights the old mean by exp(lse_old - lse_new). This is
algebraically the same recurrence as a sigmoid-weighted merge of partial
pools, which is also provided (vector form) as a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import EmbeddingSequence
from .errors import ArgumentError, ShapeError

Similarity = str  # "dot" | "euclid"


def _tokens64(Z) -> np.ndarray:
    """Accept an EmbeddingSequence or a plain (S, D) array; return float64."""
    if isinstance(Z, EmbeddingSequence):
        return Z.tokens64()
    arr = np.asarray(Z, dtype=np.float64)
    if arr.ndim != 2:
        raise ArgumentError(f"expected (S, D) tokens, got shape {arr.shape}")
    return arr


def _queries64(W) -> np.ndarray:
    """Accept a (T, D) query block or a single (D,) query; return (T, D) float64."""
    arr = np.asarray(W, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ArgumentError(f"expected (T, D) queries, got shape {arr.shape}")
    return arr


def similarities(Z, W, kind: Similarity = "dot") -> np.ndarray:
    """S x T similarity matrix between tokens and queries."""
    toks = _tokens64(Z)
    qs = _queries64(W)
    if toks.shape[1] != qs.shape[1]:
        raise ShapeError(
            f"token dim {toks.shape[1]} does not match query dim {qs.shape[1]}"
        )
    if kind == "dot":
        return toks @ qs.T
    if kind == "euclid":
        d2 = ((toks[:, None, :] - qs[None, :, :]) ** 2).sum(axis=2)
        return -0.5 * d2
    raise ArgumentError(f"unknown similarity kind {kind!r}")


def matrix_softmax(sims: np.ndarray, beta: float) -> np.ndarray:
    """Softmax over every entry of an S x T matrix, max-shifted for stability.

    beta = 0 yields the uniform matrix 1/(S*T).
    """
    a = np.asarray(sims, dtype=np.float64)
    if a.size == 0:
        raise ArgumentError("matrix_softmax needs a non-empty matrix")
    if not np.all(np.isfinite(a)):
        raise ArgumentError("matrix_softmax needs finite entries")
    if beta < 0:
        raise ArgumentError(f"beta must be >= 0, got {beta}")
    scaled = beta * a
    e = np.exp(scaled - scaled.max())
    return e / e.sum()


def attn_pool_single(Z, w, beta: float) -> np.ndarray:
    """Pool tokens with weights softmax(beta * Z^T w); a single query vector.

    The result is a convex combination of the tokens.
    """
    toks = _tokens64(Z)
    a = similarities(toks, w, "dot")  # (S, 1)
    p = matrix_softmax(a, beta)
    return p[:, 0] @ toks


def attn_pool_euclid(Z, w, beta: float) -> np.ndarray:
    """Pool tokens with weights proportional to exp(-beta/2 * ||z_s - w||^2)."""
    toks = _tokens64(Z)
    a = similarities(toks, w, "euclid")
    p = matrix_softmax(a, beta)
    return p[:, 0] @ toks


@dataclass(frozen=True)
class PooledHead:
    """Scalar head value plus the attention matrix that produced it."""

    value: float
    attn: np.ndarray | None = None


def head_value(Z, W, beta: float, kind: Similarity = "dot") -> PooledHead:
    """Similarity-pooled head value h = sum_st p_st a_st."""
    a = similarities(Z, W, kind)
    p = matrix_softmax(a, beta)
    return PooledHead(value=float((p * a).sum()), attn=p)


def head_value_sequence_form(Z, W, beta: float) -> float:
    """Head value computed by pooling tokens first: <W, Z p>_F.

    Mathematically identical to head_value for dot-product similarities;
    kept as a structurally independent path for equivalence tests.
    """
    toks = _tokens64(Z)
    qs = _queries64(W)
    a = similarities(toks, qs, "dot")
    p = matrix_softmax(a, beta)
    pooled = p.T @ toks  # (T, D): T prototype tokens
    return float((qs * pooled).sum())


@dataclass
class StreamState:
    """Running (log-sum-exp, weighted mean) pair over beta-scaled similarities."""

    beta: float
    lse: float = -np.inf
    pooled: float = 0.0
    count: int = 0

    def absorb(self, sims: np.ndarray) -> None:
        a = np.asarray(sims, dtype=np.float64).ravel()
        if a.size == 0:
            return
        m = a.max()
        chunk_lse = self.beta * m + np.log(np.exp(self.beta * (a - m)).sum())
        p = np.exp(self.beta * a - chunk_lse)
        chunk_pooled = float(p @ a)
        new_lse = np.logaddexp(self.lse, chunk_lse)
        q = np.exp(chunk_lse - new_lse)
        self.pooled = q * chunk_pooled + (1.0 - q) * self.pooled
        self.lse = float(new_lse)
        self.count += a.size


def stream_head_value(chunks, W, beta: float, kind: Similarity = "dot") -> float:
    """Head value over a concatenation supplied as an iterator of chunks.

    Equals head_value on the full concatenation, independent of the
    chunking; memory is bounded by the largest chunk. Requires beta > 0
    (the merge divides by softmax mass); use the batch path for beta = 0.
    """
    if beta <= 0:
        raise ArgumentError("streaming pooling requires beta > 0")
    qs = _queries64(W)
    state = StreamState(beta=beta)
    for chunk in chunks:
        state.absorb(similarities(chunk, qs, kind))
    if state.count == 0:
        raise ArgumentError("stream_head_value needs at least one token")
    return state.pooled


def stream_attn_pool(chunks, w, beta: float) -> np.ndarray:
    """Single-query pooled *vector* over chunks, sigmoid-weighted merge.

    Follows the recurrence
        E_B  = lse(beta, B^T w);  mu_B = B exp(beta (B^T w - E_B))
        p    = sigmoid(beta (E_B - E))
        mu   = p mu_B + (1 - p) mu;    E = lse-merge(E, E_B)
    with E initialized to -inf. Used as an independent cross-check of the
    two-accumulator merge in stream_head_value.
    """
    if beta <= 0:
        raise ArgumentError("streaming pooling requires beta > 0")
    w = np.asarray(w, dtype=np.float64)
    E = -np.inf
    mu = np.zeros_like(w)
    seen = 0
    for chunk in chunks:
        toks = _tokens64(chunk)
        if toks.shape[1] != w.shape[0]:
            raise ShapeError("token dim does not match query dim")
        a = toks @ w
        m = a.max()
        E_B = m + np.log(np.exp(beta * (a - m)).sum()) / beta
        p_tok = np.exp(beta * (a - E_B))
        mu_B = p_tok @ toks
        # sigmoid(beta (E_B - E)); stable for E = -inf and large gaps
        gap = beta * (E_B - E)
        p = float(np.exp(-np.logaddexp(0.0, -gap)))
        mu = p * mu_B + (1.0 - p) * mu
        E = float(np.logaddexp(beta * E_B, beta * E) / beta)
        seen += toks.shape[0]
    if seen == 0:
        raise ArgumentError("stream_attn_pool needs at least one token")
    return mu
