"""Attention-block execution of the upward message passing.

Each leaf owns one token of dimension d = q*(q+2) + ell holding, in order:
a q-by-q block r (row a stores the quantities that become the leaf marginal
for hypothesis a), the current subtree message m, a scratch slot for the
gathered complement-subtree message, and the +/-1 root-to-leaf turn
sequence. Block b gathers, through a purely positional softmax attention,
the average m over the complement subtree at depth ell-b+1 and then applies
the exact pairwise update, so after b blocks every token carries the
upgoing message of its depth-(ell-b) ancestor while r accumulates what the
readout needs. Attention weights depend only on the turn signs; as the
sharpness beta grows the softmax concentrates on the complement set and the
readout converges to the exact incoming message of every leaf.

The r block is initialized to indicator slices (row a is the one-hot of a):
slices initialized uniformly would evolve identically across a and the
readout could not depend on the hypothesis. r is normalized jointly over
all q*q entries; normalizing each slice separately would likewise erase the
hypothesis dependence.

With filtering level k > 0 there are ell-k blocks and the last block, after
its pairwise update, combines each token's subtree message with the other
2**k - 1 subtree messages through the level-k conditional tables and the
root prior. Those sibling-subtree messages only exist once the final
pairwise update has run, so this combination reads the refreshed m slots of
all positions rather than the slot gathered by the block's attention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import NumericalError, ParameterError
from .grammar import Grammar
from .treegen import Evidence, _check_levels, leaf_turns, level_tables


def attention_targets(i: int, m: int, ell: int) -> frozenset[int]:
    """Leaves whose ancestry splits from leaf i exactly at depth ell-m+1.

    These are the 2**(m-1) leaves under the sibling of i's depth-(ell-m+1)
    ancestor; i itself is never included.
    """
    if not 1 <= m <= ell:
        raise ParameterError(f"block index must be in 1..{ell}, got {m}")
    if not 1 <= i <= 2**ell:
        raise ParameterError(f"leaf index must be in 1..{2**ell}, got {i}")
    i0 = i - 1
    block = (i0 >> m) << m
    half = 1 << (m - 1)
    if (i0 >> (m - 1)) & 1:
        lo = block
    else:
        lo = block + half
    return frozenset(range(lo + 1, lo + half + 1))


@dataclass(frozen=True)
class EmbeddedTransformer:
    grammar: Grammar
    ell: int
    k: int
    beta: float
    attn: np.ndarray  # (n_blocks, T, T) softmax weights, positional only
    own_is_left: np.ndarray  # (n_blocks, T) bool
    empty_tables: np.ndarray  # (2**k, q, q); empty when k == 0

    def __post_init__(self):
        self.attn.setflags(write=False)
        self.own_is_left.setflags(write=False)
        self.empty_tables.setflags(write=False)

    @property
    def n_blocks(self) -> int:
        return self.ell - self.k

    @property
    def d(self) -> int:
        return self.grammar.q * (self.grammar.q + 2) + self.ell

    def attention_leakage(self) -> np.ndarray:
        """Per-block max over rows of softmax mass outside the target set."""
        T = self.attn.shape[1]
        out = np.empty(self.n_blocks)
        for b in range(self.n_blocks):
            worst = 0.0
            for i in range(1, T + 1):
                keep = np.array(sorted(attention_targets(i, b + 1, self.ell))) - 1
                mask = np.ones(T, dtype=bool)
                mask[keep] = False
                worst = max(worst, float(self.attn[b, i - 1, mask].sum()))
            out[b] = worst
        return out


def _path_signs(ell: int) -> np.ndarray:
    """(T, ell) +/-1 turn signs; +1 means a left branch (coordinate t is
    the turn into depth t)."""
    T = 2**ell
    signs = np.empty((T, ell))
    for i in range(1, T + 1):
        signs[i - 1] = [1.0 if t == 0 else -1.0 for t in leaf_turns(i, ell)]
    return signs


def build_embedding(g: Grammar, ell: int, k: int, beta: float) -> EmbeddedTransformer:
    """Construct the per-block attention weights and update selectors.

    Block b scores position pairs with
        beta * sum_{t <= ell-b} s_i[t] s_j[t] - beta * s_i[ell-b+1] s_j[ell-b+1]
    over the turn signs s, which is maximal exactly on the complement set,
    so the softmax rows concentrate there uniformly as beta grows (the
    negative diagonal term keeps every token from attending to itself).
    """
    _check_levels(ell, k)
    if k == ell:
        raise ParameterError(
            "k = ell leaves no blocks to run; the fully filtered readout is naive_bayes_root"
        )
    if not beta > 0:
        raise ParameterError(f"beta must be positive, got {beta}")
    T = 2**ell
    n_blocks = ell - k
    signs = _path_signs(ell)
    attn = np.empty((n_blocks, T, T))
    own_is_left = np.empty((n_blocks, T), dtype=np.bool_)
    for b in range(1, n_blocks + 1):
        depth = ell - b  # shared-ancestor depth for the positive terms
        scores = beta * (signs[:, :depth] @ signs[:, :depth].T)
        scores -= beta * np.outer(signs[:, depth], signs[:, depth])
        scores -= scores.max(axis=1, keepdims=True)
        w = np.exp(scores)
        attn[b - 1] = w / w.sum(axis=1, keepdims=True)
        own_is_left[b - 1] = signs[:, depth] > 0
    return EmbeddedTransformer(
        grammar=g,
        ell=ell,
        k=k,
        beta=float(beta),
        attn=attn,
        own_is_left=own_is_left,
        empty_tables=level_tables(g, ell, k) if k > 0 else np.zeros((0, g.q, g.q)),
    )


def encode_tokens(ev: Evidence, g: Grammar, ell: int) -> np.ndarray:
    """(T, d) initial tokens for one evidence row."""
    if ev.ell != ell:
        raise ParameterError(f"evidence depth {ev.ell} does not match ell={ell}")
    return encode_batch(ev.leaves[None, :], g, ell)[0]


def encode_batch(leaves: np.ndarray, g: Grammar, ell: int) -> np.ndarray:
    """(B, T, d) initial tokens: r rows one-hot on their hypothesis, m the
    leaf evidence message (one-hot, or uniform when masked), the gather slot
    zero, and the fixed turn signs."""
    leaves = np.ascontiguousarray(leaves, dtype=np.int64)
    T = 2**ell
    q = g.q
    if leaves.ndim != 2 or leaves.shape[1] != T:
        raise ParameterError(f"evidence shape {leaves.shape} does not match ell={ell}")
    if (leaves < 0).any() or (leaves > q).any():
        raise ParameterError("leaf symbols must lie in 0..q")
    B = leaves.shape[0]
    d = q * (q + 2) + ell
    tokens = np.zeros((B, T, d))
    eye = np.eye(q).reshape(-1)
    tokens[:, :, : q * q] = eye
    sym = np.arange(1, q + 1)
    onehot = (leaves[:, :, None] == sym[None, None, :]).astype(np.float64)
    tokens[:, :, q * q : q * q + q] = np.where(leaves[:, :, None] == 0, 1.0 / q, onehot)
    tokens[:, :, q * q + 2 * q :] = _path_signs(ell)[None, :, :]
    return tokens


def _hub_readout(et: EmbeddedTransformer, tokens: np.ndarray) -> np.ndarray:
    """Final per-position marginals from the processed tokens."""
    g = et.grammar
    q = g.q
    B, T, _ = tokens.shape
    r = tokens[:, :, : q * q].reshape(B, T, q, q)
    if et.k == 0:
        out = np.einsum("h,stah->sta", g.p0, r)
    else:
        S = 2 ** (et.ell - et.k)  # leaves per level-k subtree
        J = 2**et.k
        reps = tokens[:, ::S, q * q : q * q + q]  # (B, J, q) one message per subtree
        G = np.einsum("jab,sjb->sja", et.empty_tables, reps)
        G /= G.sum(axis=2, keepdims=True)
        pref = np.ones((B, J, q))
        suff = np.ones((B, J, q))
        for j in range(1, J):
            pref[:, j] = pref[:, j - 1] * G[:, j - 1]
        for j in range(J - 2, -1, -1):
            suff[:, j] = suff[:, j + 1] * G[:, j + 1]
        W = np.einsum("sja,jah->sjh", g.p0[None, None, :] * pref * suff, et.empty_tables)
        Wtok = np.repeat(W, S, axis=1)  # (B, T, q)
        out = np.einsum("sth,stah->sta", Wtok, r)
    totals = out.sum(axis=2, keepdims=True)
    if not np.isfinite(out).all() or not (totals > 0).all():
        raise NumericalError("non-finite or zero readout; evidence outside grammar support?")
    return out / totals


def forward(et: EmbeddedTransformer, tokens: np.ndarray) -> np.ndarray:
    """Run the blocks and read out one probability vector per position.

    Accepts (T, d) or (B, T, d) tokens; returns matching (T, q) or
    (B, T, q). Output row i converges to the exact incoming message of leaf
    i+1 as beta grows.
    """
    single = tokens.ndim == 2
    if single:
        tokens = tokens[None, :, :]
    T = 2**et.ell
    if tokens.shape[1:] != (T, et.d):
        raise ParameterError(f"tokens must have shape (B, {T}, {et.d})")
    work = np.ascontiguousarray(tokens, dtype=np.float64).copy()
    _backend.embed_blocks(work, et.attn, et.grammar.M, et.own_is_left, et.grammar.q, et.ell)
    if not np.isfinite(work).all():
        raise NumericalError("non-finite token entries after the block sweep")
    out = _hub_readout(et, work)
    return out[0] if single else out
