"""Exact sum-product inference on the level-k factor graph.

The graph has one full factor per parent node at levels k..ell-1, each
carrying the shared transition tensor, and (for k > 0) one empty factor per
level-k node carrying that node's conditional table given the root. One
upward pass followed by one downward pass reaches the fixed point exactly;
messages are computed feed-forward from the evidence, so the result does
not depend on any initialization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend, _kernels_numpy
from .errors import InconsistentEvidenceError, ParameterError
from .grammar import Grammar
from .treegen import Evidence, _check_levels, level_tables

DEFAULT_CHUNK = 8192


@dataclass(frozen=True)
class FactorGraph:
    grammar: Grammar
    ell: int
    k: int
    empty_tables: np.ndarray  # (2**k, q, q); empty when k == 0

    def __post_init__(self):
        self.empty_tables.setflags(write=False)

    @property
    def n_empty_factors(self) -> int:
        return 2**self.k if self.k > 0 else 0

    @property
    def n_full_factors(self) -> int:
        return sum(2**t for t in range(self.k, self.ell))


@dataclass(frozen=True)
class Posteriors:
    root: np.ndarray  # (q,)
    leaf_incoming: np.ndarray  # (2**ell, q); row i is the message into leaf i+1
    internal: dict[int, np.ndarray] | None = None  # node index -> marginal


def build_graph(g: Grammar, ell: int, k: int) -> FactorGraph:
    _check_levels(ell, k)
    if k > 0:
        tables = level_tables(g, ell, k)
    else:
        tables = np.zeros((0, g.q, g.q))
    return FactorGraph(grammar=g, ell=ell, k=k, empty_tables=tables)


def infer_batch(fg: FactorGraph, leaves: np.ndarray, root_obs=None, chunk: int = DEFAULT_CHUNK):
    """Posteriors for a batch of evidence rows.

    leaves: (B, 2**ell) ints with 0 marking masked positions; root_obs:
    optional (B,) ints with 0 marking a hidden root. Returns
    (root_post (B, q), leaf_inc (B, L, q)). Raises on evidence whose total
    probability is zero under the grammar support.
    """
    leaves = np.ascontiguousarray(leaves, dtype=np.int64)
    if leaves.ndim != 2 or leaves.shape[1] != 2**fg.ell:
        raise ParameterError(f"evidence shape {leaves.shape} does not match ell={fg.ell}")
    g = fg.grammar
    if (leaves < 0).any() or (leaves > g.q).any():
        raise ParameterError("leaf symbols must lie in 0..q")
    B = leaves.shape[0]
    if root_obs is not None:
        root_obs = np.ascontiguousarray(root_obs, dtype=np.int64)
        if root_obs.shape != (B,):
            raise ParameterError("root_obs must be one entry per evidence row")
    root_post = np.empty((B, g.q))
    leaf_inc = np.empty((B, leaves.shape[1], g.q))
    for lo in range(0, B, chunk):
        hi = min(lo + chunk, B)
        ro = None if root_obs is None else root_obs[lo:hi]
        rp, li, ok = _backend.bp_batch(
            leaves[lo:hi], ro, g.M, g.p0, fg.empty_tables, fg.ell, fg.k
        )
        if not ok.all():
            bad = lo + int(np.nonzero(~ok)[0][0])
            raise InconsistentEvidenceError(
                f"evidence row {bad} has zero probability under the grammar support"
            )
        root_post[lo:hi] = rp
        leaf_inc[lo:hi] = li
    return root_post, leaf_inc


def infer(fg: FactorGraph, ev: Evidence, internals: bool = False) -> Posteriors:
    """Exact root posterior and per-leaf incoming messages for one evidence.

    With internals=True also returns marginals of the sampled internal
    nodes (levels k..ell-1), computed on the numpy reference path.
    """
    if ev.ell != fg.ell:
        raise ParameterError(f"evidence depth {ev.ell} does not match graph depth {fg.ell}")
    g = fg.grammar
    if (ev.leaves > g.q).any():
        raise ParameterError("leaf symbols must lie in 0..q")
    leaves = ev.leaves[None, :]
    root_obs = None if ev.root is None else np.array([ev.root], dtype=np.int64)
    if not internals:
        root_post, leaf_inc = infer_batch(fg, leaves, root_obs)
        return Posteriors(root=root_post[0], leaf_incoming=leaf_inc[0])
    ro = np.zeros(1, dtype=np.int64) if root_obs is None else root_obs
    root_post, leaf_inc, ok, up, down = _kernels_numpy.bp_batch(
        np.ascontiguousarray(leaves, dtype=np.int64),
        ro,
        g.M,
        g.p0,
        fg.empty_tables,
        fg.ell,
        fg.k,
        want_messages=True,
    )
    if not ok.all():
        raise InconsistentEvidenceError("evidence has zero probability under the grammar support")
    internal = {}
    lo = fg.k if fg.k > 0 else 1
    for t in range(lo, fg.ell):
        for u in range(2**t - 1, 2 ** (t + 1) - 1):
            marg = up[0, u] * down[0, u]
            internal[u] = marg / marg.sum()
    return Posteriors(root=root_post[0], leaf_incoming=leaf_inc[0], internal=internal)


def naive_bayes_root(g: Grammar, ell: int, sequence) -> np.ndarray:
    """Root posterior from the product of per-leaf depth-ell conditionals.

    Requires a fully observed sequence; equals inference on the fully
    filtered (k = ell) graph. The root prior multiplies the product so
    non-uniform priors stay consistent with the graph treatment.
    """
    seq = np.ascontiguousarray(sequence, dtype=np.int64)
    if seq.shape != (2**ell,):
        raise ParameterError(f"sequence must have length {2**ell}")
    if (seq <= 0).any() or (seq > g.q).any():
        raise ParameterError("naive Bayes readout requires every leaf observed in 1..q")
    tables = level_tables(g, ell, ell)  # (L, q, q)
    post = g.p0 * np.prod(tables[np.arange(seq.size), :, seq - 1], axis=0)
    total = post.sum()
    if not total > 0:
        raise InconsistentEvidenceError("sequence has zero probability under every root")
    return post / total


def naive_bayes_batch(g: Grammar, ell: int, sequences: np.ndarray) -> np.ndarray:
    """Vectorized naive_bayes_root over (B, 2**ell) observed sequences."""
    seqs = np.ascontiguousarray(sequences, dtype=np.int64)
    if (seqs <= 0).any() or (seqs > g.q).any():
        raise ParameterError("naive Bayes readout requires every leaf observed in 1..q")
    tables = level_tables(g, ell, ell)
    cols = tables[np.arange(seqs.shape[1])[None, :], :, seqs - 1]  # (B, L, q)
    post = g.p0[None, :] * np.prod(cols, axis=1)
    totals = post.sum(axis=1, keepdims=True)
    if not (totals > 0).all():
        raise InconsistentEvidenceError("a sequence has zero probability under every root")
    return post / totals


def root_map(post: Posteriors) -> int:
    """Most probable root symbol; ties break to the lowest index."""
    return int(np.argmax(post.root)) + 1


def leaf_map(post: Posteriors, i: int) -> int:
    """Most probable symbol for 1-based leaf i from its incoming message."""
    if not 1 <= i <= post.leaf_incoming.shape[0]:
        raise ParameterError(f"leaf index {i} out of range")
    return int(np.argmax(post.leaf_incoming[i - 1])) + 1
