"""Sampling trees and datasets from a grammar, with optional filtering.

Nodes are stored level-order in a flat array: index 0 is the root, children
of node n are 2n+1 and 2n+2, and the leaves occupy the last 2**ell slots
left-to-right (leaf i, 1-based, lives at index 2**ell - 1 + i - 1). With
filtering level k > 0 the nodes strictly between the root and level k are
never sampled and carry the ABSENT marker 0; the 2**k level-k nodes are
drawn conditionally independently given the root from their path-product
marginals, and everything below follows the full pairwise process.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .grammar import Grammar, path_transition
from .seeding import MASK_ROLE, TREE_ROLE, generator, sample_stream

ABSENT = 0
MASKED = 0

TASK_CLASSIFICATION = "classification"
TASK_MLM = "mlm"


def n_nodes(ell: int) -> int:
    return 2 ** (ell + 1) - 1


def leaf_offset(ell: int) -> int:
    return 2**ell - 1


def leaf_turns(i: int, ell: int) -> tuple[int, ...]:
    """Root-to-leaf branch choices for 1-based leaf i (LEFT=0, RIGHT=1)."""
    if not 1 <= i <= 2**ell:
        raise ParameterError(f"leaf index must be in 1..{2**ell}, got {i}")
    b = i - 1
    return tuple((b >> (ell - t)) & 1 for t in range(1, ell + 1))


def _check_levels(ell: int, k: int) -> None:
    if ell < 1:
        raise ParameterError(f"ell must be >= 1, got {ell}")
    if not 0 <= k <= ell:
        raise ParameterError(f"k must be in 0..ell={ell}, got {k}")


def level_tables(g: Grammar, ell: int, k: int) -> np.ndarray:
    """(2**k, q, q) conditional tables P(x_j | x_0) for the level-k nodes."""
    _check_levels(ell, k)
    tabs = np.empty((2**k, g.q, g.q))
    for j in range(2**k):
        turns = tuple((j >> (k - t)) & 1 for t in range(1, k + 1))
        tabs[j] = path_transition(g, turns)
    return tabs


@dataclass(frozen=True)
class TreeSample:
    ell: int
    k: int
    nodes: np.ndarray  # (2**(ell+1)-1,) int64, 0 marks ABSENT

    def __post_init__(self):
        self.nodes.setflags(write=False)

    @property
    def root(self) -> int:
        return int(self.nodes[0])

    @property
    def leaves(self) -> np.ndarray:
        return self.nodes[leaf_offset(self.ell) :]


@dataclass(frozen=True)
class Evidence:
    """Observed/masked leaves plus an optionally observed root.

    leaves holds the symbol at observed positions and MASKED (0) elsewhere;
    root is None when hidden.
    """

    ell: int
    leaves: np.ndarray  # (2**ell,) int64
    root: int | None = None

    def __post_init__(self):
        leaves = np.ascontiguousarray(self.leaves, dtype=np.int64)
        if leaves.shape != (2**self.ell,):
            raise ParameterError(f"evidence needs {2**self.ell} leaf entries, got {leaves.shape}")
        if (leaves < 0).any():
            raise ParameterError("leaf entries must be MASKED (0) or positive symbols")
        object.__setattr__(self, "leaves", leaves)
        self.leaves.setflags(write=False)


@dataclass(frozen=True)
class Dataset:
    grammar_hash: str
    ell: int
    k: int
    P: int
    task: str
    sequences: np.ndarray  # (P, 2**ell) uint8, symbols 1..q
    labels: np.ndarray | None  # (P,) uint8 generating roots (classification)
    masks: np.ndarray | None  # (P, 2) int64 [position 1-based, true symbol] (mlm)
    master_seed: int

    def __post_init__(self):
        self.sequences.setflags(write=False)
        if self.labels is not None:
            self.labels.setflags(write=False)
        if self.masks is not None:
            self.masks.setflags(write=False)


def _cum_pairs(g: Grammar) -> np.ndarray:
    # (q, q*q) inverse-CDF table over flattened ordered pairs per parent
    return np.cumsum(g.M.reshape(g.q, -1), axis=1)


def _draw_index(cum_row: np.ndarray, u: float) -> int:
    return int(np.searchsorted(cum_row, u, side="right"))


def sample_tree(g: Grammar, ell: int, k: int, seed) -> TreeSample:
    """Draw one tree. `seed` is an int or SeedSequence; draws happen in a
    fixed order (root, level-k nodes left-to-right, then parents level by
    level), so equal seeds give equal trees."""
    _check_levels(ell, k)
    rng = generator(seed)
    nodes = np.zeros(n_nodes(ell), dtype=np.int64)
    cum_p0 = np.cumsum(g.p0)
    cum_pairs = _cum_pairs(g)
    nodes[0] = _draw_index(cum_p0, rng.random()) + 1
    if k > 0:
        tabs = level_tables(g, ell, k)
        cum_tabs = np.cumsum(tabs, axis=2)
        base = leaf_offset(k)
        for j in range(2**k):
            nodes[base + j] = _draw_index(cum_tabs[j, nodes[0] - 1], rng.random()) + 1
    start = k if k > 0 else 0
    for t in range(start, ell):
        for u in range(2**t - 1, 2 ** (t + 1) - 1):
            pair = _draw_index(cum_pairs[nodes[u] - 1], rng.random())
            nodes[2 * u + 1] = pair // g.q + 1
            nodes[2 * u + 2] = pair % g.q + 1
    return TreeSample(ell=ell, k=k, nodes=nodes)


def sample_trees(g: Grammar, ell: int, k: int, n: int, seed) -> np.ndarray:
    """Draw n trees from a single stream, vectorized across samples.

    Returns (n, 2**(ell+1)-1) int64 node arrays (0 marks ABSENT). One
    vectorized uniform draw per node position, in the same node order as
    sample_tree; the stream layout differs from per-sample streams, so this
    is the fast path for Monte-Carlo estimates, not for datasets.
    """
    _check_levels(ell, k)
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    rng = generator(seed)
    nodes = np.zeros((n, n_nodes(ell)), dtype=np.int64)
    cum_p0 = np.cumsum(g.p0)
    cum_pairs = _cum_pairs(g)
    nodes[:, 0] = (cum_p0[None, :] <= rng.random(n)[:, None]).sum(axis=1) + 1
    if k > 0:
        tabs = level_tables(g, ell, k)
        cum_tabs = np.cumsum(tabs, axis=2)
        base = leaf_offset(k)
        for j in range(2**k):
            rows = cum_tabs[j, nodes[:, 0] - 1]  # (n, q)
            nodes[:, base + j] = (rows <= rng.random(n)[:, None]).sum(axis=1) + 1
    start = k if k > 0 else 0
    for t in range(start, ell):
        for u in range(2**t - 1, 2 ** (t + 1) - 1):
            rows = cum_pairs[nodes[:, u] - 1]  # (n, q*q)
            pair = (rows <= rng.random(n)[:, None]).sum(axis=1)
            nodes[:, 2 * u + 1] = pair // g.q + 1
            nodes[:, 2 * u + 2] = pair % g.q + 1
    return nodes


def apply_mask(sequence, positions) -> Evidence:
    """Evidence with the listed 1-based leaf positions masked, root hidden."""
    seq = np.ascontiguousarray(sequence, dtype=np.int64)
    if seq.ndim != 1 or seq.size < 1 or (seq.size & (seq.size - 1)) != 0:
        raise ParameterError("sequence length must be a power of two")
    ell = int(seq.size).bit_length() - 1
    leaves = seq.copy()
    for p in positions:
        if not 1 <= int(p) <= seq.size:
            raise ParameterError(f"mask position {p} outside 1..{seq.size}")
        leaves[int(p) - 1] = MASKED
    return Evidence(ell=ell, leaves=leaves)


def generate_dataset(g: Grammar, ell: int, k: int, P: int, task: str, master_seed: int) -> Dataset:
    """P independent records with per-record derived streams.

    Record i draws its tree from sample_stream(master_seed, i, TREE_ROLE)
    and, for the mlm task, its mask position uniformly over the leaves from
    sample_stream(master_seed, i, MASK_ROLE), so any record can be
    regenerated in isolation.
    """
    _check_levels(ell, k)
    if P < 1:
        raise ParameterError(f"P must be >= 1, got {P}")
    if task not in (TASK_CLASSIFICATION, TASK_MLM):
        raise ParameterError(f"task must be {TASK_CLASSIFICATION!r} or {TASK_MLM!r}, got {task!r}")
    if g.q > 255:
        raise ParameterError("u8 dataset format caps the vocabulary at 255 symbols")
    L = 2**ell
    sequences = np.empty((P, L), dtype=np.uint8)
    labels = np.empty(P, dtype=np.uint8) if task == TASK_CLASSIFICATION else None
    masks = np.empty((P, 2), dtype=np.int64) if task == TASK_MLM else None
    for i in range(P):
        tree = sample_tree(g, ell, k, sample_stream(master_seed, i, TREE_ROLE))
        sequences[i] = tree.leaves
        if task == TASK_CLASSIFICATION:
            labels[i] = tree.root
        else:
            rng = generator(sample_stream(master_seed, i, MASK_ROLE))
            pos = int(rng.integers(1, L + 1))
            masks[i] = (pos, int(tree.leaves[pos - 1]))
    return Dataset(
        grammar_hash=g.digest(),
        ell=ell,
        k=k,
        P=P,
        task=task,
        sequences=sequences,
        labels=labels,
        masks=masks,
        master_seed=int(master_seed),
    )
