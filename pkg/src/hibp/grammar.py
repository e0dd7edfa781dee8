"""Random grammar ensemble over a vocabulary of q symbols.

A grammar assigns each parent symbol a an exclusive set O_a of q ordered
child pairs (the q sets partition all q*q pairs), Gaussian logits on the
supported pairs, and the softmax transition tensor M[a, b, c] giving the
probability that parent a emits the ordered pair (b, c). Single-child
transition matrices ML/MR are obtained by summing out the other child.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import canonical
from .errors import ParameterError
from .seeding import LOGIT_STREAM, PARTITION_STREAM, child_seq, generator

LEFT = 0
RIGHT = 1


@dataclass(frozen=True)
class Partition:
    """Equal-sized split of the q*q ordered child pairs among q parents.

    pairs[a-1] lists O_a as rows [b, c] (1-based), sorted lexicographically.
    """

    q: int
    pairs: np.ndarray  # (q, q, 2) int64

    def __post_init__(self):
        self.pairs.setflags(write=False)

    def block(self, a: int) -> set[tuple[int, int]]:
        """O_a as a set of (b, c) tuples, symbols 1-based."""
        return {(int(b), int(c)) for b, c in self.pairs[a - 1]}

    def parent_of(self) -> np.ndarray:
        """(q, q) array mapping 0-based (b, c) to its unique 0-based parent."""
        out = np.full((self.q, self.q), -1, dtype=np.int64)
        for a0 in range(self.q):
            out[self.pairs[a0, :, 0] - 1, self.pairs[a0, :, 1] - 1] = a0
        return out


@dataclass(frozen=True)
class Grammar:
    q: int
    sigma: float
    seed: int
    partition: Partition
    xi: np.ndarray  # (q, q, q), raw Gaussian logits, exactly zero off support
    M: np.ndarray  # (q, q, q) transition tensor, rows sum to 1 over (b, c)
    ML: np.ndarray  # (q, q), M summed over the right child
    MR: np.ndarray  # (q, q), M summed over the left child
    p0: np.ndarray  # (q,) root prior

    def __post_init__(self):
        for arr in (self.xi, self.M, self.ML, self.MR, self.p0):
            arr.setflags(write=False)

    def support_mask(self) -> np.ndarray:
        """(q, q, q) bool, True exactly on the partition entries."""
        mask = np.zeros((self.q, self.q, self.q), dtype=bool)
        for a0 in range(self.q):
            rows = self.partition.pairs[a0]
            mask[a0, rows[:, 0] - 1, rows[:, 1] - 1] = True
        return mask

    def doc(self) -> dict:
        """Serializable document; the canonical bytes define the grammar hash."""
        logits = []
        for a0 in range(self.q):
            for b1, c1 in self.partition.pairs[a0]:
                logits.append(
                    {"a": a0 + 1, "b": int(b1), "c": int(c1), "xi": float(self.xi[a0, b1 - 1, c1 - 1])}
                )
        return {
            "q": self.q,
            "sigma": float(self.sigma),
            "seed": int(self.seed),
            "p0": [float(x) for x in self.p0],
            "partition": [[[int(b), int(c)] for b, c in self.partition.pairs[a0]] for a0 in range(self.q)],
            "logits": logits,
            "tensor": [float(x) for x in self.M.reshape(-1)],
        }

    def digest(self) -> str:
        return canonical.digest(self.doc())


def sample_partition(q: int, seed: int) -> Partition:
    """Uniformly random equal-sized partition of the q*q ordered pairs.

    A random permutation of all pairs is cut into q consecutive blocks of
    size q; each block is then sorted. Deterministic given the seed.
    """
    if q < 1:
        raise ParameterError(f"q must be >= 1, got {q}")
    rng = generator(child_seq(seed, PARTITION_STREAM))
    perm = rng.permutation(q * q)
    pairs = np.empty((q, q, 2), dtype=np.int64)
    for a0 in range(q):
        flat = np.sort(perm[a0 * q : (a0 + 1) * q])
        pairs[a0, :, 0] = flat // q + 1
        pairs[a0, :, 1] = flat % q + 1
    return Partition(q=q, pairs=pairs)


def assemble_grammar(
    q: int,
    sigma: float,
    seed: int,
    partition: Partition,
    xi: np.ndarray,
    p0: np.ndarray | None = None,
) -> Grammar:
    """Build the transition tensor from explicit parts.

    xi must be (q, q, q) with exact zeros off support; logits off support
    are treated as -inf, i.e. those entries of M are exact zeros and exp is
    never evaluated on them.
    """
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    if xi.shape != (q, q, q):
        raise ParameterError(f"xi must have shape {(q, q, q)}, got {xi.shape}")
    M = np.zeros((q, q, q), dtype=np.float64)
    for a0 in range(q):
        rows = partition.pairs[a0]
        b0, c0 = rows[:, 0] - 1, rows[:, 1] - 1
        h = sigma * xi[a0, b0, c0]
        w = np.exp(h - h.max())
        M[a0, b0, c0] = w / w.sum()
    ML = M.sum(axis=2)
    MR = M.sum(axis=1)
    if p0 is None:
        p0 = np.full(q, 1.0 / q)
    else:
        p0 = np.asarray(p0, dtype=np.float64).copy()
        if p0.shape != (q,) or abs(p0.sum() - 1.0) > 1e-9 or (p0 < 0).any():
            raise ParameterError("p0 must be a length-q probability vector")
    return Grammar(
        q=q,
        sigma=float(sigma),
        seed=int(seed),
        partition=partition,
        xi=np.ascontiguousarray(xi, dtype=np.float64),
        M=M,
        ML=ML,
        MR=MR,
        p0=p0,
    )


def build_grammar(q: int, sigma: float, seed: int) -> Grammar:
    """Sample one member of the grammar ensemble. Deterministic given seed.

    The partition comes from the seed's partition stream; the logit stream
    then supplies one standard normal per supported pair, assigned in the
    sorted order of each block.
    """
    if q < 1:
        raise ParameterError(f"q must be >= 1, got {q}")
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    partition = sample_partition(q, seed)
    rng = generator(child_seq(seed, LOGIT_STREAM))
    draws = rng.standard_normal((q, q))
    xi = np.zeros((q, q, q), dtype=np.float64)
    for a0 in range(q):
        rows = partition.pairs[a0]
        xi[a0, rows[:, 0] - 1, rows[:, 1] - 1] = draws[a0]
    return assemble_grammar(q, sigma, seed, partition, xi)


def path_transition(g: Grammar, turns) -> np.ndarray:
    """Conditional law of the node reached by `turns`, given the start symbol.

    Entry (a, b) is P(x_node = b+1 | x_start = a+1); the empty path returns
    the identity. The root prior is not folded in.
    """
    out = np.eye(g.q)
    for t in turns:
        if t == LEFT:
            out = out @ g.ML
        elif t == RIGHT:
            out = out @ g.MR
        else:
            raise ParameterError(f"turns must contain LEFT(0)/RIGHT(1), got {t!r}")
    return out


def permute_vocab(g: Grammar, perm) -> Grammar:
    """Relabel symbols by perm (0-based: old a+1 becomes perm[a]+1)."""
    perm = np.asarray(perm, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(g.q)):
        raise ParameterError("perm must be a permutation of 0..q-1")
    pairs = np.empty_like(g.partition.pairs)
    xi = np.zeros_like(g.xi)
    for a0 in range(g.q):
        rows = g.partition.pairs[a0]
        new_rows = np.stack([perm[rows[:, 0] - 1] + 1, perm[rows[:, 1] - 1] + 1], axis=1)
        order = np.lexsort((new_rows[:, 1], new_rows[:, 0]))
        pairs[perm[a0]] = new_rows[order]
        xi[perm[a0], new_rows[order, 0] - 1, new_rows[order, 1] - 1] = g.xi[
            a0, rows[order, 0] - 1, rows[order, 1] - 1
        ]
    p0 = np.empty_like(g.p0)
    p0[perm] = g.p0
    return assemble_grammar(g.q, g.sigma, g.seed, Partition(q=g.q, pairs=pairs), xi, p0)
