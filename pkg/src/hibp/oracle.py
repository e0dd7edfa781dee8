"""Ground-truth posteriors by exhaustive summation over hidden nodes.

Correctness reference only: every sum iterates all completions of the
hidden variables in fixed chunks, with per-bucket compensated totals
(math.fsum over chunk partials), so results do not depend on chunking.
"""

from __future__ import annotations

import math

import numpy as np

from .bp import Posteriors
from .errors import EnumerationBudgetError, InconsistentEvidenceError, ParameterError
from .grammar import Grammar
from .treegen import Evidence, _check_levels, leaf_offset, level_tables, n_nodes

DEFAULT_BUDGET = 2**26
CHUNK = 2**16


def _present_nodes(ell: int, k: int) -> np.ndarray:
    idx = [0]
    lo = k if k > 0 else 1
    for t in range(lo, ell + 1):
        idx.extend(range(2**t - 1, 2 ** (t + 1) - 1))
    return np.array(sorted(idx), dtype=np.int64)


def _factors(g: Grammar, ell: int, k: int):
    """Full-factor parent index list and the level-k conditional tables."""
    lo = k if k > 0 else 0
    parents = []
    for t in range(lo, ell):
        parents.extend(range(2**t - 1, 2 ** (t + 1) - 1))
    tables = level_tables(g, ell, k) if k > 0 else None
    return np.array(parents, dtype=np.int64), tables


def joint_probability(g: Grammar, ell: int, k: int, nodes) -> float:
    """Probability of one complete assignment of the level-k topology."""
    _check_levels(ell, k)
    nodes = np.ascontiguousarray(nodes, dtype=np.int64)
    if nodes.shape != (n_nodes(ell),):
        raise ParameterError(f"assignment must cover all {n_nodes(ell)} node slots")
    present = _present_nodes(ell, k)
    vals = nodes[present]
    if (vals < 1).any() or (vals > g.q).any():
        raise ParameterError("assignment incomplete: every present node needs a symbol in 1..q")
    p = float(g.p0[nodes[0] - 1])
    parents, tables = _factors(g, ell, k)
    if k > 0:
        base = leaf_offset(k)
        for j in range(2**k):
            p *= tables[j, nodes[0] - 1, nodes[base + j] - 1]
    for u in parents:
        p *= g.M[nodes[u] - 1, nodes[2 * u + 1] - 1, nodes[2 * u + 2] - 1]
    return p


def _marginals_by_enumeration(g, ell, k, fixed, targets, budget):
    """Sum joint probabilities over completions of the unfixed present nodes.

    fixed: (n_nodes,) int64 with 0 for hidden slots. Returns (totals dict
    target->(q,) summed weights, total probability mass).
    """
    present = _present_nodes(ell, k)
    hidden = present[fixed[present] == 0]
    H = hidden.size
    states = g.q**H
    if states > budget:
        raise EnumerationBudgetError(
            f"{g.q}**{H} = {states} hidden states exceed the budget of {budget}"
        )
    parents, tables = _factors(g, ell, k)
    nk0 = leaf_offset(k)
    partials = {t: [] for t in targets}
    mass_parts = []
    pows = g.q ** np.arange(H - 1, -1, -1, dtype=np.int64) if H else np.zeros(0, np.int64)
    for start in range(0, max(states, 1), CHUNK):
        stop = min(start + CHUNK, states)
        idx = np.arange(start, stop, dtype=np.int64)
        mat = np.broadcast_to(fixed, (idx.size, fixed.size)).copy()
        for h in range(H):
            mat[:, hidden[h]] = (idx // pows[h]) % g.q + 1
        probs = g.p0[mat[:, 0] - 1].copy()
        if k > 0:
            for j in range(2**k):
                probs *= tables[j, mat[:, 0] - 1, mat[:, nk0 + j] - 1]
        for u in parents:
            probs *= g.M[mat[:, u] - 1, mat[:, 2 * u + 1] - 1, mat[:, 2 * u + 2] - 1]
        mass_parts.append(float(probs.sum()))
        for t in targets:
            partials[t].append(np.bincount(mat[:, t] - 1, weights=probs, minlength=g.q))
    totals = {
        t: np.array([math.fsum(chunk[a] for chunk in partials[t]) for a in range(g.q)])
        for t in targets
    }
    return totals, math.fsum(mass_parts)


def enumerate_posteriors(g: Grammar, ell: int, k: int, ev: Evidence, budget: int = DEFAULT_BUDGET) -> Posteriors:
    """Exact posteriors matching the message-passing outputs.

    The root marginal conditions on all evidence; the incoming message for
    leaf i conditions on everything except leaf i itself, so observed
    leaves need one extra enumeration each with that slot freed.
    """
    _check_levels(ell, k)
    if ev.ell != ell:
        raise ParameterError(f"evidence depth {ev.ell} does not match ell={ell}")
    if (ev.leaves > g.q).any():
        raise ParameterError("leaf symbols must lie in 0..q")
    L = 2**ell
    leaf0 = leaf_offset(ell)
    fixed = np.zeros(n_nodes(ell), dtype=np.int64)
    fixed[leaf0:] = ev.leaves
    if ev.root is not None:
        fixed[0] = ev.root

    masked = [leaf0 + i for i in range(L) if ev.leaves[i] == 0]
    totals, mass = _marginals_by_enumeration(g, ell, k, fixed, [0] + masked, budget)
    if not mass > 0:
        raise InconsistentEvidenceError("evidence has zero probability under the grammar support")
    root = totals[0] / totals[0].sum()
    leaf_inc = np.empty((L, g.q))
    for i in range(L):
        node = leaf0 + i
        if ev.leaves[i] == 0:
            leaf_inc[i] = totals[node] / totals[node].sum()
        else:
            freed = fixed.copy()
            freed[node] = 0
            sub_totals, sub_mass = _marginals_by_enumeration(g, ell, k, freed, [node], budget)
            if not sub_mass > 0:
                raise InconsistentEvidenceError(
                    "evidence has zero probability under the grammar support"
                )
            leaf_inc[i] = sub_totals[node] / sub_totals[node].sum()
    return Posteriors(root=root, leaf_incoming=leaf_inc)
