import numpy as np
import pytest

from hibp.errors import EnumerationBudgetError, InconsistentEvidenceError, ParameterError
from hibp.grammar import build_grammar
from hibp.oracle import enumerate_posteriors, joint_probability
from hibp.treegen import Evidence, apply_mask, leaf_offset, sample_tree, sample_trees


def test_joint_probability_depth1_definition():
    g = build_grammar(3, 1.0, seed=1)
    for a in range(1, 4):
        for b in range(1, 4):
            for c in range(1, 4):
                got = joint_probability(g, 1, 0, np.array([a, b, c]))
                assert got == pytest.approx(g.p0[a - 1] * g.M[a - 1, b - 1, c - 1], abs=0)


def test_joint_probability_off_support_is_zero():
    g = build_grammar(2, 1.0, seed=2)
    pair = g.partition.pairs[0][0]  # generated by parent 1 only
    assert joint_probability(g, 1, 0, np.array([2, pair[0], pair[1]])) == 0.0


def test_joint_probability_incomplete_assignment_rejected():
    g = build_grammar(2, 1.0, seed=2)
    with pytest.raises(ParameterError):
        joint_probability(g, 1, 0, np.array([1, 0, 2]))


def test_joint_probability_matches_empirical_frequency():
    # ell=2, k=1 at q=2: frequency of one full assignment over 10**7 samples
    g = build_grammar(2, 1.0, seed=3)
    n = 10_000_000
    nodes = sample_trees(g, 2, 1, n, seed=77)
    target = sample_tree(g, 2, 1, seed=5).nodes
    p = joint_probability(g, 2, 1, target)
    present = [0, 1, 2, 3, 4, 5, 6]
    hits = np.ones(n, dtype=bool)
    for idx in present:
        if target[idx] != 0:
            hits &= nodes[:, idx] == target[idx]
    p_hat = hits.mean()
    se = np.sqrt(p * (1 - p) / n)
    assert abs(p_hat - p) < 4 * se


def test_total_probability_sums_to_one():
    for q, ell, k in [(2, 2, 0), (3, 2, 1), (2, 3, 2), (4, 1, 0), (2, 3, 3)]:
        g = build_grammar(q, 1.0, seed=q * 10 + ell)
        ev = Evidence(ell=ell, leaves=np.zeros(2**ell, dtype=np.int64))
        post = enumerate_posteriors(g, ell, k, ev)
        # no evidence: root marginal equals the prior
        assert np.allclose(post.root, g.p0, atol=1e-9)
        from hibp.oracle import _marginals_by_enumeration

        fixed = np.zeros(2 ** (ell + 1) - 1, dtype=np.int64)
        _, mass = _marginals_by_enumeration(g, ell, k, fixed, [0], budget=2**26)
        assert mass == pytest.approx(1.0, abs=1e-9)


def test_chunk_size_does_not_change_results():
    import hibp.oracle as oracle_mod

    g = build_grammar(2, 1.0, seed=4)
    seq = sample_tree(g, 3, 0, seed=6).leaves
    ev = apply_mask(seq, {2})
    base = enumerate_posteriors(g, 3, 0, ev)
    old = oracle_mod.CHUNK
    try:
        oracle_mod.CHUNK = 7
        small = enumerate_posteriors(g, 3, 0, ev)
    finally:
        oracle_mod.CHUNK = old
    assert np.abs(base.root - small.root).max() < 1e-12
    assert np.abs(base.leaf_incoming - small.leaf_incoming).max() < 1e-12


def test_budget_guard():
    g = build_grammar(4, 1.0, seed=5)
    ev = Evidence(ell=4, leaves=np.zeros(16, dtype=np.int64))
    with pytest.raises(EnumerationBudgetError):
        enumerate_posteriors(g, 4, 0, ev, budget=2**20)


def test_inconsistent_evidence_raises():
    g = build_grammar(2, 1.0, seed=6)
    pair = g.partition.pairs[0][0]
    ev = Evidence(ell=1, leaves=np.array(pair), root=2)
    with pytest.raises(InconsistentEvidenceError):
        enumerate_posteriors(g, 1, 0, ev)


def test_depth1_closed_form_root():
    g = build_grammar(2, 1.0, seed=7)
    for b in (1, 2):
        for c in (1, 2):
            ev = Evidence(ell=1, leaves=np.array([b, c]))
            post = enumerate_posteriors(g, 1, 0, ev)
            expect = g.p0 * g.M[:, b - 1, c - 1]
            expect /= expect.sum()
            assert np.allclose(post.root, expect, atol=1e-12)
