import numpy as np
import pytest

from hibp.bp import (
    Posteriors,
    build_graph,
    infer,
    infer_batch,
    leaf_map,
    naive_bayes_batch,
    naive_bayes_root,
    root_map,
)
from hibp.errors import InconsistentEvidenceError, ParameterError
from hibp.grammar import build_grammar, permute_vocab
from hibp.oracle import enumerate_posteriors
from hibp.treegen import Evidence, apply_mask, leaf_offset, sample_tree, sample_trees


def test_factor_counts():
    g = build_grammar(4, 1.0, seed=1)
    assert build_graph(g, 4, 0).n_full_factors == 15
    assert build_graph(g, 4, 0).n_empty_factors == 0
    fg = build_graph(g, 4, 2)
    assert fg.n_empty_factors == 4 and fg.n_full_factors == 12
    fg = build_graph(g, 4, 4)
    assert fg.n_empty_factors == 16 and fg.n_full_factors == 0
    with pytest.raises(ParameterError):
        build_graph(g, 4, 5)


def test_depth1_observed_pair_pins_the_root():
    g = build_grammar(2, 1.0, seed=2)
    fg = build_graph(g, 1, 0)
    for b in (1, 2):
        for c in (1, 2):
            parent = int(g.partition.parent_of()[b - 1, c - 1]) + 1
            post = infer(fg, Evidence(ell=1, leaves=np.array([b, c])))
            expect = np.zeros(2)
            expect[parent - 1] = 1.0
            assert np.allclose(post.root, expect, atol=1e-14)
            assert root_map(post) == parent


def test_depth2_masked_leaf_matches_oracle():
    g = build_grammar(2, 1.0, seed=3)
    fg = build_graph(g, 2, 1)
    seq = sample_tree(g, 2, 1, seed=5).leaves
    ev = apply_mask(seq, {3})
    got = infer(fg, ev)
    want = enumerate_posteriors(g, 2, 1, ev)
    assert np.abs(got.leaf_incoming[2] - want.leaf_incoming[2]).max() < 1e-10
    assert np.abs(got.root - want.root).max() < 1e-10


def test_depth1_single_mask_closed_form():
    g = build_grammar(3, 1.0, seed=4)
    fg = build_graph(g, 1, 0)
    for c in (1, 2, 3):
        ev = Evidence(ell=1, leaves=np.array([0, c]))
        post = infer(fg, ev)
        expect = g.M[:, :, c - 1].sum(axis=0)  # uniform prior: sum over parents
        expect = expect / expect.sum()
        assert np.allclose(post.leaf_incoming[0], expect, atol=1e-12)


def test_naive_bayes_requires_full_observation():
    g = build_grammar(2, 1.0, seed=5)
    with pytest.raises(ParameterError):
        naive_bayes_root(g, 2, np.array([1, 0, 2, 1]))


def test_naive_bayes_equals_fully_filtered_graph_depth1():
    g = build_grammar(2, 1.0, seed=6)
    fg = build_graph(g, 1, 1)
    for b in (1, 2):
        for c in (1, 2):
            seq = np.array([b, c])
            got = infer(fg, Evidence(ell=1, leaves=seq)).root
            want = naive_bayes_root(g, 1, seq)
            assert np.abs(got - want).max() < 1e-14


def test_naive_bayes_equals_fully_filtered_graph_100_sequences():
    g = build_grammar(4, 1.0, seed=7)
    fg = build_graph(g, 4, 4)
    leaves = sample_trees(g, 4, 0, 100, seed=11)[:, leaf_offset(4) :]
    root_post, _ = infer_batch(fg, leaves)
    nb = naive_bayes_batch(g, 4, leaves)
    assert np.abs(root_post - nb).max() < 1e-12


def test_sigma_zero_products_by_hand():
    g = build_grammar(2, 0.0, seed=8)
    seq = sample_tree(g, 2, 0, seed=1).leaves
    # every supported conditional is 1/q, so the posterior is the normalized
    # product of depth-2 path entries computed by explicit summation
    expect = np.empty(2)
    for a in (1, 2):
        p = 1.0
        for i, v in enumerate(seq):
            turns = [(i >> 1) & 1, i & 1]
            row = np.eye(2)[a - 1]
            for t in turns:
                row = row @ (g.ML if t == 0 else g.MR)
            p *= row[v - 1]
        expect[a - 1] = p
    expect /= expect.sum()
    got = naive_bayes_root(g, 2, seq)
    assert np.allclose(got, expect, atol=1e-14)


def test_map_readouts_tie_break():
    post = Posteriors(root=np.full(4, 0.25), leaf_incoming=np.full((2, 4), 0.25))
    assert root_map(post) == 1
    assert leaf_map(post, 2) == 1
    delta = np.zeros(4)
    delta[2] = 1.0
    post2 = Posteriors(root=delta, leaf_incoming=delta[None, :])
    assert root_map(post2) == 3


def test_messages_normalized_and_finite():
    g = build_grammar(4, 1.0, seed=9)
    for k in (0, 2, 4):
        fg = build_graph(g, 4, k)
        leaves = sample_trees(g, 4, k, 32, seed=13)[:, leaf_offset(4) :]
        leaves[:, 5] = 0
        root_post, leaf_inc = infer_batch(fg, leaves)
        assert np.isfinite(root_post).all() and np.isfinite(leaf_inc).all()
        assert np.allclose(root_post.sum(axis=1), 1.0, atol=1e-12)
        assert np.allclose(leaf_inc.sum(axis=2), 1.0, atol=1e-12)
        assert (root_post >= 0).all() and (leaf_inc >= 0).all()


def test_inconsistent_root_evidence_raises():
    # hand-written evidence: observe a root that cannot generate the pair
    g = build_grammar(2, 1.0, seed=10)
    fg = build_graph(g, 1, 0)
    pair = g.partition.pairs[0][0]  # belongs to parent 1
    ev = Evidence(ell=1, leaves=np.array(pair), root=2)
    with pytest.raises(InconsistentEvidenceError):
        infer(fg, ev)


def test_evidence_shape_mismatch_raises():
    g = build_grammar(2, 1.0, seed=10)
    fg = build_graph(g, 2, 0)
    with pytest.raises(ParameterError):
        infer(fg, Evidence(ell=1, leaves=np.array([1, 2])))


def test_result_reproducible_across_calls():
    # messages are computed feed-forward from the evidence, so there is no
    # initialization to vary; equal calls must agree exactly
    g = build_grammar(4, 1.0, seed=11)
    fg = build_graph(g, 3, 1)
    leaves = sample_trees(g, 3, 1, 8, seed=17)[:, leaf_offset(3) :]
    a = infer_batch(fg, leaves)
    b = infer_batch(fg, leaves)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_permutation_equivariance_of_inference():
    g = build_grammar(3, 1.0, seed=12)
    perm = np.array([2, 0, 1])
    gp = permute_vocab(g, perm)
    seq = sample_tree(g, 2, 0, seed=3).leaves
    ev = apply_mask(seq, {2})
    post = infer(build_graph(g, 2, 0), ev)
    seq_p = perm[np.asarray(seq) - 1] + 1
    seq_p[1] = 0
    post_p = infer(build_graph(gp, 2, 0), Evidence(ell=2, leaves=seq_p))
    assert np.allclose(post_p.root[perm], post.root, atol=1e-12)
    assert np.allclose(post_p.leaf_incoming[1][perm], post.leaf_incoming[1], atol=1e-12)


def test_root_observed_clamps():
    g = build_grammar(2, 1.0, seed=13)
    fg = build_graph(g, 2, 0)
    seq = sample_tree(g, 2, 0, seed=2)
    ev = Evidence(ell=2, leaves=np.array([0, 0, 0, 0]), root=seq.root)
    post = infer(fg, ev)
    expect = np.zeros(2)
    expect[seq.root - 1] = 1.0
    assert np.allclose(post.root, expect)
    want = enumerate_posteriors(g, 2, 0, ev)
    assert np.abs(post.leaf_incoming - want.leaf_incoming).max() < 1e-10


def test_internal_marginals_against_oracle_brute_force():
    g = build_grammar(2, 1.0, seed=14)
    fg = build_graph(g, 2, 0)
    seq = sample_tree(g, 2, 0, seed=9).leaves
    ev = apply_mask(seq, {1})
    post = infer(fg, ev, internals=True)
    assert set(post.internal) == {1, 2}
    # brute force the level-1 marginals by summing the joint
    from hibp.oracle import joint_probability

    for node in (1, 2):
        marg = np.zeros(2)
        for root in (1, 2):
            for n1 in (1, 2):
                for n2 in (1, 2):
                    for x1 in (1, 2):
                        full = np.array([root, n1, n2, x1, *seq[1:]])
                        marg[(n1 if node == 1 else n2) - 1] += joint_probability(g, 2, 0, full)
        marg /= marg.sum()
        assert np.allclose(post.internal[node], marg, atol=1e-10)
