"""Numba-compiled batch kernels; explicit loops, parallel over samples.

Mirrors the contracts in _kernels_numpy. fastmath stays off so results are
IEEE-deterministic for a fixed backend.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(cache=True, inline="always")
def _normalize_row(v):
    s = 0.0
    for i in range(v.shape[0]):
        s += v[i]
    if not (s > 0.0) or not np.isfinite(s):
        return False
    for i in range(v.shape[0]):
        v[i] /= s
    return True


@njit(cache=True)
def _bp_single(leaf_row, root_val, M, p0, empty_tables, ell, k, up, down, root_post, leaf_inc):
    q = M.shape[0]
    L = leaf_row.shape[0]
    leaf0 = L - 1
    ok = True

    for i in range(L):
        v = leaf_row[i]
        for a in range(q):
            up[leaf0 + i, a] = 1.0 / q if v == 0 else (1.0 if v == a + 1 else 0.0)

    lo = k if k > 0 else 1
    for t in range(ell - 1, lo - 1, -1):
        for u in range(2**t - 1, 2 ** (t + 1) - 1):
            for a in range(q):
                acc = 0.0
                for b in range(q):
                    for c in range(q):
                        acc += M[a, b, c] * up[2 * u + 1, b] * up[2 * u + 2, c]
                up[u, a] = acc
            ok &= _normalize_row(up[u])

    base = np.empty(q)
    for a in range(q):
        base[a] = p0[a] if root_val == 0 else (1.0 if root_val == a + 1 else 0.0)

    if k == 0:
        for a in range(q):
            acc = 0.0
            for b in range(q):
                for c in range(q):
                    acc += M[a, b, c] * up[1, b] * up[2, c]
            root_post[a] = base[a] * acc
        ok &= _normalize_row(root_post)
        for b in range(q):
            acc = 0.0
            for a in range(q):
                for c in range(q):
                    acc += M[a, b, c] * base[a] * up[2, c]
            down[1, b] = acc
        ok &= _normalize_row(down[1])
        for c in range(q):
            acc = 0.0
            for a in range(q):
                for b in range(q):
                    acc += M[a, b, c] * base[a] * up[1, b]
            down[2, c] = acc
        ok &= _normalize_row(down[2])
    else:
        J = 2**k
        nk0 = 2**k - 1
        E = np.empty((J, q))
        for j in range(J):
            for a in range(q):
                acc = 0.0
                for b in range(q):
                    acc += empty_tables[j, a, b] * up[nk0 + j, b]
                E[j, a] = acc
            ok &= _normalize_row(E[j])
        for a in range(q):
            acc = base[a]
            for j in range(J):
                acc *= E[j, a]
            root_post[a] = acc
        ok &= _normalize_row(root_post)
        pref = np.ones((J, q))
        suff = np.ones((J, q))
        for j in range(1, J):
            for a in range(q):
                pref[j, a] = pref[j - 1, a] * E[j - 1, a]
        for j in range(J - 2, -1, -1):
            for a in range(q):
                suff[j, a] = suff[j + 1, a] * E[j + 1, a]
        out_msg = np.empty(q)
        for j in range(J):
            for a in range(q):
                out_msg[a] = base[a] * pref[j, a] * suff[j, a]
            ok &= _normalize_row(out_msg)
            for b in range(q):
                acc = 0.0
                for a in range(q):
                    acc += empty_tables[j, a, b] * out_msg[a]
                down[nk0 + j, b] = acc
            ok &= _normalize_row(down[nk0 + j])

    for t in range(lo, ell):
        for u in range(2**t - 1, 2 ** (t + 1) - 1):
            for b in range(q):
                acc = 0.0
                for a in range(q):
                    for c in range(q):
                        acc += M[a, b, c] * down[u, a] * up[2 * u + 2, c]
                down[2 * u + 1, b] = acc
            ok &= _normalize_row(down[2 * u + 1])
            for c in range(q):
                acc = 0.0
                for a in range(q):
                    for b in range(q):
                        acc += M[a, b, c] * down[u, a] * up[2 * u + 1, b]
                down[2 * u + 2, c] = acc
            ok &= _normalize_row(down[2 * u + 2])

    for i in range(L):
        for a in range(q):
            leaf_inc[i, a] = down[leaf0 + i, a]
    return ok


@njit(cache=True, parallel=True)
def bp_batch_kernel(leaves, root_obs, M, p0, empty_tables, ell, k, root_post, leaf_inc, ok):
    B = leaves.shape[0]
    q = M.shape[0]
    n = 2 * leaves.shape[1] - 1
    for s in prange(B):
        up = np.zeros((n, q))
        down = np.zeros((n, q))
        ok[s] = _bp_single(
            leaves[s], root_obs[s], M, p0, empty_tables, ell, k, up, down, root_post[s], leaf_inc[s]
        )


def bp_batch(leaves, root_obs, M, p0, empty_tables, ell, k, want_messages=False):
    """Same contract as _kernels_numpy.bp_batch (message dump unsupported)."""
    if want_messages:
        raise ValueError("message dump is served by the numpy reference path")
    B, L = leaves.shape
    q = M.shape[0]
    if root_obs is None:
        root_obs = np.zeros(B, dtype=np.int64)
    root_post = np.empty((B, q))
    leaf_inc = np.empty((B, L, q))
    ok = np.empty(B, dtype=np.bool_)
    bp_batch_kernel(
        np.ascontiguousarray(leaves, dtype=np.int64),
        np.ascontiguousarray(root_obs, dtype=np.int64),
        M,
        p0,
        empty_tables,
        ell,
        k,
        root_post,
        leaf_inc,
        ok,
    )
    return root_post, leaf_inc, ok


@njit(cache=True, parallel=True)
def _embed_blocks_kernel(tokens, attn, M, own_is_left, q, ell):
    B, T, d = tokens.shape
    n_blocks = attn.shape[0]
    qq = q * q
    for s in prange(B):
        m_new = np.empty(q)
        r_new = np.empty((q, q))
        gathered = np.empty((T, q))
        for blk in range(n_blocks):
            for i in range(T):
                for c in range(q):
                    acc = 0.0
                    for j in range(T):
                        acc += attn[blk, i, j] * tokens[s, j, qq + c]
                    gathered[i, c] = acc
            for i in range(T):
                for c in range(q):
                    tokens[s, i, qq + q + c] += gathered[i, c]
            for i in range(T):
                left = own_is_left[blk, i]
                msum = 0.0
                for a in range(q):
                    acc = 0.0
                    for b in range(q):
                        for c in range(q):
                            if left:
                                acc += (
                                    M[a, b, c]
                                    * tokens[s, i, qq + b]
                                    * tokens[s, i, qq + q + c]
                                )
                            else:
                                acc += (
                                    M[a, c, b]
                                    * tokens[s, i, qq + b]
                                    * tokens[s, i, qq + q + c]
                                )
                    m_new[a] = acc
                    msum += acc
                rsum = 0.0
                for a in range(q):
                    for bp in range(q):
                        acc = 0.0
                        for h in range(q):
                            for c in range(q):
                                if left:
                                    acc += (
                                        M[bp, h, c]
                                        * tokens[s, i, a * q + h]
                                        * tokens[s, i, qq + q + c]
                                    )
                                else:
                                    acc += (
                                        M[bp, c, h]
                                        * tokens[s, i, a * q + h]
                                        * tokens[s, i, qq + q + c]
                                    )
                        r_new[a, bp] = acc
                        rsum += acc
                for a in range(q):
                    tokens[s, i, qq + a] += m_new[a] / msum - tokens[s, i, qq + a]
                for a in range(q):
                    for bp in range(q):
                        tokens[s, i, a * q + bp] += (
                            r_new[a, bp] / rsum - tokens[s, i, a * q + bp]
                        )
                for c in range(q):
                    tokens[s, i, qq + q + c] -= tokens[s, i, qq + q + c]


def embed_blocks(tokens, attn, M, own_is_left, q, ell):
    _embed_blocks_kernel(tokens, attn, M, np.ascontiguousarray(own_is_left), q, ell)
    return tokens
