"""Pure-numpy batch kernels, vectorized over samples.

Same contracts as _kernels_numba; selected through _backend. Messages are
kept in the probability domain and renormalized after every update, which
is safe at these tree sizes (at most 16 leaves) and is guarded by finite
checks in the drivers.
"""

from __future__ import annotations

import numpy as np


def _norm(arr: np.ndarray, ok: np.ndarray, sample_axis_shape) -> np.ndarray:
    """Normalize along the last axis; flag samples whose sum is not positive."""
    s = arr.sum(axis=-1, keepdims=True)
    bad = ~(s > 0) | ~np.isfinite(s)
    if bad.any():
        flat = bad.reshape(sample_axis_shape, -1).any(axis=1)
        ok &= ~flat
        s = np.where(bad, 1.0, s)
    return arr / s


def bp_batch(leaves, root_obs, M, p0, empty_tables, ell, k, want_messages=False):
    """Sum-product sweep (leaves up, then root down) for a batch of evidence.

    leaves: (B, 2**ell) int64, 0 = masked; root_obs: (B,) int64, 0 = hidden.
    Returns (root_post (B, q), leaf_inc (B, L, q), ok (B,) bool) and, when
    want_messages is set, the full up/down message tables as extra entries.
    """
    B, L = leaves.shape
    q = M.shape[0]
    n = 2 * L - 1
    leaf0 = L - 1
    ok = np.ones(B, dtype=bool)

    up = np.zeros((B, n, q))
    down = np.zeros((B, n, q))
    sym = np.arange(1, q + 1)
    onehot = (leaves[:, :, None] == sym[None, None, :]).astype(np.float64)
    up[:, leaf0:, :] = np.where(leaves[:, :, None] == 0, 1.0 / q, onehot)

    lo = k if k > 0 else 1
    for t in range(ell - 1, lo - 1, -1):
        us = np.arange(2**t - 1, 2 ** (t + 1) - 1)
        F = np.einsum("abc,sub,suc->sua", M, up[:, 2 * us + 1, :], up[:, 2 * us + 2, :])
        up[:, us, :] = _norm(F, ok, B)

    if root_obs is None:
        base = np.broadcast_to(p0, (B, q)).copy()
    else:
        base = np.where(
            root_obs[:, None] == 0,
            p0[None, :],
            (root_obs[:, None] == sym[None, :]).astype(np.float64),
        )

    if k == 0:
        F0 = np.einsum("abc,sb,sc->sa", M, up[:, 1, :], up[:, 2, :])
        root_post = _norm(base * F0, ok, B)
        down[:, 1, :] = _norm(
            np.einsum("abc,sa,sc->sb", M, base, up[:, 2, :]), ok, B
        )
        down[:, 2, :] = _norm(
            np.einsum("abc,sa,sb->sc", M, base, up[:, 1, :]), ok, B
        )
    else:
        nk = np.arange(2**k - 1, 2 ** (k + 1) - 1)
        J = nk.size
        E = np.einsum("jab,sjb->sja", empty_tables, up[:, nk, :])
        E = _norm(E, ok, B)
        root_post = _norm(base * np.prod(E, axis=1), ok, B)
        # leave-one-out products of the incoming messages per empty factor
        pref = np.ones((B, J, q))
        suff = np.ones((B, J, q))
        for j in range(1, J):
            pref[:, j] = pref[:, j - 1] * E[:, j - 1]
        for j in range(J - 2, -1, -1):
            suff[:, j] = suff[:, j + 1] * E[:, j + 1]
        out_msgs = _norm(base[:, None, :] * pref * suff, ok, B)
        down[:, nk, :] = _norm(
            np.einsum("jab,sja->sjb", empty_tables, out_msgs), ok, B
        )

    for t in range(lo, ell):
        us = np.arange(2**t - 1, 2 ** (t + 1) - 1)
        D = down[:, us, :]
        down[:, 2 * us + 1, :] = _norm(
            np.einsum("abc,sua,suc->sub", M, D, up[:, 2 * us + 2, :]), ok, B
        )
        down[:, 2 * us + 2, :] = _norm(
            np.einsum("abc,sua,sub->suc", M, D, up[:, 2 * us + 1, :]), ok, B
        )

    leaf_inc = down[:, leaf0:, :].copy()
    if want_messages:
        return root_post, leaf_inc, ok, up, down
    return root_post, leaf_inc, ok


def embed_blocks(tokens, attn, M, own_is_left, q, ell):
    """Run the attention/update blocks in place on (B, T, d) token arrays.

    Slot layout: r occupies [0, q*q), the subtree message m [q*q, q*q+q),
    the gathered complement message [q*q+q, q*q+2q), then the path signs.
    Every stage writes delta updates through residual addition.
    """
    B, T, d = tokens.shape
    r = tokens[:, :, : q * q].reshape(B, T, q, q)
    m = tokens[:, :, q * q : q * q + q]
    mbar = tokens[:, :, q * q + q : q * q + 2 * q]
    n_blocks = attn.shape[0]
    for blk in range(n_blocks):
        gathered = np.einsum("ij,sjc->sic", attn[blk], m)
        mbar += gathered  # residual add; slot was zero
        left = own_is_left[blk]  # (T,) bool
        m_new = np.empty_like(m)
        r_new = np.empty_like(r)
        if left.any():
            idx = np.nonzero(left)[0]
            m_new[:, idx] = np.einsum("abc,stb,stc->sta", M, m[:, idx], mbar[:, idx])
            r_new[:, idx] = np.einsum("bhc,stah,stc->stab", M, r[:, idx], mbar[:, idx])
        if (~left).any():
            idx = np.nonzero(~left)[0]
            m_new[:, idx] = np.einsum("abc,stc,stb->sta", M, m[:, idx], mbar[:, idx])
            r_new[:, idx] = np.einsum("bch,stah,stc->stab", M, r[:, idx], mbar[:, idx])
        m_new = m_new / m_new.sum(axis=-1, keepdims=True)
        r_new = r_new / r_new.sum(axis=(-2, -1), keepdims=True)
        m += m_new - m
        r += r_new - r
        mbar -= mbar
    return tokens
