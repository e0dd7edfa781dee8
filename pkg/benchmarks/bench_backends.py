#!/usr/bin/env python3
"""Time the hot kernels on the numba and numpy backends.

Runs the batched sum-product sweep and the attention-block executor over a
range of batch sizes and prints wall times plus the speedup ratio. The
first numba call includes JIT compilation; a warmup pass absorbs it.

Usage: python3 benchmarks/bench_backends.py [--n 100000] [--ell 4] [--q 4]
"""

import argparse
import time

import numpy as np

from hibp import _kernels_numba, _kernels_numpy
from hibp.embed import build_embedding, encode_batch
from hibp.grammar import build_grammar
from hibp.treegen import leaf_offset, level_tables, sample_trees


def time_call(fn, *args, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--ell", type=int, default=4)
    ap.add_argument("--q", type=int, default=4)
    ap.add_argument("--k", type=int, default=0)
    args = ap.parse_args()

    g = build_grammar(args.q, 1.0, seed=7)
    tables = level_tables(g, args.ell, args.k) if args.k else np.zeros((0, args.q, args.q))
    leaves = sample_trees(g, args.ell, args.k, args.n, seed=3)[:, leaf_offset(args.ell) :]
    rng = np.random.default_rng(0)
    masked = leaves.copy()
    masked[np.arange(args.n), rng.integers(0, leaves.shape[1], args.n)] = 0
    root_obs = np.zeros(args.n, dtype=np.int64)

    print(f"bp_batch: n={args.n}, ell={args.ell}, q={args.q}, k={args.k}")
    warm = masked[:256]
    _kernels_numba.bp_batch(warm, root_obs[:256], g.M, g.p0, tables, args.ell, args.k)
    t_nb = time_call(
        _kernels_numba.bp_batch, masked, root_obs, g.M, g.p0, tables, args.ell, args.k
    )
    t_np = time_call(
        _kernels_numpy.bp_batch, masked, root_obs, g.M, g.p0, tables, args.ell, args.k
    )
    print(f"  numba {t_nb * 1e3:9.1f} ms   numpy {t_np * 1e3:9.1f} ms   speedup x{t_np / t_nb:.1f}")

    n_embed = min(args.n, 20_000)
    et = build_embedding(g, args.ell, args.k, beta=50.0) if args.k < args.ell else None
    if et is not None:
        tokens = encode_batch(masked[:n_embed], g, args.ell)
        print(f"embed_blocks: n={n_embed}")
        _kernels_numba.embed_blocks(tokens[:256].copy(), et.attn, g.M, et.own_is_left, g.q, args.ell)
        t_nb = time_call(
            lambda: _kernels_numba.embed_blocks(tokens.copy(), et.attn, g.M, et.own_is_left, g.q, args.ell)
        )
        t_np = time_call(
            lambda: _kernels_numpy.embed_blocks(tokens.copy(), et.attn, g.M, et.own_is_left, g.q, args.ell)
        )
        print(f"  numba {t_nb * 1e3:9.1f} ms   numpy {t_np * 1e3:9.1f} ms   speedup x{t_np / t_nb:.1f}")


if __name__ == "__main__":
    main()
