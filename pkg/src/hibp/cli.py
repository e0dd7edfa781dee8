"""Command-line surface.

Subcommands: grammar-gen, sample, dataset, bp-infer, oracle-check,
eval-grid, embed-check. Every invocation writes a manifest next to its
outputs. Exit codes: 0 success, 1 validation/usage error, 2 an internal
consistency check failed. HIBP_SEED overrides --seed when set; --threads
caps the parallel kernel workers.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, _backend, canonical
from .bp import build_graph, infer
from .embed import build_embedding
from .errors import HibpError
from .evalgrid import embed_vs_bp_report, grid_csv, reference_curves
from .grammar import build_grammar
from .io import read_evidence, read_grammar, write_dataset, write_grammar, write_manifest
from .oracle import enumerate_posteriors
from .seeding import sample_stream, TREE_ROLE
from .treegen import (
    TASK_CLASSIFICATION,
    TASK_MLM,
    apply_mask,
    generate_dataset,
    sample_tree,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CHECK_FAILED = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _effective_seed(seed: int) -> int:
    env = os.environ.get("HIBP_SEED")
    return int(env) if env else int(seed)


def _manifest_path(out: Path) -> Path:
    if out.suffix:
        return out.with_name(out.name + ".manifest.json")
    return out / "manifest.json"


def _emit_manifest(args, params, seeds, outputs, t0, grammar_hash=None):
    out = Path(outputs[0])
    write_manifest(
        _manifest_path(out),
        command=[Path(sys.argv[0]).name, *sys.argv[1:]] if sys.argv else ["hibp"],
        version=__version__,
        parameters=params,
        seeds=seeds,
        outputs=outputs,
        wall_clock_s=time.monotonic() - t0,
        grammar_hash=grammar_hash,
    )


def cmd_grammar_gen(args) -> int:
    t0 = time.monotonic()
    seed = _effective_seed(args.seed)
    g = build_grammar(args.q, args.sigma, seed)
    digest = write_grammar(g, args.out)
    _emit_manifest(
        args,
        params={"q": args.q, "sigma": args.sigma},
        seeds={"seed": seed},
        outputs=[args.out],
        t0=t0,
        grammar_hash=digest,
    )
    print(f"wrote {args.out} ({digest[:12]}...)")
    return EXIT_OK


def cmd_sample(args) -> int:
    t0 = time.monotonic()
    g = read_grammar(args.grammar)
    seed = _effective_seed(args.seed)
    if args.count == 1 and args.out is None:
        tree = sample_tree(g, args.ell, args.k, sample_stream(seed, args.index_start, TREE_ROLE))
        print(json.dumps({"ell": args.ell, "k": args.k, "nodes": tree.nodes.tolist()}))
        return EXIT_OK
    out = Path(args.out) if args.out else Path("trees.u8")
    n_nodes = 2 ** (args.ell + 1) - 1
    rows = np.empty((args.count, n_nodes), dtype=np.uint8)
    for i in range(args.count):
        idx = args.index_start + i
        rows[i] = sample_tree(g, args.ell, args.k, sample_stream(seed, idx, TREE_ROLE)).nodes
    out.write_bytes(rows.tobytes(order="C"))
    _emit_manifest(
        args,
        params={"ell": args.ell, "k": args.k, "count": args.count, "index_start": args.index_start},
        seeds={"seed": seed, "derivation": "per-record stream (seed, index, 0)"},
        outputs=[str(out)],
        t0=t0,
        grammar_hash=g.digest(),
    )
    print(f"wrote {out} ({args.count} trees, {n_nodes} node slots each, 0 marks unsampled)")
    return EXIT_OK


def cmd_dataset(args) -> int:
    t0 = time.monotonic()
    g = read_grammar(args.grammar)
    seed = _effective_seed(args.seed)
    task = {"classification": TASK_CLASSIFICATION, "mlm": TASK_MLM}[args.task]
    ds = generate_dataset(g, args.ell, args.k, args.P, task, seed)
    write_dataset(ds, args.out, q=g.q)
    files = ["meta.json", "sequences.u8", "labels.u8" if task == TASK_CLASSIFICATION else "masks.jsonl"]
    _emit_manifest(
        args,
        params={"ell": args.ell, "k": args.k, "P": args.P, "task": args.task},
        seeds={"master_seed": seed, "derivation": "per-record streams (seed, i, role)"},
        outputs=[args.out, *(str(Path(args.out) / f) for f in files)],
        t0=t0,
        grammar_hash=ds.grammar_hash,
    )
    print(f"wrote {args.out} (P={args.P}, task={args.task})")
    return EXIT_OK


def cmd_bp_infer(args) -> int:
    t0 = time.monotonic()
    g = read_grammar(args.grammar)
    ev = read_evidence(args.evidence, args.ell)
    fg = build_graph(g, args.ell, args.k_bp)
    post = infer(fg, ev, internals=args.internals)
    doc = {
        "root": [float(x) for x in post.root],
        "leaf_incoming": [[float(x) for x in row] for row in post.leaf_incoming],
    }
    if post.internal is not None:
        doc["internal"] = {str(n): [float(x) for x in v] for n, v in sorted(post.internal.items())}
    text = canonical.dumps(doc) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        _emit_manifest(
            args,
            params={"ell": args.ell, "k_bp": args.k_bp, "evidence": str(args.evidence)},
            seeds={},
            outputs=[args.out],
            t0=t0,
            grammar_hash=g.digest(),
        )
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    t0 = time.monotonic()
    seed = _effective_seed(args.seed)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(args.trials):
        g = build_grammar(args.q, args.sigma, int(rng.integers(2**62)))
        k_data = int(rng.integers(0, args.ell + 1))
        k_bp = int(rng.integers(0, args.ell + 1))
        tree = sample_tree(g, args.ell, k_data, int(rng.integers(2**62)))
        n_mask = int(rng.integers(0, 2))
        positions = set()
        if n_mask:
            positions = {int(rng.integers(1, 2**args.ell + 1))}
        ev = apply_mask(tree.leaves, positions)
        got = infer(build_graph(g, args.ell, k_bp), ev)
        want = enumerate_posteriors(g, args.ell, k_bp, ev)
        dev = max(
            float(np.abs(got.root - want.root).max()),
            float(np.abs(got.leaf_incoming - want.leaf_incoming).max()),
        )
        worst = max(worst, dev)
        if dev > args.tol:
            print(f"FAIL trial {trial}: max deviation {dev:.3e} > {args.tol:.1e}")
            return EXIT_CHECK_FAILED
    print(f"ok: {args.trials} trials, worst deviation {worst:.3e} <= {args.tol:.1e}")
    return EXIT_OK


def cmd_eval_grid(args) -> int:
    t0 = time.monotonic()
    g = read_grammar(args.grammar)
    seed = _effective_seed(args.seed)
    task = {"classification": TASK_CLASSIFICATION, "mlm": TASK_MLM}[args.task]
    estimates = reference_curves(g, args.ell, task, n=args.n, seed=seed)
    Path(args.out).write_text(grid_csv(estimates))
    side = {
        "n": estimates[0].n,
        "seed": seed,
        "cross_entropy": {
            f"{e.k_data},{e.k_bp}": e.cross_entropy for e in estimates
        },
    }
    Path(str(args.out) + ".meta.json").write_text(json.dumps(side, indent=2) + "\n")
    _emit_manifest(
        args,
        params={"ell": args.ell, "task": args.task, "n": estimates[0].n},
        seeds={"seed": seed},
        outputs=[args.out, str(args.out) + ".meta.json"],
        t0=t0,
        grammar_hash=g.digest(),
    )
    print(f"wrote {args.out} ({len(estimates)} cells)")
    return EXIT_OK


def cmd_embed_check(args) -> int:
    t0 = time.monotonic()
    g = read_grammar(args.grammar)
    seed = _effective_seed(args.seed)
    betas = [float(b) for b in args.betas.split(",")]
    report = embed_vs_bp_report(g, args.ell, args.k, betas, args.n, seed)
    Path(args.out).write_text(json.dumps(report, indent=2) + "\n")
    outputs = [args.out]
    if args.attn_csv:
        attn_dir = Path(args.attn_csv)
        attn_dir.mkdir(parents=True, exist_ok=True)
        et = build_embedding(g, args.ell, args.k, betas[-1])
        for blk in range(et.n_blocks):
            p = attn_dir / f"attention_block{blk + 1}.csv"
            np.savetxt(p, et.attn[blk], delimiter=",", fmt="%.17g")
            outputs.append(str(p))
    _emit_manifest(
        args,
        params={"ell": args.ell, "k": args.k, "betas": betas, "n": args.n},
        seeds={"seed": seed},
        outputs=outputs,
        t0=t0,
        grammar_hash=g.digest(),
    )
    worst = max(b["max_abs_dev"] for b in report["per_beta"])
    print(f"wrote {args.out} (worst max_abs_dev {worst:.3e})")
    return EXIT_OK


def build_parser() -> _Parser:
    p = _Parser(prog="hibp", description=__doc__)
    p.add_argument("--threads", type=int, default=0, help="cap parallel kernel workers")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("grammar-gen", help="sample a grammar and write it to JSON")
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--sigma", type=float, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_grammar_gen)

    sp = sub.add_parser("sample", help="sample trees with per-record derived streams")
    sp.add_argument("--grammar", required=True)
    sp.add_argument("--ell", type=int, required=True)
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--count", type=int, default=1)
    sp.add_argument("--index-start", type=int, default=0)
    sp.add_argument("--out", help="u8 node table output (count*(2**(ell+1)-1) bytes)")
    sp.set_defaults(fn=cmd_sample)

    sp = sub.add_parser("dataset", help="export a dataset directory")
    sp.add_argument("--grammar", required=True)
    sp.add_argument("--ell", type=int, required=True)
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--P", type=int, required=True)
    sp.add_argument("--task", choices=["classification", "mlm"], required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_dataset)

    sp = sub.add_parser("bp-infer", help="posteriors for one evidence file")
    sp.add_argument("--grammar", required=True)
    sp.add_argument("--ell", type=int, required=True)
    sp.add_argument("--k-bp", type=int, required=True)
    sp.add_argument("--evidence", required=True)
    sp.add_argument("--internals", action="store_true")
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_bp_infer)

    sp = sub.add_parser("oracle-check", help="message passing vs exhaustive enumeration")
    sp.add_argument("--ell", type=int, required=True)
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_oracle_check)

    sp = sub.add_parser("eval-grid", help="accuracy grid over (k_data, k_bp)")
    sp.add_argument("--grammar", required=True)
    sp.add_argument("--ell", type=int, required=True)
    sp.add_argument("--task", choices=["classification", "mlm"], required=True)
    sp.add_argument("--n", type=int, default=None,
                    help="samples per row (default 10^4 classification, 10^5 mlm)")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_eval_grid)

    sp = sub.add_parser("embed-check", help="attention-block execution vs message passing")
    sp.add_argument("--grammar", required=True)
    sp.add_argument("--ell", type=int, required=True)
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--betas", default="10,30,50")
    sp.add_argument("--n", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--attn-csv", help="directory for per-block attention CSV dumps")
    sp.set_defaults(fn=cmd_embed_check)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads:
        _backend.set_threads(args.threads)
    try:
        return args.fn(args)
    except HibpError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
