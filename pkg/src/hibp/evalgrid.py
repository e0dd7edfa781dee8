"""Monte-Carlo accuracy estimation over (k_data, k_bp) grids.

Rows of a grid share one sample stream: every k_bp column scores the same
sequences (and mask positions), so across-column comparisons are paired and
re-running with the same seed reproduces every estimate exactly. Accuracy
is argmax accuracy with deterministic lowest-index tie-breaks; the mean
cross-entropy of the scored posterior is logged alongside for consumers
that want it, outside the fixed CSV schema.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bp import build_graph, infer_batch, naive_bayes_batch
from .embed import build_embedding, encode_batch, forward
from .errors import ParameterError
from .grammar import Grammar
from .seeding import child_seq, generator
from .treegen import TASK_CLASSIFICATION, TASK_MLM, _check_levels, leaf_offset, sample_trees

CSV_HEADER = "task,k_data,k_bp,n,accuracy,stderr,seed"

DEFAULT_N = {TASK_CLASSIFICATION: 10_000, TASK_MLM: 100_000}


@dataclass(frozen=True)
class AccuracyEstimate:
    task: str
    k_data: int
    k_bp: int
    n: int
    accuracy: float
    stderr: float
    seed: int
    cross_entropy: float | None = None

    def csv_row(self) -> str:
        return (
            f"{self.task},{self.k_data},{self.k_bp},{self.n},"
            f"{self.accuracy:.17g},{self.stderr:.17g},{self.seed}"
        )


def _binomial_stderr(acc: float, n: int) -> float:
    return float(np.sqrt(acc * (1.0 - acc) / n))


def _draw_cases(g, ell, k_data, task, n, seed_or_seq):
    """One shared stream per row: trees first, then mask positions."""
    rng = generator(seed_or_seq)
    nodes = sample_trees(g, ell, k_data, n, rng)
    leaves = nodes[:, leaf_offset(ell) :]
    roots = nodes[:, 0]
    if task == TASK_MLM:
        positions = rng.integers(1, leaves.shape[1] + 1, size=n)
        truths = leaves[np.arange(n), positions - 1].copy()
        masked = leaves.copy()
        masked[np.arange(n), positions - 1] = 0
        return masked, roots, positions, truths
    return leaves, roots, None, None


def _score(task, g, ell, k_bp, leaves, roots, positions, truths):
    """(hits bool array, mean cross-entropy) for one grid cell."""
    fg = build_graph(g, ell, k_bp)
    root_post, leaf_inc = infer_batch(fg, leaves)
    n = leaves.shape[0]
    if task == TASK_CLASSIFICATION:
        pred = np.argmax(root_post, axis=1) + 1
        hits = pred == roots
        p_true = root_post[np.arange(n), roots - 1]
    else:
        scored = leaf_inc[np.arange(n), positions - 1]
        pred = np.argmax(scored, axis=1) + 1
        hits = pred == truths
        p_true = scored[np.arange(n), truths - 1]
    xent = float(-np.mean(np.log(np.maximum(p_true, 1e-300))))
    return hits, xent


def mc_accuracy(
    g: Grammar, ell: int, k_data: int, k_bp: int, task: str, n: int, seed: int
) -> AccuracyEstimate:
    """Accuracy of k_bp inference on n fresh samples generated at k_data."""
    _check_levels(ell, k_data)
    _check_levels(ell, k_bp)
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if task not in (TASK_CLASSIFICATION, TASK_MLM):
        raise ParameterError(f"unknown task {task!r}")
    leaves, roots, positions, truths = _draw_cases(g, ell, k_data, task, n, seed)
    hits, xent = _score(task, g, ell, k_bp, leaves, roots, positions, truths)
    acc = float(hits.mean())
    return AccuracyEstimate(
        task=task,
        k_data=k_data,
        k_bp=k_bp,
        n=n,
        accuracy=acc,
        stderr=_binomial_stderr(acc, n),
        seed=int(seed),
        cross_entropy=xent,
    )


def reference_curves(
    g: Grammar, ell: int, task: str, n: int | None = None, seed: int = 0
) -> list[AccuracyEstimate]:
    """Full (k_data, k_bp) grid with one shared sample stream per row."""
    if task not in (TASK_CLASSIFICATION, TASK_MLM):
        raise ParameterError(f"unknown task {task!r}")
    if n is None:
        n = DEFAULT_N[task]
    estimates = []
    for k_data in range(ell + 1):
        cases = _draw_cases(g, ell, k_data, task, n, child_seq(seed, k_data))
        for k_bp in range(ell + 1):
            hits, xent = _score(task, g, ell, k_bp, *cases)
            acc = float(hits.mean())
            estimates.append(
                AccuracyEstimate(
                    task=task,
                    k_data=k_data,
                    k_bp=k_bp,
                    n=n,
                    accuracy=acc,
                    stderr=_binomial_stderr(acc, n),
                    seed=int(seed),
                    cross_entropy=xent,
                )
            )
    return estimates


def paired_hits(g: Grammar, ell: int, task: str, k_data: int, k_bps, n: int, seed: int):
    """Per-sample hit vectors for several k_bp on one shared stream,
    for paired significance comparisons."""
    cases = _draw_cases(g, ell, k_data, task, n, child_seq(seed, k_data))
    return {k_bp: _score(task, g, ell, k_bp, *cases)[0] for k_bp in k_bps}


def grid_csv(estimates) -> str:
    lines = [CSV_HEADER]
    lines += [e.csv_row() for e in estimates]
    return "\n".join(lines) + "\n"


def naive_bayes_accuracy(g: Grammar, ell: int, n: int, seed: int) -> AccuracyEstimate:
    """Classification accuracy of the closed-form fully filtered readout on
    the identical sample stream as mc_accuracy(k_data=ell, ...)."""
    leaves, roots, _, _ = _draw_cases(g, ell, ell, TASK_CLASSIFICATION, n, seed)
    post = naive_bayes_batch(g, ell, leaves)
    pred = np.argmax(post, axis=1) + 1
    acc = float((pred == roots).mean())
    return AccuracyEstimate(
        task=TASK_CLASSIFICATION,
        k_data=ell,
        k_bp=ell,
        n=n,
        accuracy=acc,
        stderr=_binomial_stderr(acc, n),
        seed=int(seed),
    )


def embed_vs_bp_report(g: Grammar, ell: int, k: int, betas, n: int, seed: int) -> dict:
    """Deviation of the attention-block execution from message passing.

    Draws n single-mask cases at data level k once, then scores every beta
    on the same cases; reports max/mean absolute deviation over all leaf
    marginals plus per-block attention leakage.
    """
    _check_levels(ell, k)
    leaves, _, _, _ = _draw_cases(g, ell, k, TASK_MLM, n, seed)
    fg = build_graph(g, ell, k)
    _, leaf_inc = infer_batch(fg, leaves)
    tokens = encode_batch(leaves, g, ell)
    report = {"ell": ell, "k": k, "cases": int(n), "seed": int(seed), "per_beta": []}
    for beta in betas:
        et = build_embedding(g, ell, k, beta)
        out = forward(et, tokens)
        dev = np.abs(out - leaf_inc)
        report["per_beta"].append(
            {
                "beta": float(beta),
                "max_abs_dev": float(dev.max()),
                "mean_abs_dev": float(dev.mean()),
                "per_block_attention_leakage": [float(x) for x in et.attention_leakage()],
            }
        )
    devs = [b["max_abs_dev"] for b in report["per_beta"]]
    report["strictly_decreasing"] = all(a > b for a, b in zip(devs, devs[1:]))
    return report
