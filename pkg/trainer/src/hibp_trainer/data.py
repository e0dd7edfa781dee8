"""Readers for the exported artifact formats and validation stream setup.

Everything crosses the package boundary as files: dataset directories
(meta.json + raw u8 tables + masks.jsonl), trees.u8 node dumps, grammar
JSON and grid CSVs. Validation streams are produced by invoking the `hibp`
command line, never by importing it.
"""

from __future__ import annotations

import json
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class SequenceData:
    q: int
    ell: int
    k: int
    P: int
    task: str
    grammar_hash: str
    master_seed: int
    sequences: np.ndarray  # (P, 2**ell) int64, symbols 1..q
    labels: np.ndarray | None  # (P,) roots (classification)
    masks: np.ndarray | None  # (P, 2) [pos 1-based, true symbol] (mlm)

    @property
    def seq_len(self) -> int:
        return 2**self.ell


def load_dataset_dir(path) -> SequenceData:
    root = Path(path)
    meta = json.loads((root / "meta.json").read_text())
    P, ell = int(meta["P"]), int(meta["ell"])
    L = 2**ell
    seqs = np.frombuffer((root / "sequences.u8").read_bytes(), dtype=np.uint8)
    if seqs.size != P * L:
        raise ValueError(f"{path}: sequences.u8 holds {seqs.size} bytes, expected {P * L}")
    sequences = seqs.reshape(P, L).astype(np.int64)
    labels = None
    masks = None
    if meta["task"] == "classification":
        labels = np.frombuffer((root / "labels.u8").read_bytes(), dtype=np.uint8).astype(np.int64)
        if labels.size != P:
            raise ValueError(f"{path}: labels.u8 size mismatch")
    else:
        rows = [json.loads(line) for line in (root / "masks.jsonl").read_text().splitlines()]
        masks = np.array([(r["pos"], r["true"]) for r in rows], dtype=np.int64)
        if masks.shape[0] != P:
            raise ValueError(f"{path}: masks.jsonl row count mismatch")
    return SequenceData(
        q=int(meta["q"]),
        ell=ell,
        k=int(meta["k"]),
        P=P,
        task=meta["task"],
        grammar_hash=meta["grammar_hash"],
        master_seed=int(meta["master_seed"]),
        sequences=sequences,
        labels=labels,
        masks=masks,
    )


def load_trees_u8(path, ell: int) -> np.ndarray:
    """(N, 2**(ell+1)-1) node table written by `hibp sample --count`;
    0 marks unsampled slots."""
    n_nodes = 2 ** (ell + 1) - 1
    raw = np.frombuffer(Path(path).read_bytes(), dtype=np.uint8)
    if raw.size % n_nodes:
        raise ValueError(f"{path}: size {raw.size} is not a multiple of {n_nodes}")
    return raw.reshape(-1, n_nodes).astype(np.int64)


def ancestor_labels(trees: np.ndarray, ell: int, ancestor_level: int) -> np.ndarray:
    """(N, 2**ell) symbol of each leaf's ancestor at the given depth
    (0 = root, ell = the leaf itself). Requires those levels sampled."""
    if not 0 <= ancestor_level <= ell:
        raise ValueError(f"ancestor level must be in 0..{ell}")
    L = 2**ell
    leaf_ids = np.arange(L)
    anc_idx = (2**ancestor_level - 1) + (leaf_ids >> (ell - ancestor_level))
    out = trees[:, anc_idx]
    if (out == 0).any():
        raise ValueError(
            f"ancestor level {ancestor_level} was not sampled in these trees (filtered dataset?)"
        )
    return out


def load_grid_csv(path) -> dict[tuple[str, int, int], dict]:
    """Reference grid rows keyed by (task, k_data, k_bp)."""
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    expect = ["task", "k_data", "k_bp", "n", "accuracy", "stderr", "seed"]
    if header != expect:
        raise ValueError(f"{path}: unexpected grid header {header}")
    out = {}
    for line in lines[1:]:
        task, k_data, k_bp, n, acc, se, seed = line.split(",")
        out[(task, int(k_data), int(k_bp))] = {
            "n": int(n),
            "accuracy": float(acc),
            "stderr": float(se),
            "seed": int(seed),
        }
    return out


def run_hibp(args: list[str]) -> None:
    """Invoke the primary CLI in a subprocess."""
    proc = subprocess.run(
        [sys.executable, "-m", "hibp.cli", *args], capture_output=True, text=True
    )
    if proc.returncode != 0:
        raise RuntimeError(f"hibp {' '.join(args)} failed:\n{proc.stderr}")


def make_validation_streams(
    grammar: str, ell: int, n: int, seed_base: int, out_root, task: str = "mlm", ks=None
) -> dict[int, Path]:
    """One fresh dataset per filtering level for per-epoch scoring.

    Seeds are seed_base + k, disjoint from any training master seed by
    convention (training seeds are small, validation bases start at 10**6).
    """
    out_root = Path(out_root)
    paths = {}
    for k in ks if ks is not None else range(ell + 1):
        out = out_root / f"val_k{k}"
        if not (out / "meta.json").exists():
            run_hibp(
                ["dataset", "--grammar", str(grammar), "--ell", str(ell), "--k", str(k),
                 "--P", str(n), "--task", task, "--seed", str(seed_base + k),
                 "--out", str(out)]
            )
        paths[k] = out
    return paths
