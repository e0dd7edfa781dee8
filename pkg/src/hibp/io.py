"""File formats: grammar JSON, dataset directories, grids, manifests.

Grammar files are a single JSON document (canonical key order, floats with
17 significant digits so doubles round-trip bit-exactly). Datasets are a
directory of meta.json plus raw u8 tables, trivially loadable from any
language. Every CLI invocation writes a manifest recording the command,
parameters, seeds and outputs; re-running a manifest's command reproduces
the data files byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import canonical
from .errors import FormatError, IntegrityError
from .grammar import Grammar, Partition, assemble_grammar
from .treegen import TASK_CLASSIFICATION, TASK_MLM, Dataset

FORMAT_VERSION = 1


def grammar_digest(g: Grammar) -> str:
    return g.digest()


def write_grammar(g: Grammar, path) -> str:
    """Write the canonical grammar document; returns the content hash."""
    data = canonical.dump_bytes(g.doc()) + b"\n"
    Path(path).write_bytes(data)
    return g.digest()


def read_grammar(path) -> Grammar:
    """Parse and validate a grammar file.

    The stored tensor is authoritative for the transition probabilities
    (cross-implementation writers may differ from our softmax in the last
    ulp); the logits are kept for provenance and checked against the tensor
    at 1e-9.
    """
    raw = Path(path).read_bytes()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}") from e
    for field in ("q", "sigma", "seed", "p0", "partition", "logits", "tensor"):
        if field not in doc:
            raise FormatError(f"{path}: missing field {field!r}")
    q = int(doc["q"])
    if q < 1:
        raise FormatError(f"{path}: q must be >= 1")
    part_lists = doc["partition"]
    if len(part_lists) != q or any(len(block) != q for block in part_lists):
        raise FormatError(f"{path}: partition must hold q blocks of q pairs")
    pairs = np.asarray(part_lists, dtype=np.int64)
    if pairs.shape != (q, q, 2) or pairs.min() < 1 or pairs.max() > q:
        raise FormatError(f"{path}: partition entries must be 1-based pairs in 1..q")
    seen = {(int(b), int(c)) for blk in pairs for b, c in blk}
    if len(seen) != q * q:
        raise FormatError(f"{path}: partition blocks must cover all pairs disjointly")
    partition = Partition(q=q, pairs=pairs)

    tensor = np.asarray(doc["tensor"], dtype=np.float64)
    if tensor.size != q**3:
        raise FormatError(f"{path}: tensor must hold q**3 floats")
    M = tensor.reshape(q, q, q)
    rows = M.sum(axis=(1, 2))
    if np.abs(rows - 1.0).max() > 1e-9:
        raise FormatError(f"{path}: tensor rows must sum to 1 within 1e-9")
    if (M < 0).any():
        raise FormatError(f"{path}: tensor entries must be non-negative")
    support = np.zeros((q, q, q), dtype=bool)
    for a0 in range(q):
        support[a0, pairs[a0, :, 0] - 1, pairs[a0, :, 1] - 1] = True
    if (M[~support] != 0).any() or (M[support] <= 0).any():
        raise FormatError(f"{path}: tensor support must match the partition exactly")

    xi = np.zeros((q, q, q), dtype=np.float64)
    for entry in doc["logits"]:
        xi[int(entry["a"]) - 1, int(entry["b"]) - 1, int(entry["c"]) - 1] = float(entry["xi"])
    p0 = np.asarray(doc["p0"], dtype=np.float64)
    sigma = float(doc["sigma"])
    recomputed = assemble_grammar(q, sigma, int(doc["seed"]), partition, xi, p0)
    if np.abs(recomputed.M - M).max() > 1e-9:
        raise IntegrityError(f"{path}: logits and tensor disagree beyond 1e-9")
    # keep the stored tensor bit-exact
    return Grammar(
        q=q,
        sigma=sigma,
        seed=int(doc["seed"]),
        partition=partition,
        xi=xi,
        M=M,
        ML=M.sum(axis=2),
        MR=M.sum(axis=1),
        p0=recomputed.p0,
    )


def dataset_meta(ds: Dataset, q: int) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "grammar_hash": ds.grammar_hash,
        "q": int(q),
        "ell": ds.ell,
        "k": ds.k,
        "P": ds.P,
        "task": ds.task,
        "master_seed": ds.master_seed,
    }


def write_dataset(ds: Dataset, out_dir, q: int) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "meta.json").write_bytes(canonical.dump_bytes(dataset_meta(ds, q)) + b"\n")
    (out / "sequences.u8").write_bytes(ds.sequences.astype(np.uint8).tobytes(order="C"))
    if ds.task == TASK_CLASSIFICATION:
        (out / "labels.u8").write_bytes(ds.labels.astype(np.uint8).tobytes())
    else:
        with open(out / "masks.jsonl", "wb") as fh:
            for pos, true in ds.masks:
                fh.write(f'{{"pos":{int(pos)},"true":{int(true)}}}\n'.encode("ascii"))


def read_dataset(path, expected_grammar_hash: str | None = None) -> tuple[Dataset, dict]:
    root = Path(path)
    try:
        meta = json.loads((root / "meta.json").read_text())
    except FileNotFoundError:
        raise FormatError(f"{path}: missing meta.json")
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}/meta.json: invalid JSON at line {e.lineno}") from e
    for field in ("format_version", "grammar_hash", "q", "ell", "k", "P", "task", "master_seed"):
        if field not in meta:
            raise FormatError(f"{path}/meta.json: missing field {field!r}")
    if expected_grammar_hash is not None and meta["grammar_hash"] != expected_grammar_hash:
        raise IntegrityError(
            f"{path}: dataset was generated from grammar {meta['grammar_hash'][:12]}..., "
            f"expected {expected_grammar_hash[:12]}..."
        )
    P, ell, task = int(meta["P"]), int(meta["ell"]), meta["task"]
    L = 2**ell
    seqs = np.frombuffer((root / "sequences.u8").read_bytes(), dtype=np.uint8)
    if seqs.size != P * L:
        raise FormatError(f"{path}: sequences.u8 holds {seqs.size} bytes, expected {P * L}")
    sequences = seqs.reshape(P, L).copy()
    if sequences.min() < 1 or sequences.max() > int(meta["q"]):
        raise FormatError(f"{path}: sequence symbols outside 1..q")
    labels = None
    masks = None
    if task == TASK_CLASSIFICATION:
        lab = np.frombuffer((root / "labels.u8").read_bytes(), dtype=np.uint8)
        if lab.size != P:
            raise FormatError(f"{path}: labels.u8 holds {lab.size} bytes, expected {P}")
        labels = lab.copy()
    elif task == TASK_MLM:
        rows = []
        with open(root / "masks.jsonl", "rb") as fh:
            for lineno, line in enumerate(fh, start=1):
                try:
                    rec = json.loads(line)
                    rows.append((int(rec["pos"]), int(rec["true"])))
                except (json.JSONDecodeError, KeyError) as e:
                    raise FormatError(f"{path}/masks.jsonl: bad record at line {lineno}") from e
        if len(rows) != P:
            raise FormatError(f"{path}: masks.jsonl holds {len(rows)} records, expected {P}")
        masks = np.asarray(rows, dtype=np.int64)
    else:
        raise FormatError(f"{path}: unknown task {task!r}")
    ds = Dataset(
        grammar_hash=meta["grammar_hash"],
        ell=ell,
        k=int(meta["k"]),
        P=P,
        task=task,
        sequences=sequences,
        labels=labels,
        masks=masks,
        master_seed=int(meta["master_seed"]),
    )
    return ds, meta


def write_manifest(path, command, version, parameters, seeds, outputs, wall_clock_s, grammar_hash=None):
    doc = {
        "command": list(command),
        "version": version,
        "grammar_hash": grammar_hash,
        "parameters": parameters,
        "seeds": seeds,
        "outputs": [str(p) for p in outputs],
        "wall_clock_s": float(wall_clock_s),
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
    return doc


def read_evidence(path, ell: int):
    """Evidence JSON: {"leaves": [int-or-null per leaf], "root": int-or-null}."""
    from .treegen import Evidence

    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON at line {e.lineno}") from e
    if "leaves" not in doc:
        raise FormatError(f"{path}: missing 'leaves'")
    leaves = np.array([0 if v is None else int(v) for v in doc["leaves"]], dtype=np.int64)
    if leaves.size != 2**ell:
        raise FormatError(f"{path}: expected {2**ell} leaf entries, got {leaves.size}")
    root = doc.get("root")
    return Evidence(ell=ell, leaves=leaves, root=None if root is None else int(root))
