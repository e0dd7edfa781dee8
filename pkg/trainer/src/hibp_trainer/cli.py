"""Command line: train models, dump attention maps, probe ancestors,
or reproduce a full experiment config."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import torch

from .attention import block_contrast, dump_attention_maps, save_maps_csv
from .data import load_dataset_dir, load_grid_csv, load_trees_u8, make_validation_streams
from .model import Encoder, EncoderConfig
from .probes import probe_ancestors
from .runner import run_config
from .train import train_classifier, train_mlm


def _load_model(checkpoint, data, n_layers, d, d_prime):
    cfg = EncoderConfig(q=data.q, seq_len=data.seq_len, n_layers=n_layers, d=d, d_prime=d_prime)
    model = Encoder(cfg)
    model.load_state_dict(torch.load(checkpoint, map_location="cpu", weights_only=True))
    return model


def _add_arch_args(sp):
    sp.add_argument("--n-layers", type=int, default=None)
    sp.add_argument("--d", type=int, default=128)
    sp.add_argument("--d-prime", type=int, default=2048)


def cmd_train(args) -> int:
    data = load_dataset_dir(args.dataset)
    cfg = EncoderConfig(
        q=data.q,
        seq_len=data.seq_len,
        n_layers=args.n_layers or data.ell,
        d=args.d,
        d_prime=args.d_prime,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    val_data = None
    references = None
    if args.grammar and args.val_n:
        paths = make_validation_streams(
            args.grammar, data.ell, args.val_n, args.val_seed_base, out / "val", data.task
        )
        val_data = {k: load_dataset_dir(p) for k, p in paths.items()}
    if args.grid:
        grid = load_grid_csv(args.grid)
        references = {
            k: grid[(data.task, k, data.k)]["accuracy"] for k in range(data.ell + 1)
        }
    kwargs = dict(
        config=cfg,
        epochs=args.epochs,
        seed=args.seed,
        val_data=val_data,
        references=references,
        log_path=out / "train_log.jsonl",
        checkpoint_path=out / "model.ckpt",
    )
    if data.task == "classification":
        _, log = train_classifier(args.dataset, init=args.init, **kwargs)
    else:
        _, log = train_mlm(args.dataset, **kwargs)
    print(json.dumps(log.final))
    return 0


def cmd_attention(args) -> int:
    data = load_dataset_dir(args.dataset)
    model = _load_model(args.checkpoint, data, args.n_layers or data.ell, args.d, args.d_prime)
    maps = dump_attention_maps(model, data, n_inputs=args.n)
    paths = save_maps_csv(maps, args.out_dir)
    default_scale = 2 ** (data.ell - data.k) if data.k > 0 else 2 ** (data.ell - 1)
    scale = args.scale or default_scale
    stats = {f"layer{i + 1}": block_contrast(m, scale) for i, m in enumerate(maps)}
    print(json.dumps({"scale": scale, "block_contrast": stats, "files": [str(p) for p in paths]}))
    return 0


def cmd_probe(args) -> int:
    data = load_dataset_dir(args.dataset)
    model = _load_model(args.checkpoint, data, args.n_layers or data.ell, args.d, args.d_prime)
    trees = load_trees_u8(args.trees, data.ell)
    acc = probe_ancestors(
        model,
        data,
        trees,
        encoder_level=args.encoder_level,
        ancestor_level=args.ancestor_level,
        n_train=args.n_train,
        n_val=args.n_val,
        epochs=args.epochs,
        seed=args.seed,
    )
    print(json.dumps({
        "encoder_level": args.encoder_level,
        "ancestor_level": args.ancestor_level,
        "accuracy": acc,
    }))
    return 0


def cmd_reproduce(args) -> int:
    verdict = run_config(args.config, workdir=args.workdir)
    print(json.dumps(verdict, indent=2))
    return 0 if verdict.get("passed") else 3


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="hibp-train", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("train", help="train on a dataset directory (task from meta.json)")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--epochs", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--init", help="checkpoint to warm-start encoder weights")
    sp.add_argument("--grammar", help="grammar JSON for validation stream generation")
    sp.add_argument("--val-n", type=int, default=0)
    sp.add_argument("--val-seed-base", type=int, default=1_000_000)
    sp.add_argument("--grid", help="reference grid CSV for per-epoch comparison")
    _add_arch_args(sp)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("attention", help="averaged attention maps + block contrast")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--n", type=int, default=10_000)
    sp.add_argument("--scale", type=int, default=0)
    sp.add_argument("--out-dir", required=True)
    _add_arch_args(sp)
    sp.set_defaults(fn=cmd_attention)

    sp = sub.add_parser("probe", help="ancestor probe on a frozen encoder")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--trees", required=True, help="trees.u8 from `hibp sample --count`")
    sp.add_argument("--encoder-level", type=int, required=True)
    sp.add_argument("--ancestor-level", type=int, required=True)
    sp.add_argument("--n-train", type=int, default=4096)
    sp.add_argument("--n-val", type=int, default=1024)
    sp.add_argument("--epochs", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    _add_arch_args(sp)
    sp.set_defaults(fn=cmd_probe)

    sp = sub.add_parser("reproduce", help="run a full experiment config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--workdir")
    sp.set_defaults(fn=cmd_reproduce)

    args = p.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
