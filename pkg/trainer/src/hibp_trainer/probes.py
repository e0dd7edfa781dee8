"""Ancestor probes on frozen encoder representations.

A two-layer readout (64 hidden units) is trained per (encoder level,
ancestor level) pair to predict, from each leaf's token at that encoder
level, the symbol of the leaf's ancestor at the requested tree depth.
Ancestor labels come from trees.u8 node tables exported with
`hibp sample --count` using the dataset's master seed, so they reproduce
the training records exactly. Depth 0 is the root; depth ell is the leaf
itself.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .data import SequenceData, ancestor_labels
from .model import Encoder
from .train import _to_tokens

PROBE_HIDDEN = 64


@torch.no_grad()
def _encodings(model: Encoder, data: SequenceData, encoder_level: int, n: int, batch: int = 512):
    # probes read fully observed sequences: every token then carries its own
    # leaf symbol through the residual stream, so the depth-ell probe is a
    # sanity anchor at accuracy 1
    model.eval()
    dev = next(model.parameters()).device
    tokens = _to_tokens(data.sequences[:n])
    outs = []
    for lo in range(0, n, batch):
        levels = model.encode(tokens[lo : lo + batch].to(dev), return_levels=True)
        outs.append(levels[encoder_level].cpu())
    return torch.cat(outs)  # (n, T, d)


def probe_ancestors(
    model: Encoder,
    data: SequenceData,
    trees: np.ndarray,
    encoder_level: int,
    ancestor_level: int,
    n_train: int = 4096,
    n_val: int = 1024,
    epochs: int = 20,
    seed: int = 0,
) -> float:
    """Validation accuracy of the probe; the encoder stays frozen."""
    if not 1 <= encoder_level <= model.cfg.n_layers:
        raise ValueError(f"encoder level must be in 1..{model.cfg.n_layers}")
    n = n_train + n_val
    if n > data.P or n > trees.shape[0]:
        raise ValueError(f"need {n} records, have {min(data.P, trees.shape[0])}")
    if not np.array_equal(trees[:n, 2**data.ell - 1 :], data.sequences[:n]):
        raise ValueError("trees.u8 does not reproduce the dataset sequences; wrong seed or grammar?")
    labels = ancestor_labels(trees[:n], data.ell, ancestor_level)  # (n, T), 1..q

    feats = _encodings(model, data, encoder_level, n)
    d = feats.shape[2]
    x = feats.reshape(-1, d)
    y = torch.from_numpy(labels - 1).long().reshape(-1)
    split = n_train * data.seq_len
    torch.manual_seed(seed)
    probe = nn.Sequential(nn.Linear(d, PROBE_HIDDEN), nn.ReLU(), nn.Linear(PROBE_HIDDEN, data.q))
    opt = torch.optim.Adam(probe.parameters(), lr=1e-3)
    loss_fn = nn.CrossEntropyLoss()
    order_rng = torch.Generator().manual_seed(seed)
    for _ in range(epochs):
        order = torch.randperm(split, generator=order_rng)
        for lo in range(0, split, 512):
            sel = order[lo : lo + 512]
            loss = loss_fn(probe(x[sel]), y[sel])
            opt.zero_grad()
            loss.backward()
            opt.step()
    with torch.no_grad():
        pred = probe(x[split:]).argmax(dim=1)
    return float((pred == y[split:]).float().mean())
