"""Attention-map dumps and the block-contrast statistic."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .data import SequenceData
from .model import Encoder
from .train import _mask_tokens, _to_tokens


@torch.no_grad()
def dump_attention_maps(model: Encoder, data: SequenceData, n_inputs: int = 10_000, batch: int = 512):
    """Per-layer attention matrices averaged over n_inputs sequences.

    Masked datasets are scored with their stored mask positions applied, so
    the maps reflect the inference-time input distribution. Returns a list
    of (T, T) arrays, one per block.
    """
    model.eval()
    dev = next(model.parameters()).device
    n = min(n_inputs, data.P)
    tokens = _to_tokens(data.sequences[:n])
    if data.task == "mlm":
        positions = torch.from_numpy(data.masks[:n, 0] - 1).long()
        tokens = _mask_tokens(tokens, positions, model.cfg.mask_id)
    T = data.seq_len
    sums = [np.zeros((T, T)) for _ in model.blocks]
    model.set_record_attention(True)
    try:
        for lo in range(0, n, batch):
            model.encode(tokens[lo : lo + batch].to(dev))
            for i, attn in enumerate(model.attention_maps()):
                sums[i] += attn.sum(dim=0).cpu().numpy()
    finally:
        model.set_record_attention(False)
    return [s / n for s in sums]


def block_contrast(attn: np.ndarray, scale: int) -> float:
    """Mean attention mass inside size-`scale` diagonal blocks minus the
    mean outside; near zero for uniform maps."""
    T = attn.shape[0]
    if T % scale:
        raise ValueError(f"scale {scale} does not divide {T}")
    groups = np.arange(T) // scale
    inside = groups[:, None] == groups[None, :]
    return float(attn[inside].mean() - attn[~inside].mean())


def save_maps_csv(maps, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, m in enumerate(maps, start=1):
        p = out / f"layer{i}.csv"
        np.savetxt(p, m, delimiter=",", fmt="%.17g")
        paths.append(p)
    return paths
