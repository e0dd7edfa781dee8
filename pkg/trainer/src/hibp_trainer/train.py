"""Training loops: root classification and masked-symbol prediction.

Optimization follows the fixed recipe: Adam with batches of 32 and learning
rate 1e-4, no schedule. Masked training re-draws one uniform mask position
per sequence every epoch; the per-record masks stored in a dataset define
the fixed evaluation view. Each epoch appends one JSONL record with the
loss and per-k validation accuracies next to the reference grid values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .data import SequenceData, load_dataset_dir
from .model import Encoder, EncoderConfig

BATCH_SIZE = 32
LEARNING_RATE = 1e-4


@dataclass
class TrainLog:
    records: list[dict] = field(default_factory=list)
    checkpoints: list[str] = field(default_factory=list)

    def append(self, rec: dict, path=None):
        self.records.append(rec)
        if path is not None:
            with open(path, "a") as fh:
                fh.write(json.dumps(rec) + "\n")

    @property
    def final(self) -> dict:
        return self.records[-1]


def _device() -> torch.device:
    return torch.device("cuda" if torch.cuda.is_available() else "cpu")


def _to_tokens(sequences: np.ndarray) -> torch.Tensor:
    # symbols 1..q map to embedding rows 0..q-1; the mask token uses row q
    return torch.from_numpy(sequences - 1).long()


def _mask_tokens(tokens: torch.Tensor, positions: torch.Tensor, mask_id: int) -> torch.Tensor:
    out = tokens.clone()
    out[torch.arange(out.shape[0]), positions] = mask_id
    return out


@torch.no_grad()
def eval_classifier(model: Encoder, data: SequenceData, batch: int = 1024) -> float:
    model.eval()
    dev = next(model.parameters()).device
    tokens = _to_tokens(data.sequences)
    labels = torch.from_numpy(data.labels - 1).long()
    hits = 0
    for lo in range(0, tokens.shape[0], batch):
        logits = model.classify(tokens[lo : lo + batch].to(dev))
        hits += (logits.argmax(dim=1).cpu() == labels[lo : lo + batch]).sum().item()
    return hits / tokens.shape[0]


@torch.no_grad()
def eval_mlm(model: Encoder, data: SequenceData, batch: int = 1024) -> float:
    """Scores the dataset's stored mask positions."""
    model.eval()
    dev = next(model.parameters()).device
    tokens = _to_tokens(data.sequences)
    positions = torch.from_numpy(data.masks[:, 0] - 1).long()
    truths = torch.from_numpy(data.masks[:, 1] - 1).long()
    masked = _mask_tokens(tokens, positions, model.cfg.mask_id)
    hits = 0
    for lo in range(0, tokens.shape[0], batch):
        logits = model.predict_masked(masked[lo : lo + batch].to(dev), positions[lo : lo + batch].to(dev))
        hits += (logits.argmax(dim=1).cpu() == truths[lo : lo + batch]).sum().item()
    return hits / tokens.shape[0]


def _validation_records(model, task, val_data, references):
    accs = {}
    for k, data in val_data.items():
        accs[str(k)] = eval_classifier(model, data) if task == "classification" else eval_mlm(model, data)
    rec = {"val_acc": accs}
    if references:
        rec["ref"] = {str(k): references[k] for k in sorted(references)}
    return rec


def train_classifier(
    dataset_dir,
    config: EncoderConfig | None = None,
    init: str | Path | None = None,
    epochs: int = 10,
    seed: int = 0,
    val_data: dict[int, SequenceData] | None = None,
    references: dict[int, float] | None = None,
    log_path=None,
    checkpoint_path=None,
) -> tuple[Encoder, TrainLog]:
    """Cross-entropy training of the encoder plus concatenated readout.

    init: None trains from scratch; a checkpoint path warm-starts the
    embedding and blocks (the readout is always fresh, matching the
    fine-tuning protocol).
    """
    data = load_dataset_dir(dataset_dir)
    if data.task != "classification":
        raise ValueError(f"dataset task is {data.task!r}, expected classification")
    if config is None:
        config = EncoderConfig(q=data.q, seq_len=data.seq_len, n_layers=data.ell)
    if config.seq_len != data.seq_len or config.q != data.q:
        raise ValueError("config shape does not match the dataset")
    torch.manual_seed(seed)
    model = Encoder(config).to(_device())
    if init is not None:
        state = torch.load(init, map_location="cpu", weights_only=True)
        own = model.state_dict()
        for name, tensor in state.items():
            if not name.startswith(("cls_head", "mlm_head")):
                own[name].copy_(tensor)
        model.load_state_dict(own)
    return _fit(model, data, "classification", epochs, seed, val_data, references, log_path, checkpoint_path)


def train_mlm(
    dataset_dir,
    config: EncoderConfig | None = None,
    epochs: int = 100,
    seed: int = 0,
    val_data: dict[int, SequenceData] | None = None,
    references: dict[int, float] | None = None,
    log_path=None,
    checkpoint_path=None,
) -> tuple[Encoder, TrainLog]:
    """Masked-symbol training with one fresh uniform mask per sequence per epoch."""
    data = load_dataset_dir(dataset_dir)
    if data.task != "mlm":
        raise ValueError(f"dataset task is {data.task!r}, expected mlm")
    if config is None:
        config = EncoderConfig(q=data.q, seq_len=data.seq_len, n_layers=data.ell)
    torch.manual_seed(seed)
    model = Encoder(config).to(_device())
    return _fit(model, data, "mlm", epochs, seed, val_data, references, log_path, checkpoint_path)


def _fit(model, data, task, epochs, seed, val_data, references, log_path, checkpoint_path):
    dev = next(model.parameters()).device
    opt = torch.optim.Adam(model.parameters(), lr=LEARNING_RATE)
    loss_fn = nn.CrossEntropyLoss()
    tokens_all = _to_tokens(data.sequences)
    if task == "classification":
        targets_all = torch.from_numpy(data.labels - 1).long()
    shuffle_rng = torch.Generator().manual_seed(seed)
    log = TrainLog()
    for epoch in range(1, epochs + 1):
        model.train()
        order = torch.randperm(data.P, generator=shuffle_rng)
        if task == "mlm":
            positions_all = torch.randint(0, data.seq_len, (data.P,), generator=shuffle_rng)
            targets_all = tokens_all[torch.arange(data.P), positions_all]
            inputs_all = _mask_tokens(tokens_all, positions_all, model.cfg.mask_id)
        else:
            inputs_all = tokens_all
        total_loss = 0.0
        for lo in range(0, data.P, BATCH_SIZE):
            sel = order[lo : lo + BATCH_SIZE]
            inputs = inputs_all[sel].to(dev)
            targets = targets_all[sel].to(dev)
            if task == "classification":
                logits = model.classify(inputs)
            else:
                logits = model.predict_masked(inputs, positions_all[sel].to(dev))
            loss = loss_fn(logits, targets)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total_loss += loss.item() * sel.numel()
        rec = {"epoch": epoch, "loss": total_loss / data.P}
        if val_data:
            rec.update(_validation_records(model, task, val_data, references))
        if checkpoint_path is not None:
            torch.save(model.state_dict(), checkpoint_path)
            log.checkpoints.append(str(checkpoint_path))
        log.append(rec, log_path)
    return model, log
