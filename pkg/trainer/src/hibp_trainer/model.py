"""Vanilla encoder-only transformer, single attention head per block.

Tokens are embedded with a learnable projection plus fixed sinusoidal
positional encodings. Each block applies post-norm residual stages:
layernorm(x + selfattention(x)) then layernorm(x' + FC(x')), where the
attention uses full-width query/key/value maps without an output projection
and FC is a two-layer relu network. Classification reads a linear map of
all final tokens concatenated position-wise; masked prediction reads a
linear map of the token at the masked position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn


@dataclass
class EncoderConfig:
    q: int
    seq_len: int
    n_layers: int
    d: int = 128
    d_prime: int = 2048
    heads: int = 1  # single head throughout

    @property
    def vocab(self) -> int:
        return self.q + 1  # one extra id for the mask token

    @property
    def mask_id(self) -> int:
        return self.q  # 0-based embedding row of the mask token


def sinusoidal_encoding(seq_len: int, d: int) -> torch.Tensor:
    pos = torch.arange(seq_len, dtype=torch.float64).unsqueeze(1)
    div = torch.exp(torch.arange(0, d, 2, dtype=torch.float64) * (-math.log(10000.0) / d))
    pe = torch.zeros(seq_len, d, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div)
    return pe.to(torch.float32)


class SelfAttention(nn.Module):
    def __init__(self, d: int):
        super().__init__()
        self.wq = nn.Linear(d, d, bias=False)
        self.wk = nn.Linear(d, d, bias=False)
        self.wv = nn.Linear(d, d, bias=False)
        self.scale = 1.0 / math.sqrt(d)
        self.last_attention: torch.Tensor | None = None
        self.record_attention = False

    def forward(self, x):
        q, k, v = self.wq(x), self.wk(x), self.wv(x)
        scores = torch.matmul(q, k.transpose(1, 2)) * self.scale
        attn = torch.softmax(scores, dim=-1)
        if self.record_attention:
            self.last_attention = attn.detach()
        return torch.matmul(attn, v)


class Block(nn.Module):
    def __init__(self, d: int, d_prime: int):
        super().__init__()
        self.attn = SelfAttention(d)
        self.norm1 = nn.LayerNorm(d)
        self.fc = nn.Sequential(nn.Linear(d, d_prime), nn.ReLU(), nn.Linear(d_prime, d))
        self.norm2 = nn.LayerNorm(d)

    def forward(self, x):
        x = self.norm1(x + self.attn(x))
        return self.norm2(x + self.fc(x))


class Encoder(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.embed = nn.Embedding(cfg.vocab, cfg.d)
        self.register_buffer("pos", sinusoidal_encoding(cfg.seq_len, cfg.d))
        self.blocks = nn.ModuleList(Block(cfg.d, cfg.d_prime) for _ in range(cfg.n_layers))
        self.cls_head = nn.Linear(cfg.d * cfg.seq_len, cfg.q)
        self.mlm_head = nn.Linear(cfg.d, cfg.q)
        self.apply(_init_xavier)

    def encode(self, tokens, return_levels: bool = False):
        """tokens: (B, T) 0-based ids. Returns the final (B, T, d) encoding,
        or the per-level list [after embed, after block 1, ...]."""
        x = self.embed(tokens) + self.pos.unsqueeze(0)
        levels = [x]
        for block in self.blocks:
            x = block(x)
            levels.append(x)
        return levels if return_levels else x

    def classify(self, tokens):
        """Root logits from all final tokens concatenated position-wise."""
        x = self.encode(tokens)
        return self.cls_head(x.reshape(x.shape[0], -1))

    def predict_masked(self, tokens, positions):
        """Symbol logits read from the final token at each masked position
        (positions are 0-based)."""
        x = self.encode(tokens)
        picked = x[torch.arange(x.shape[0]), positions]
        return self.mlm_head(picked)

    def set_record_attention(self, on: bool):
        for block in self.blocks:
            block.attn.record_attention = on

    def attention_maps(self):
        return [block.attn.last_attention for block in self.blocks]


def _init_xavier(module):
    if isinstance(module, (nn.Linear, nn.Embedding)):
        nn.init.xavier_uniform_(module.weight)
        if getattr(module, "bias", None) is not None:
            nn.init.zeros_(module.bias)
