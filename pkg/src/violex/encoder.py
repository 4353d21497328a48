"""Small trainable text encoder shared by the NER and NLI models.

Words are hashed into a fixed number of embedding buckets, so the parameter
count is independent of the corpus and unseen words still get a stable row.
On top of the embeddings sit ``num_layers`` blocks of bidirectional
self-attention plus a feed-forward sublayer, both with residual connections
(pre-norm). Positions enter through fixed sinusoidal offsets.

This stands in for a pretrained transformer backbone: every architectural
interaction the task models compare (joint vs. separate encoding, cross
attention fusion) is preserved, while the whole thing trains in seconds on a
CPU.
"""
from __future__ import annotations

import hashlib
import math
import re
from typing import Sequence

import torch
from torch import nn

#: Separator sentinel; embedding row 0 is reserved for it.
SEP = "[SEP]"
_SEP_BUCKET = 0


def hash_bucket(word: str, buckets: int) -> int:
    """Stable embedding row in [1, buckets) for a word (row 0 is the separator).

    Uses blake2b rather than Python's salted ``hash`` so runs are reproducible
    across processes.
    """
    if word == SEP:
        return _SEP_BUCKET
    digest = hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest()
    return 1 + int.from_bytes(digest, "big") % (buckets - 1)


def bucket_ids(words: Sequence[str], buckets: int) -> torch.Tensor:
    return torch.tensor([hash_bucket(w, buckets) for w in words], dtype=torch.long)


def label_words(label: str) -> list[str]:
    """Split a label string into lowercase words (VIOLATED_BY -> [violated, by])."""
    words = [w for w in re.split(r"[\s_\-]+", label.strip().lower()) if w]
    if not words:
        raise ValueError(f"label {label!r} contains no words")
    return words


def attention_heads(dim: int) -> int:
    """Largest of 4/2/1 that divides the hidden size."""
    for heads in (4, 2, 1):
        if dim % heads == 0:
            return heads
    return 1


def sinusoidal_positions(n: int, dim: int) -> torch.Tensor:
    """(n, dim) fixed positional offsets."""
    position = torch.arange(n, dtype=torch.float32).unsqueeze(1)
    half = torch.arange(0, dim, 2, dtype=torch.float32)
    freq = torch.exp(-math.log(10000.0) * half / dim)
    out = torch.zeros(n, dim)
    out[:, 0::2] = torch.sin(position * freq)
    out[:, 1::2] = torch.cos(position * freq)
    return out


class SelfAttentionBlock(nn.Module):
    """Pre-norm bidirectional self-attention + feed-forward, both residual."""

    def __init__(self, dim: int, dropout: float):
        super().__init__()
        self.norm_attn = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(
            dim, attention_heads(dim), dropout=dropout, batch_first=True
        )
        self.norm_ffn = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(
            nn.Linear(dim, 2 * dim),
            nn.GELU(),
            nn.Dropout(dropout),
            nn.Linear(2 * dim, dim),
        )
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm_attn(x)
        attn, _ = self.attn(h, h, h, need_weights=False)
        x = x + self.drop(attn)
        x = x + self.drop(self.ffn(self.norm_ffn(x)))
        return x


class TextEncoder(nn.Module):
    """Hashed embeddings followed by a stack of self-attention blocks."""

    def __init__(self, hidden_dim: int, num_layers: int, dropout: float, buckets: int):
        super().__init__()
        if buckets < 2:
            raise ValueError("vocab_hash_buckets must be at least 2")
        self.buckets = buckets
        self.embed = nn.Embedding(buckets, hidden_dim)
        nn.init.normal_(self.embed.weight, std=0.02)
        self.blocks = nn.ModuleList(
            SelfAttentionBlock(hidden_dim, dropout) for _ in range(num_layers)
        )
        self.out_norm = nn.LayerNorm(hidden_dim)

    def forward(self, words: Sequence[str]) -> torch.Tensor:
        """Encode a word sequence into one vector per position, shape (n, dim)."""
        ids = bucket_ids(words, self.buckets)
        x = self.embed(ids) + sinusoidal_positions(len(words), self.embed.embedding_dim)
        x = x.unsqueeze(0)
        for block in self.blocks:
            x = block(x)
        return self.out_norm(x).squeeze(0)


class CrossFusion(nn.Module):
    """One residual cross-attention exchange between two sequences.

    With all parameters zeroed the residual contribution vanishes and both
    sequences pass through unchanged, which is what makes the fused variant
    collapse onto the decoupled one in that limit.
    """

    def __init__(self, dim: int, dropout: float):
        super().__init__()
        heads = attention_heads(dim)
        self.a_over_b = nn.MultiheadAttention(dim, heads, dropout=dropout, batch_first=True)
        self.b_over_a = nn.MultiheadAttention(dim, heads, dropout=dropout, batch_first=True)
        self.drop = nn.Dropout(dropout)

    def forward(self, a: torch.Tensor, b: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        a3, b3 = a.unsqueeze(0), b.unsqueeze(0)
        a_upd, _ = self.a_over_b(a3, b3, b3, need_weights=False)
        b_upd, _ = self.b_over_a(b3, a3, a3, need_weights=False)
        return (
            a + self.drop(a_upd.squeeze(0)),
            b + self.drop(b_upd.squeeze(0)),
        )
