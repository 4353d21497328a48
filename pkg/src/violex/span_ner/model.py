"""Span scorer: encode labels and tokens, score every candidate span x label.

Three encoder-fusion variants share one scoring head:

* ``unified`` — labels and tokens are concatenated (separator between labels)
  and encoded jointly, so every representation sees the full sequence.
* ``bi`` — labels and tokens are encoded by two separate encoders; token
  representations never depend on the label set and vice versa.
* ``poly`` — the two separate encodings are fused by one residual
  cross-attention layer, so both sides interact after encoding.

A candidate span is represented by its start and end token vectors,
concatenated and projected through one hidden layer; the score against a
label is the squashed dot product of span and label representations.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
from torch import nn

from ..encoder import SEP, CrossFusion, TextEncoder, label_words
from ..errors import EmptyInput, VariantMismatch

VARIANTS = ("unified", "bi", "poly")


@dataclass(frozen=True)
class SpanScorerConfig:
    variant: str = "unified"
    hidden_dim: int = 64
    num_layers: int = 2
    #: Widest span the scorer considers; must exceed the longest entity worth
    #: predicting (VIOLATION spans average above 12 words).
    max_span_width: int = 16
    dropout: float = 0.5
    vocab_hash_buckets: int = 4096

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.hidden_dim <= 0 or self.hidden_dim % 2:
            raise ValueError("hidden_dim must be a positive even number")
        if self.num_layers <= 0:
            raise ValueError("num_layers must be positive")
        if self.max_span_width < 1:
            raise ValueError("max_span_width must be at least 1")
        if not 0.0 <= self.dropout <= 1.0:
            raise ValueError("dropout must lie in [0, 1]")
        if self.vocab_hash_buckets < 2:
            raise ValueError("vocab_hash_buckets must be at least 2")


class SpanScorer(nn.Module):
    """Parameterized span x label scorer for one of the three variants.

    Parameter naming matters: everything under ``token_encoder``/``label_encoder``
    counts as backbone for optimizer grouping, everything under ``span_head``/
    ``label_proj``/``fusion`` as head.
    """

    def __init__(self, config: SpanScorerConfig):
        super().__init__()
        self.config = config
        h = config.hidden_dim
        self.token_encoder = TextEncoder(
            h, config.num_layers, config.dropout, config.vocab_hash_buckets
        )
        self.label_encoder = (
            TextEncoder(h, config.num_layers, config.dropout, config.vocab_hash_buckets)
            if config.variant in ("bi", "poly")
            else None
        )
        self.fusion = CrossFusion(h, config.dropout) if config.variant == "poly" else None
        self.span_head = nn.Sequential(
            nn.Linear(2 * h, h),
            nn.GELU(),
            nn.Dropout(config.dropout),
            nn.Linear(h, h),
        )
        self.label_proj = nn.Linear(h, h)

    def encode(self, labels: Sequence[str], tokens: Sequence[str]):
        if self.config.variant == "unified":
            return encode_unified(self, labels, tokens)
        if self.config.variant == "bi":
            return encode_bi(self, labels, tokens)
        return encode_poly(self, labels, tokens)

    def predict(self, tokens, labels, decode_cfg=None):
        """Score and decode one sentence (eval mode, no grad)."""
        from .decode import DecodeConfig, decode

        cfg = decode_cfg or DecodeConfig()
        was_training = self.training
        self.eval()
        try:
            with torch.no_grad():
                scores = score_spans(self, tokens, labels)
        finally:
            self.train(was_training)
        spans = enumerate_spans(len(tokens), self.config.max_span_width)
        return decode(scores, spans, labels, cfg)


def enumerate_spans(n: int, max_width: int) -> list[tuple[int, int]]:
    """All (start, end) with end - start + 1 <= max_width, lexicographic order."""
    if n < 0:
        raise ValueError("token count must be non-negative")
    if max_width < 1:
        raise ValueError("max_width must be at least 1")
    return [
        (s, e)
        for s in range(n)
        for e in range(s, min(s + max_width, n))
    ]


def _check_variant(model: SpanScorer, expected: str) -> None:
    if model.config.variant != expected:
        raise VariantMismatch(
            f"model is a {model.config.variant!r} scorer, not {expected!r}"
        )


def _require_labels(labels: Sequence[str]) -> None:
    if not labels:
        raise EmptyInput("at least one label is required")


def encode_unified(model: SpanScorer, labels: Sequence[str], tokens: Sequence[str]):
    """Jointly encode [label1, SEP, label2, SEP, ..., SEP, token1 ... tokenN].

    Each label occupies a single position (a pseudo-token hashed from the
    whole label string), so label and token representations attend over the
    same joint sequence.
    """
    _check_variant(model, "unified")
    _require_labels(labels)
    sequence: list[str] = []
    label_positions: list[int] = []
    for label in labels:
        label_positions.append(len(sequence))
        sequence.append("ENT:" + label)
        sequence.append(SEP)
    token_offset = len(sequence)
    sequence.extend(tokens)
    reprs = model.token_encoder(sequence)
    return reprs[label_positions], reprs[token_offset:]


def _encode_separate(model: SpanScorer, labels: Sequence[str], tokens: Sequence[str]):
    """Shared bi/poly front half: independent label and token passes."""
    _require_labels(labels)
    token_reprs = model.token_encoder(tokens)
    label_reprs = torch.stack(
        [model.label_encoder(label_words(label)).mean(dim=0) for label in labels]
    )
    return label_reprs, token_reprs


def encode_bi(model: SpanScorer, labels: Sequence[str], tokens: Sequence[str]):
    """Encode labels and tokens in fully decoupled passes."""
    _check_variant(model, "bi")
    return _encode_separate(model, labels, tokens)


def encode_poly(model: SpanScorer, labels: Sequence[str], tokens: Sequence[str]):
    """Decoupled passes followed by one residual cross-attention fusion."""
    _check_variant(model, "poly")
    label_reprs, token_reprs = _encode_separate(model, labels, tokens)
    return model.fusion(label_reprs, token_reprs)


def score_spans(
    model: SpanScorer, tokens: Sequence[str], labels: Sequence[str]
) -> torch.Tensor:
    """Score matrix of shape (num_spans, num_labels) with entries in (0, 1).

    Row order follows :func:`enumerate_spans` for ``len(tokens)`` and the
    model's ``max_span_width``; columns follow the given label order.
    """
    if not tokens:
        raise EmptyInput("cannot score an empty sentence")
    label_reprs, token_reprs = model.encode(labels, tokens)
    spans = enumerate_spans(len(tokens), model.config.max_span_width)
    starts = torch.tensor([s for s, _ in spans], dtype=torch.long)
    ends = torch.tensor([e for _, e in spans], dtype=torch.long)
    span_inputs = torch.cat([token_reprs[starts], token_reprs[ends]], dim=1)
    span_reprs = model.span_head(span_inputs)
    logits = span_reprs @ model.label_proj(label_reprs).T
    return torch.sigmoid(logits / model.config.hidden_dim ** 0.5)


def span_targets(
    spans: Sequence[tuple[int, int]], labels: Sequence[str], gold
) -> torch.Tensor:
    """Binary target matrix aligned with :func:`score_spans` output."""
    span_index = {span: i for i, span in enumerate(spans)}
    label_index = {label: j for j, label in enumerate(labels)}
    targets = torch.zeros(len(spans), len(labels))
    for g in gold:
        i = span_index.get((g.start, g.end))
        j = label_index.get(g.entity_type)
        if i is not None and j is not None:
            targets[i, j] = 1.0
    return targets
