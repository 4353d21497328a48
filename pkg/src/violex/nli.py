"""3-way NLI over premise/hypothesis pairs, leave-one-domain-out, ensembling.

The classifier encodes "premise [SEP] hypothesis" with the shared toy
encoder, mean-pools, and applies a 3-way head. Cross-domain evaluation uses
leave-one-domain-out splits: one model per domain, trained on the other
three, so no test record's domain ever appears in its training data. At
prediction time the four models vote by confidence: the single most
confident model supplies the final label.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import torch
from torch import nn

from .corpus import NLI_DOMAINS, NLI_LABELS, NliRecord
from .encoder import SEP, TextEncoder
from .errors import EmptyInput, LengthMismatch, MissingDomain, WrongModelCount


@dataclass(frozen=True)
class NliConfig:
    hidden_dim: int = 64
    num_layers: int = 2
    dropout: float = 0.1
    vocab_hash_buckets: int = 4096
    max_seq_len: int = 256

    def __post_init__(self):
        if self.hidden_dim <= 0 or self.hidden_dim % 2:
            raise ValueError("hidden_dim must be a positive even number")
        if self.num_layers <= 0:
            raise ValueError("num_layers must be positive")
        if not 0.0 <= self.dropout <= 1.0:
            raise ValueError("dropout must lie in [0, 1]")
        if self.max_seq_len < 3:
            raise ValueError("max_seq_len must leave room for both texts")


class NliModel(nn.Module):
    """Pair encoder plus 3-way linear head (fixed label order NLI_LABELS)."""

    def __init__(self, config: NliConfig = NliConfig()):
        super().__init__()
        self.config = config
        self.encoder = TextEncoder(
            config.hidden_dim, config.num_layers, config.dropout,
            config.vocab_hash_buckets,
        )
        self.head = nn.Linear(config.hidden_dim, len(NLI_LABELS))


@dataclass(frozen=True)
class NliPrediction:
    """Final label, its probability, and the full 3-way distribution."""

    label: str
    confidence: float
    distribution: tuple[float, float, float]

    def __post_init__(self):
        if abs(sum(self.distribution) - 1.0) > 1e-6:
            raise ValueError("distribution must sum to 1")
        if min(self.distribution) < 0.0:
            raise ValueError("distribution must be non-negative")
        top = max(range(len(NLI_LABELS)), key=lambda i: self.distribution[i])
        if self.label != NLI_LABELS[top]:
            raise ValueError("label must be the argmax of the distribution")
        if abs(self.confidence - self.distribution[top]) > 1e-9:
            raise ValueError("confidence must equal the top probability")


def pair_tokens(record: NliRecord, max_seq_len: int) -> list[str]:
    """Lowercased word sequence "premise [SEP] hypothesis", truncated right."""
    tokens = record.premise.lower().split() + [SEP] + record.hypothesis.lower().split()
    return tokens[:max_seq_len]


def nli_logits(model: NliModel, record: NliRecord) -> torch.Tensor:
    """Unnormalized 3-way scores; gradient-friendly (used by training)."""
    if not record.premise.strip() or not record.hypothesis.strip():
        raise EmptyInput("premise and hypothesis must be non-empty")
    reprs = model.encoder(pair_tokens(record, model.config.max_seq_len))
    return model.head(reprs.mean(dim=0))


def classify(model: NliModel, record: NliRecord) -> NliPrediction:
    """Deterministic 3-way classification of one pair (eval mode, no grad)."""
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            probs = torch.softmax(nli_logits(model, record), dim=0)
    finally:
        model.train(was_training)
    dist = tuple(float(p) for p in probs)
    top = int(torch.argmax(probs))
    return NliPrediction(label=NLI_LABELS[top], confidence=dist[top], distribution=dist)


# --- leave-one-domain-out splits ---------------------------------------------

@dataclass(frozen=True)
class LooSplit:
    """Train on three domains, hold the fourth out for testing."""

    held_out_domain: str
    train: tuple[NliRecord, ...]
    test: tuple[NliRecord, ...]


def loo_splits(records: Sequence[NliRecord]) -> list[LooSplit]:
    """One split per domain, in the fixed domain order.

    Raises MissingDomain when any of the four domains has no records, since
    that would make one split untestable and another undertrained.
    """
    present = {r.domain for r in records}
    missing = [d for d in NLI_DOMAINS if d not in present]
    if missing:
        raise MissingDomain(f"no records for domain(s): {', '.join(missing)}")
    return [
        LooSplit(
            held_out_domain=domain,
            train=tuple(r for r in records if r.domain != domain),
            test=tuple(r for r in records if r.domain == domain),
        )
        for domain in NLI_DOMAINS
    ]


# --- max-confidence ensemble --------------------------------------------------

def _domain_model_pairs(models) -> list[tuple[str, NliModel]]:
    pairs = list(models.items()) if isinstance(models, Mapping) else list(models)
    domains = [d for d, _ in pairs]
    if sorted(domains) != sorted(NLI_DOMAINS):
        raise WrongModelCount(
            f"need exactly one model per domain {NLI_DOMAINS}, got {domains}"
        )
    # Fixed domain order makes the confidence tie-break deterministic.
    order = {d: i for i, d in enumerate(NLI_DOMAINS)}
    return sorted(pairs, key=lambda pair: order[pair[0]])


def ensemble_predict_detailed(models, record: NliRecord) -> tuple[str, NliPrediction]:
    """(winning domain tag, prediction) of the most confident member model.

    ``models`` maps held-out domain to model (a mapping or (domain, model)
    pairs); ties go to the earlier domain in the fixed order.
    """
    best: tuple[str, NliPrediction] | None = None
    for domain, model in _domain_model_pairs(models):
        pred = classify(model, record)
        if best is None or pred.confidence > best[1].confidence:
            best = (domain, pred)
    return best


def ensemble_predict(models, record: NliRecord) -> NliPrediction:
    """Prediction of the most confident of the four domain models."""
    return ensemble_predict_detailed(models, record)[1]


# --- confusion analysis -------------------------------------------------------

def confusion_matrix(gold: Sequence[str], pred: Sequence[str]) -> np.ndarray:
    """3x3 count matrix; rows are gold, columns predicted, order NLI_LABELS."""
    if not gold or len(gold) != len(pred):
        raise LengthMismatch(
            f"gold ({len(gold)}) and predictions ({len(pred)}) must be "
            "non-empty and equal length"
        )
    index = {label: i for i, label in enumerate(NLI_LABELS)}
    matrix = np.zeros((3, 3), dtype=int)
    for g, p in zip(gold, pred):
        if g not in index or p not in index:
            raise LengthMismatch(f"unknown label in pair ({g!r}, {p!r})")
        matrix[index[g], index[p]] += 1
    return matrix


def error_classes(cm: np.ndarray) -> dict[str, int]:
    """Bucket the off-diagonal mass of a 3x3 confusion matrix.

    first_class:  Contradict and Entailed confused with each other;
    second_class: Contradict or Entailed predicted as Neutral;
    third_class:  Neutral predicted as Contradict or Entailed.
    """
    cm = np.asarray(cm)
    if cm.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got {cm.shape}")
    e, c, n = (NLI_LABELS.index(x) for x in ("Entailed", "Contradict", "Neutral"))
    return {
        "first_class": int(cm[c, e] + cm[e, c]),
        "second_class": int(cm[c, n] + cm[e, n]),
        "third_class": int(cm[n, c] + cm[n, e]),
    }


def format_confusion(cm: np.ndarray) -> str:
    """Plain-text table of a 3x3 confusion matrix (rows gold, columns predicted)."""
    width = max(10, max(len(l) for l in NLI_LABELS) + 2)
    header = "gold \\ pred".ljust(width) + "".join(l.rjust(width) for l in NLI_LABELS)
    lines = [header]
    for i, label in enumerate(NLI_LABELS):
        lines.append(
            label.ljust(width) + "".join(str(int(v)).rjust(width) for v in cm[i])
        )
    return "\n".join(lines)
