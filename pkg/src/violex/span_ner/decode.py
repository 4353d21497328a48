"""Turn a span x label score matrix into entity predictions.

Decoding runs three gates in order:

1. threshold — keep cells whose score clears the cutoff;
2. flat decode — greedily accept candidates by descending confidence,
   skipping anything that overlaps an accepted span, so the output is a
   flat (non-nested, non-overlapping) span set;
3. duplicate-type rule — keep only the highest-confidence prediction per
   entity type, which prunes false positives when a sentence should contain
   at most one entity of each type.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import LengthMismatch


@dataclass(frozen=True)
class DecodeConfig:
    threshold: float = 0.8
    flat_spans: bool = True
    dedupe_by_type: bool = True

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")


@dataclass(frozen=True)
class EntityPrediction:
    """One decoded entity: label string, inclusive token span, confidence."""

    entity_type: str
    start: int
    end: int
    confidence: float

    def __post_init__(self):
        if not (0 <= self.start <= self.end):
            raise ValueError(f"bad span indices ({self.start}, {self.end})")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    def overlaps(self, other: "EntityPrediction") -> bool:
        return self.start <= other.end and other.start <= self.end


def decode(
    scores,
    spans: Sequence[tuple[int, int]],
    labels: Sequence[str],
    cfg: DecodeConfig = DecodeConfig(),
) -> list[EntityPrediction]:
    """Decode one sentence's score matrix into predictions, in sentence order.

    ``scores`` is anything arraylike of shape (len(spans), len(labels)),
    typically the matrix produced by ``score_spans``.
    """
    matrix = np.asarray(
        scores.detach().cpu() if hasattr(scores, "detach") else scores, dtype=float
    )
    if matrix.shape != (len(spans), len(labels)):
        raise LengthMismatch(
            f"score matrix {matrix.shape} does not match "
            f"{len(spans)} spans x {len(labels)} labels"
        )
    candidates = [
        EntityPrediction(labels[j], spans[i][0], spans[i][1], float(matrix[i, j]))
        for i in range(len(spans))
        for j in range(len(labels))
        if matrix[i, j] >= cfg.threshold
    ]
    if cfg.flat_spans:
        # Greedy by confidence; ties go to the earlier, then shorter, span.
        order = sorted(
            candidates,
            key=lambda p: (-p.confidence, p.start, p.end - p.start, p.entity_type),
        )
        accepted: list[EntityPrediction] = []
        for cand in order:
            if not any(cand.overlaps(a) for a in accepted):
                accepted.append(cand)
        candidates = accepted
    result = sorted(candidates, key=lambda p: (p.start, p.end, p.entity_type))
    if cfg.dedupe_by_type:
        result = filter_duplicates(result)
    return result


def filter_duplicates(preds: Sequence[EntityPrediction]) -> list[EntityPrediction]:
    """Keep one prediction per entity type: the most confident one.

    Confidence ties go to the earlier start. Survivors keep their relative
    input order, and applying the filter twice changes nothing.
    """
    best: dict[str, tuple] = {}
    for idx, pred in enumerate(preds):
        key = (-pred.confidence, pred.start, pred.end, idx)
        if pred.entity_type not in best or key < best[pred.entity_type][0]:
            best[pred.entity_type] = (key, idx)
    keep = {idx for _, idx in best.values()}
    return [pred for idx, pred in enumerate(preds) if idx in keep]
