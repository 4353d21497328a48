"""Span-based open-label NER: encode, score, train with focal loss, decode."""

from .decode import DecodeConfig, EntityPrediction, decode, filter_duplicates
from .loss import EPS, FocalConfig, focal_loss
from .model import (
    VARIANTS,
    SpanScorer,
    SpanScorerConfig,
    encode_bi,
    encode_poly,
    encode_unified,
    enumerate_spans,
    score_spans,
    span_targets,
)

__all__ = [
    "DecodeConfig",
    "EntityPrediction",
    "EPS",
    "FocalConfig",
    "SpanScorer",
    "SpanScorerConfig",
    "VARIANTS",
    "decode",
    "encode_bi",
    "encode_poly",
    "encode_unified",
    "enumerate_spans",
    "filter_duplicates",
    "focal_loss",
    "score_spans",
    "span_targets",
]
