"""Evaluation: entity-level P/R/F1 for NER, per-domain and macro F1 for NLI.

Entity scoring uses exact match: a prediction is a true positive only when
an unmatched gold span with the same type and the same inclusive token
boundaries exists in the same example. Micro scores pool tp/fp/fn across all
types. All scores live in [0, 1] internally; multiply by 100 only when
formatting.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

from .corpus import ENTITY_DISPLAY, NLI_DOMAINS, NLI_LABELS
from .errors import IdMismatch, LengthMismatch, MissingDomain


@dataclass(frozen=True)
class PrfScore:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "PrfScore":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        return cls(precision, recall, f1_from_pr(precision, recall), tp, fp, fn)


def f1_from_pr(p: float, r: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    return 2.0 * p * r / (p + r) if p + r else 0.0


@dataclass(frozen=True)
class EntityScores:
    per_type: dict[str, PrfScore]
    micro: PrfScore


def entity_prf(gold, pred) -> EntityScores:
    """Exact-match entity scores from gold and predicted span lists.

    Both arguments are sequences of (example id, spans) pairs; the id sets
    must coincide. Gold spans are GoldSpan-like, predictions
    EntityPrediction-like (anything with entity_type/start/end).
    """
    gold_by_id = {ex_id: spans for ex_id, spans in gold}
    pred_by_id = {ex_id: spans for ex_id, spans in pred}
    if set(gold_by_id) != set(pred_by_id):
        extra = set(pred_by_id) - set(gold_by_id)
        missing = set(gold_by_id) - set(pred_by_id)
        raise IdMismatch(
            f"gold/prediction ids differ (missing={sorted(missing)[:5]}, "
            f"extra={sorted(extra)[:5]})"
        )
    tp: Counter[str] = Counter()
    fp: Counter[str] = Counter()
    fn: Counter[str] = Counter()
    for ex_id, gold_spans in gold_by_id.items():
        gold_keys = Counter((s.entity_type, s.start, s.end) for s in gold_spans)
        pred_keys = Counter((s.entity_type, s.start, s.end) for s in pred_by_id[ex_id])
        for key, count in pred_keys.items():
            matched = min(count, gold_keys.get(key, 0))
            tp[key[0]] += matched
            fp[key[0]] += count - matched
        for key, count in gold_keys.items():
            fn[key[0]] += count - min(count, pred_keys.get(key, 0))
    types = sorted(set(tp) | set(fp) | set(fn))
    per_type = {t: PrfScore.from_counts(tp[t], fp[t], fn[t]) for t in types}
    micro = PrfScore.from_counts(sum(tp.values()), sum(fp.values()), sum(fn.values()))
    return EntityScores(per_type=per_type, micro=micro)


def nli_domain_f1(gold: Sequence[str], pred: Sequence[str]) -> float:
    """Class-macro F1 over the three NLI labels within one domain.

    Each label's F1 comes from its one-vs-rest tp/fp/fn; the three F1s are
    averaged unweighted, so absent classes count as 0.
    """
    if not gold or len(gold) != len(pred):
        raise LengthMismatch(
            f"gold ({len(gold)}) and predictions ({len(pred)}) must be "
            "non-empty and equal length"
        )
    f1s = []
    for label in NLI_LABELS:
        tp = sum(1 for g, p in zip(gold, pred) if g == label and p == label)
        fp = sum(1 for g, p in zip(gold, pred) if g != label and p == label)
        fn = sum(1 for g, p in zip(gold, pred) if g == label and p != label)
        f1s.append(PrfScore.from_counts(tp, fp, fn).f1)
    return sum(f1s) / len(f1s)


def macro_f1(domain_scores: Mapping[str, float]) -> float:
    """Unweighted mean of the four per-domain F1 values."""
    missing = [d for d in NLI_DOMAINS if d not in domain_scores]
    if missing:
        raise MissingDomain(f"missing domain score(s): {', '.join(missing)}")
    return sum(domain_scores[d] for d in NLI_DOMAINS) / len(NLI_DOMAINS)


# --- report formatting --------------------------------------------------------

def _pct(value: float) -> str:
    return f"{100.0 * value:.2f}"


def format_entity_report(scores: EntityScores) -> str:
    """Per-type + micro P/R/F1 table (percent, two decimals)."""
    name_width = max([len("Entity Type"), len("micro avg")]
                     + [len(ENTITY_DISPLAY.get(t, t)) for t in scores.per_type])
    rows = [f"{'Entity Type'.ljust(name_width)}  Precision  Recall  F1"]
    for etype, s in scores.per_type.items():
        display = ENTITY_DISPLAY.get(etype, etype)
        rows.append(
            f"{display.ljust(name_width)}  {_pct(s.precision):>9}  "
            f"{_pct(s.recall):>6}  {_pct(s.f1):>6}"
        )
    s = scores.micro
    rows.append(
        f"{'micro avg'.ljust(name_width)}  {_pct(s.precision):>9}  "
        f"{_pct(s.recall):>6}  {_pct(s.f1):>6}"
    )
    return "\n".join(rows)


def entity_report_record(scores: EntityScores) -> dict:
    """Machine-readable counterpart of :func:`format_entity_report`."""
    def row(s: PrfScore) -> dict:
        return {
            "precision": s.precision, "recall": s.recall, "f1": s.f1,
            "tp": s.tp, "fp": s.fp, "fn": s.fn,
        }

    return {
        "per_type": {t: row(s) for t, s in scores.per_type.items()},
        "micro": row(scores.micro),
    }


def format_domain_report(domain_scores: Mapping[str, float]) -> str:
    """Per-domain F1 row plus the macro mean (percent, two decimals)."""
    from .corpus import DOMAIN_DISPLAY

    cells = [(DOMAIN_DISPLAY[d], _pct(domain_scores[d])) for d in NLI_DOMAINS
             if d in domain_scores]
    if all(d in domain_scores for d in NLI_DOMAINS):
        cells.append(("Macro F1", _pct(macro_f1(domain_scores))))
    header = "  ".join(name.rjust(max(len(name), 6)) for name, _ in cells)
    values = "  ".join(value.rjust(max(len(name), 6)) for name, value in cells)
    return header + "\n" + values


def format_stats_report(means: Mapping[str, float]) -> str:
    """Mean words per entity type, in the standard four-column layout."""
    names = [ENTITY_DISPLAY.get(t, t) for t in means]
    header = "  ".join(n.rjust(max(len(n), 6)) for n in names)
    values = "  ".join(
        f"{means[t]:.2f}".rjust(max(len(ENTITY_DISPLAY.get(t, t)), 6)) for t in means
    )
    return header + "\n" + values
