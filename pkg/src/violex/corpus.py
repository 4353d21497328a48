"""Datasets for the two subtasks: typed records, BIO conversion, parsing, stats.

Two kinds of records live here:

* NER examples: a tokenized sentence plus gold entity spans over the four
  violation-related entity types (LAW, VIOLATED_BY, VIOLATED_ON, VIOLATION).
  Spans use inclusive token indices, matching BIO run semantics.
* NLI records: a premise (legal-news summary), a hypothesis (social-media
  style post), a 3-way label, and one of four legal domains.

The canonical on-disk format is line-delimited JSON; a CSV adapter maps the
column layout used by the shared-task releases onto it.
"""
from __future__ import annotations

import ast
import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    DataError,
    EmptyDataset,
    InvalidBio,
    MalformedRecord,
    OverlapError,
)

ENTITY_TYPES = ("LAW", "VIOLATED_BY", "VIOLATED_ON", "VIOLATION")
#: Surface form used in prose and reports ("VIOLATED BY" instead of VIOLATED_BY).
ENTITY_DISPLAY = {t: t.replace("_", " ") for t in ENTITY_TYPES}

NLI_LABELS = ("Entailed", "Contradict", "Neutral")
#: Domain order is fixed; it doubles as the ensemble tie-break order.
NLI_DOMAINS = ("consumer_protection", "privacy", "tcpa", "wage")
DOMAIN_DISPLAY = {
    "consumer_protection": "Consumer Protection",
    "privacy": "Privacy",
    "tcpa": "TCPA",
    "wage": "Wage",
}


def canonical_entity_type(name: str) -> str:
    """Normalize an entity type to upper-snake form ("violated by" -> VIOLATED_BY).

    Raises MalformedRecord for names outside the closed four-type set.
    """
    canon = "_".join(name.strip().upper().replace("-", " ").split())
    if canon not in ENTITY_TYPES:
        raise MalformedRecord(f"unknown entity type: {name!r}")
    return canon


def canonical_domain(name: str) -> str:
    """Normalize a legal domain name ("Consumer Protection" -> consumer_protection)."""
    canon = "_".join(name.strip().lower().replace("-", " ").split())
    if canon not in NLI_DOMAINS:
        raise MalformedRecord(f"unknown legal domain: {name!r}")
    return canon


@dataclass(frozen=True)
class GoldSpan:
    """One gold entity: type plus inclusive token indices."""

    entity_type: str
    start: int
    end: int

    def __post_init__(self):
        if self.entity_type not in ENTITY_TYPES:
            raise MalformedRecord(f"unknown entity type: {self.entity_type!r}")
        if not (0 <= self.start <= self.end):
            raise MalformedRecord(
                f"bad span indices ({self.start}, {self.end}): need 0 <= start <= end"
            )

    def __len__(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class NerExample:
    """A tokenized sentence with non-overlapping gold spans."""

    id: str
    tokens: tuple[str, ...]
    entities: tuple[GoldSpan, ...] = ()
    #: Augmentation bookkeeping; ignored by training and by equality.
    provenance: object = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "entities", tuple(self.entities))
        if not self.tokens:
            raise MalformedRecord(f"example {self.id!r} has no tokens")
        claimed: set[int] = set()
        for span in self.entities:
            if span.end >= len(self.tokens):
                raise MalformedRecord(
                    f"example {self.id!r}: span {span} exceeds sentence "
                    f"length {len(self.tokens)}"
                )
            indices = set(range(span.start, span.end + 1))
            if claimed & indices:
                raise OverlapError(
                    f"example {self.id!r}: overlapping gold spans at token "
                    f"{min(claimed & indices)}"
                )
            claimed |= indices


@dataclass(frozen=True)
class NliRecord:
    """A premise/hypothesis pair with a 3-way label and a legal domain."""

    premise: str
    hypothesis: str
    label: str
    domain: str
    #: Augmentation bookkeeping; ignored by training and by equality.
    provenance: object = field(default=None, compare=False)

    def __post_init__(self):
        if not self.premise.strip():
            raise MalformedRecord("empty premise")
        if not self.hypothesis.strip():
            raise MalformedRecord("empty hypothesis")
        if self.label not in NLI_LABELS:
            raise MalformedRecord(f"unknown label: {self.label!r}")
        if self.domain not in NLI_DOMAINS:
            raise MalformedRecord(f"unknown legal domain: {self.domain!r}")


# --- BIO <-> spans ----------------------------------------------------------

def _split_tag(tag: str) -> tuple[str, str | None]:
    """Return (prefix, entity type) for a BIO tag, validating syntax only."""
    if tag == "O":
        return "O", None
    if len(tag) > 2 and tag[1] == "-" and tag[0] in ("B", "I"):
        return tag[0], tag[2:]
    raise InvalidBio(f"bad BIO tag syntax: {tag!r}")


def bio_to_spans(tags: Sequence[str]) -> list[GoldSpan]:
    """Convert a BIO tag sequence into spans (maximal B,I... runs).

    Raises InvalidBio for orphan I- tags, I- tags that switch type, bad tag
    syntax, or types outside the four-type set.
    """
    spans: list[GoldSpan] = []
    open_type: str | None = None
    open_start = 0
    for i, tag in enumerate(tags):
        prefix, etype = _split_tag(tag)
        if prefix in ("B", "I") and etype not in ENTITY_TYPES:
            raise InvalidBio(f"unknown entity type in tag {tag!r}")
        if prefix == "B":
            if open_type is not None:
                spans.append(GoldSpan(open_type, open_start, i - 1))
            open_type, open_start = etype, i
        elif prefix == "I":
            if open_type != etype:
                raise InvalidBio(
                    f"position {i}: I-{etype} without a preceding B/I of the same type"
                )
        else:  # O
            if open_type is not None:
                spans.append(GoldSpan(open_type, open_start, i - 1))
            open_type = None
    if open_type is not None:
        spans.append(GoldSpan(open_type, open_start, len(tags) - 1))
    return spans


def spans_to_bio(n: int, spans: Iterable[GoldSpan]) -> list[str]:
    """Render spans as a BIO tag sequence of length ``n`` (inverse of bio_to_spans).

    Raises OverlapError when two spans share a token, ValueError when a span
    falls outside [0, n).
    """
    tags = ["O"] * n
    for span in spans:
        if span.end >= n:
            raise ValueError(f"span {span} exceeds token count {n}")
        if any(tags[i] != "O" for i in range(span.start, span.end + 1)):
            raise OverlapError(f"overlapping span {span}")
        tags[span.start] = f"B-{span.entity_type}"
        for i in range(span.start + 1, span.end + 1):
            tags[i] = f"I-{span.entity_type}"
    return tags


def normalize_tag(tag: str) -> str:
    """Normalize a raw file tag ("b-violated by" -> "B-VIOLATED_BY").

    Raises MalformedRecord for tags that do not name one of the four types.
    """
    stripped = tag.strip()
    if stripped.upper() == "O":
        return "O"
    prefix, _, rest = stripped.partition("-")
    if prefix.upper() not in ("B", "I") or not rest:
        raise MalformedRecord(f"unknown tag: {tag!r}")
    return f"{prefix.upper()}-{canonical_entity_type(rest)}"


# --- file parsing -----------------------------------------------------------

def _located(err: DataError, path: Path, lineno: int) -> DataError:
    return type(err)(f"{path}:{lineno}: {err}")


def _require_string_list(value: object, what: str) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise MalformedRecord(f"{what} must be a list of strings")
    return value


def _list_cell(cell: str, what: str) -> list[str]:
    """Parse a CSV cell holding a serialized list (JSON or Python literal)."""
    for parse in (json.loads, ast.literal_eval):
        try:
            value = parse(cell)
        except (ValueError, SyntaxError):
            continue
        return _require_string_list(value, what)
    raise MalformedRecord(f"{what} cell is not a serialized list: {cell!r}")


def _iter_records(path: Path, format: str) -> Iterable[tuple[int, dict]]:
    """Yield (line number, raw record dict) pairs from a jsonl or csv file."""
    if format == "jsonl":
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    raw = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise MalformedRecord(f"{path}:{lineno}: bad JSON ({exc.msg})")
                if not isinstance(raw, dict):
                    raise MalformedRecord(f"{path}:{lineno}: record is not an object")
                yield lineno, raw
    elif format == "csv":
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            for lineno, row in enumerate(reader, start=2):  # row 1 is the header
                yield lineno, {k: v for k, v in row.items() if k is not None}
    else:
        raise ValueError(f"unknown format: {format!r} (expected jsonl or csv)")


def parse_ner_dataset(path: str | Path, format: str = "jsonl") -> list[NerExample]:
    """Parse and validate a NER dataset file.

    Each record needs parallel ``tokens`` and ``ner_tags`` sequences; tags are
    converted to gold spans. Errors carry the file path and line number.
    """
    path = Path(path)
    examples: list[NerExample] = []
    for lineno, raw in _iter_records(path, format):
        try:
            examples.append(_ner_example_from_raw(raw, format, lineno))
        except DataError as err:
            raise _located(err, path, lineno) from None
    return examples


def _ner_example_from_raw(raw: dict, format: str, lineno: int) -> NerExample:
    if format == "csv":
        if "tokens" not in raw or "ner_tags" not in raw:
            raise MalformedRecord("missing tokens/ner_tags column")
        tokens = _list_cell(raw["tokens"], "tokens")
        tags = _list_cell(raw["ner_tags"], "ner_tags")
        ex_id = str(raw.get("id") or f"row{lineno}")
    else:
        for key in ("id", "tokens", "ner_tags"):
            if key not in raw:
                raise MalformedRecord(f"missing field {key!r}")
        tokens = _require_string_list(raw["tokens"], "tokens")
        tags = _require_string_list(raw["ner_tags"], "ner_tags")
        ex_id = str(raw["id"])
    if len(tokens) != len(tags):
        raise MalformedRecord(
            f"{len(tags)} tags for {len(tokens)} tokens (lengths must match)"
        )
    spans = bio_to_spans([normalize_tag(t) for t in tags])
    return NerExample(id=ex_id, tokens=tuple(tokens), entities=tuple(spans))


def parse_nli_dataset(path: str | Path, format: str = "jsonl") -> list[NliRecord]:
    """Parse and validate an NLI dataset file (premise/hypothesis/label/legal_act)."""
    path = Path(path)
    records: list[NliRecord] = []
    for lineno, raw in _iter_records(path, format):
        try:
            for key in ("premise", "hypothesis", "label", "legal_act"):
                if key not in raw or raw[key] is None:
                    raise MalformedRecord(f"missing field {key!r}")
            label = str(raw["label"]).strip()
            if label not in NLI_LABELS:
                raise MalformedRecord(f"unknown label: {raw['label']!r}")
            records.append(
                NliRecord(
                    premise=str(raw["premise"]),
                    hypothesis=str(raw["hypothesis"]),
                    label=label,
                    domain=canonical_domain(str(raw["legal_act"])),
                )
            )
        except DataError as err:
            raise _located(err, path, lineno) from None
    return records


def write_ner_dataset(examples: Iterable[NerExample], path: str | Path) -> None:
    """Write NER examples in the canonical line-delimited format."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for ex in examples:
            record = {
                "id": ex.id,
                "tokens": list(ex.tokens),
                "ner_tags": spans_to_bio(len(ex.tokens), ex.entities),
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def write_nli_dataset(records: Iterable[NliRecord], path: str | Path) -> None:
    """Write NLI records in the canonical line-delimited format."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            record = {
                "premise": rec.premise,
                "hypothesis": rec.hypothesis,
                "label": rec.label,
                "legal_act": rec.domain,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


# --- statistics -------------------------------------------------------------

def entity_word_stats(examples: Sequence[NerExample]) -> dict[str, float]:
    """Mean span length in words, per entity type present in the data."""
    if not examples:
        raise EmptyDataset("entity_word_stats needs at least one example")
    totals: dict[str, int] = {}
    counts: dict[str, int] = {}
    for ex in examples:
        for span in ex.entities:
            totals[span.entity_type] = totals.get(span.entity_type, 0) + len(span)
            counts[span.entity_type] = counts.get(span.entity_type, 0) + 1
    return {t: totals[t] / counts[t] for t in ENTITY_TYPES if t in counts}
