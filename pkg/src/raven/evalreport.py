"""Desk-scale evaluation: entity recall per method, distribution
histograms, top extracted values, and per-clip case-study tables.

Baseline method outputs (speech NER, OCR, caption keywords, YOLO) are
ingested from JSONL files, never computed here.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import UnknownClip
from .model import (
    EntityRecord,
    EntitySchema,
    normalize_category_name,
    normalize_entity_value,
)

DEFAULT_JACCARD = 0.5
DEFAULT_LEVENSHTEIN = 0.85

RECALL_ENTITY_TYPES = ("Person", "Location", "Object")
DEFAULT_METHODS = ("ours", "speech", "ocr", "caption", "yolo")


@dataclass(frozen=True)
class GroundTruthEntry:
    clip_id: str
    entity_type: str
    value: str


@dataclass(frozen=True)
class MethodOutput:
    method: str
    clip_id: str
    entity_type: str
    value: str
    attributes: tuple[tuple[str, str], ...] = ()


def load_ground_truth(path) -> list[GroundTruthEntry]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                out.append(GroundTruthEntry(obj["clip_id"], obj["entity_type"], obj["value"]))
    return out


def load_method_outputs(path, method: Optional[str] = None) -> list[MethodOutput]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                out.append(
                    MethodOutput(
                        method=method or obj.get("method", ""),
                        clip_id=obj["clip_id"],
                        entity_type=obj["entity_type"],
                        value=obj["value"],
                        attributes=tuple(
                            (a["name"], a["value"]) for a in obj.get("attributes", [])
                        ),
                    )
                )
    return out


def our_method_outputs(records: Iterable[EntityRecord]) -> list[MethodOutput]:
    """Flatten pipeline EntityRecords into MethodOutputs for the recall
    protocol. The entity's value is its Name/Type-like attribute when one
    exists, else its first attribute value."""
    preferred = ("name", "type", "description", "location")
    out = []
    for record in records:
        for ent in record.entities:
            if not ent.attributes:
                continue
            by_norm = {normalize_entity_value(a.name): a.value for a in ent.attributes}
            value = next(
                (by_norm[p] for p in preferred if p in by_norm),
                ent.attributes[0].value,
            )
            out.append(
                MethodOutput(
                    method="ours",
                    clip_id=record.clip_id,
                    entity_type=ent.entity_type,
                    value=value,
                    attributes=tuple((a.name, a.value) for a in ent.attributes),
                )
            )
    return out


# ---------------------------------------------------------------------------
# matching


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def match_entity(
    predicted: str,
    truth: str,
    jaccard_threshold: float = DEFAULT_JACCARD,
    levenshtein_threshold: float = DEFAULT_LEVENSHTEIN,
) -> bool:
    """True when the normalized strings are equal, token-set Jaccard is at
    least jaccard_threshold, or normalized Levenshtein similarity is at
    least levenshtein_threshold. Symmetric in its arguments."""
    p = normalize_entity_value(predicted)
    t = normalize_entity_value(truth)
    if p == t:
        return True
    if not p or not t:
        return False
    pt, tt = set(p.split()), set(t.split())
    if len(pt & tt) / len(pt | tt) >= jaccard_threshold:
        return True
    longest = max(len(p), len(t))
    return 1.0 - levenshtein(p, t) / longest >= levenshtein_threshold


def entity_recall(
    outputs: list[MethodOutput],
    truth: list[GroundTruthEntry],
    method: str,
    entity_type: str,
    jaccard_threshold: float = DEFAULT_JACCARD,
    levenshtein_threshold: float = DEFAULT_LEVENSHTEIN,
) -> tuple[Optional[float], int, int]:
    """Micro-averaged recall: fraction of truth entries of entity_type for
    which some output of (method, same clip, same type) matches. Each truth
    entry counts at most once."""
    etype = normalize_category_name(entity_type)
    relevant_truth = [t for t in truth if normalize_category_name(t.entity_type) == etype]
    by_clip: dict[str, list[MethodOutput]] = {}
    for o in outputs:
        if o.method == method and normalize_category_name(o.entity_type) == etype:
            by_clip.setdefault(o.clip_id, []).append(o)
    matched = 0
    for t in relevant_truth:
        candidates = by_clip.get(t.clip_id, [])
        if any(
            match_entity(o.value, t.value, jaccard_threshold, levenshtein_threshold)
            for o in candidates
        ):
            matched += 1
    total = len(relevant_truth)
    recall = matched / total if total > 0 else None
    return recall, matched, total


@dataclass
class EvalReport:
    methods: list[str]
    entity_types: list[str]
    cells: dict  # (method, entity_type) -> {"recall", "matched", "total"}
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "methods": self.methods,
            "entity_types": self.entity_types,
            "results": [
                {
                    "method": m,
                    "entity_type": e,
                    **self.cells[(m, e)],
                }
                for m in self.methods
                for e in self.entity_types
            ],
            "metadata": self.metadata,
        }

    def recall_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(["method", "entity_type", "recall", "matched", "total"])
        for m in self.methods:
            for e in self.entity_types:
                cell = self.cells[(m, e)]
                recall = "" if cell["recall"] is None else f"{cell['recall']:.6f}"
                writer.writerow([m, e, recall, cell["matched"], cell["total"]])
        return buf.getvalue()


def build_eval_report(
    outputs: list[MethodOutput],
    truth: list[GroundTruthEntry],
    methods: Iterable[str] = DEFAULT_METHODS,
    entity_types: Iterable[str] = RECALL_ENTITY_TYPES,
    jaccard_threshold: float = DEFAULT_JACCARD,
    levenshtein_threshold: float = DEFAULT_LEVENSHTEIN,
    metadata: Optional[dict] = None,
) -> EvalReport:
    methods = list(methods)
    entity_types = list(entity_types)
    cells = {}
    for m in methods:
        for e in entity_types:
            recall, matched, total = entity_recall(
                outputs, truth, m, e, jaccard_threshold, levenshtein_threshold
            )
            cells[(m, e)] = {"recall": recall, "matched": matched, "total": total}
    return EvalReport(methods, entity_types, cells, metadata or {})


# ---------------------------------------------------------------------------
# distributions


def category_distribution(records: Iterable[EntityRecord]) -> list[tuple[str, int]]:
    """Canonical-category histogram, descending by count, ties
    lexicographic. Sum of counts equals the record count."""
    counts: dict[str, int] = {}
    for record in records:
        counts[record.canonical_category] = counts.get(record.canonical_category, 0) + 1
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def entity_type_distribution(records: Iterable[EntityRecord]) -> list[tuple[str, int]]:
    counts: dict[str, int] = {}
    for record in records:
        for ent in record.entities:
            counts[ent.entity_type] = counts.get(ent.entity_type, 0) + 1
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def attribute_distribution(
    records: Iterable[EntityRecord], entity_type: str
) -> list[tuple[str, int]]:
    """Attribute-name histogram within entities of one type."""
    etype = normalize_category_name(entity_type)
    counts: dict[str, int] = {}
    for record in records:
        for ent in record.entities:
            if normalize_category_name(ent.entity_type) != etype:
                continue
            for attr in ent.attributes:
                counts[attr.name] = counts.get(attr.name, 0) + 1
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def top_values(
    records: Iterable[EntityRecord],
    category: str,
    entity_type: str,
    attribute: str,
    n: int,
) -> list[tuple[str, int]]:
    """Most frequent normalized values of one attribute within one
    category/entity type."""
    if n <= 0:
        return []
    cat = normalize_category_name(category)
    etype = normalize_category_name(entity_type)
    attr_norm = normalize_category_name(attribute)
    counts: dict[str, int] = {}
    for record in records:
        if normalize_category_name(record.canonical_category) != cat:
            continue
        for ent in record.entities:
            if normalize_category_name(ent.entity_type) != etype:
                continue
            for attr in ent.attributes:
                if normalize_category_name(attr.name) != attr_norm:
                    continue
                value = normalize_entity_value(attr.value)
                if value:
                    counts[value] = counts.get(value, 0) + 1
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return ordered[:n]


# ---------------------------------------------------------------------------
# case study


@dataclass
class CaseStudyTable:
    clip_id: str
    columns: list[str]  # method names, "ours" first
    rows: list[tuple[str, str, dict]]  # (entity, attribute, method -> cell)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(["entity", "attribute"] + self.columns)
        for entity, attribute, cells in self.rows:
            writer.writerow([entity, attribute] + [cells.get(m, "-") for m in self.columns])
        return buf.getvalue()

    def to_text(self) -> str:
        header = ["Entity → Attribute"] + self.columns
        body = [
            [f"{entity} → {attribute}"] + [cells.get(m, "-") for m in self.columns]
            for entity, attribute, cells in self.rows
        ]
        widths = [
            max(len(str(row[i])) for row in [header] + body) for i in range(len(header))
        ]
        lines = [
            "  ".join(str(cell).ljust(w) for cell, w in zip(row, widths)).rstrip()
            for row in [header] + body
        ]
        return "\n".join(lines) + "\n"


def _our_cell(record: EntityRecord, entity_name: str, attribute_name: str) -> str:
    for ent in record.entities:
        if normalize_category_name(ent.entity_type) != normalize_category_name(entity_name):
            continue
        by_norm = {normalize_category_name(a.name): a.value for a in ent.attributes}
        value = by_norm.get(normalize_category_name(attribute_name))
        if not value:
            return "-"
        # lead with the entity's Name when the row is about another attribute
        name_value = by_norm.get("name")
        if name_value and normalize_category_name(attribute_name) != "name":
            return f"{name_value} → {value}"
        return value
    return "-"


def _baseline_cell(
    outputs: list[MethodOutput], entity_name: str, attribute_name: str, is_first_attr: bool
) -> str:
    ename = normalize_category_name(entity_name)
    aname = normalize_category_name(attribute_name)
    values = []
    for o in outputs:
        if normalize_category_name(o.entity_type) != ename:
            continue
        attr_match = next(
            (v for n, v in o.attributes if normalize_category_name(n) == aname), None
        )
        if attr_match is not None:
            values.append(attr_match)
        elif not o.attributes and is_first_attr:
            # flat baseline outputs (a bare label) surface on the entity's
            # first row only
            values.append(o.value)
    return "; ".join(values) if values else "-"


def case_study(
    clip_id: str,
    outputs_by_method: dict[str, list[MethodOutput]],
    our_record: Optional[EntityRecord],
    schema: EntitySchema,
    methods: Iterable[str] = ("speech", "ocr", "caption", "yolo"),
) -> CaseStudyTable:
    """Side-by-side comparison of extracted values for one clip, rows in
    schema order, '-' where a method produced nothing."""
    if our_record is None or our_record.clip_id != clip_id:
        raise UnknownClip(f"no extracted record for clip '{clip_id}'")
    methods = [m for m in methods]
    rows = []
    for ent in schema.entities:
        for i, attr in enumerate(ent.attributes):
            cells = {"ours": _our_cell(our_record, ent.name, attr.name)}
            for m in methods:
                clip_outputs = [
                    o for o in outputs_by_method.get(m, []) if o.clip_id == clip_id
                ]
                cells[m] = _baseline_cell(clip_outputs, ent.name, attr.name, i == 0)
            rows.append((ent.name, attr.name, cells))
    return CaseStudyTable(clip_id=clip_id, columns=["ours"] + methods, rows=rows)
