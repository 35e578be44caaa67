"""Shared domain types, name normalization, and schema validation.

Every type here is an immutable-ish dataclass with a canonical JSON form
(single object, snake_case field names) so records can round-trip through
the JSONL stores without loss.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from typing import Optional

from .errors import ManifestError

_NON_WORD_RE = re.compile(r"[^\w\s]+", re.UNICODE)
_WS_RE = re.compile(r"\s+", re.UNICODE)


def _normalize_pass(s: str) -> str:
    s = unicodedata.normalize("NFKC", s)
    s = s.replace("&", " and ")
    s = s.casefold()
    s = _NON_WORD_RE.sub(" ", s)
    s = s.replace("_", " ")
    return _WS_RE.sub(" ", s).strip()


def normalize_category_name(raw: str) -> str:
    """Fold a free-form category name to its canonical comparison form.

    Lowercase, NFKC fold, "&" -> "and", punctuation collapsed to single
    spaces, whitespace collapsed and trimmed. Idempotent.
    """
    # Iterate to a fixed point: casefold/NFKC interactions on exotic
    # codepoints can otherwise need a second pass.
    prev = None
    s = raw
    for _ in range(4):
        if s == prev:
            break
        prev = s
        s = _normalize_pass(s)
    return s


def normalize_entity_value(value: str) -> str:
    """Same normalization pipeline as category names; used for matching."""
    return normalize_category_name(value)


# ---------------------------------------------------------------------------
# manifest


@dataclass(frozen=True)
class ClipManifestEntry:
    clip_id: str
    media_uri: str
    duration_s: float = 0.0
    transcript_text: Optional[str] = None
    caption_text: Optional[str] = None
    steering_hint: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "media_uri": self.media_uri,
            "duration_s": self.duration_s,
            "transcript_text": self.transcript_text,
            "caption_text": self.caption_text,
            "steering_hint": self.steering_hint,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ClipManifestEntry":
        return cls(
            clip_id=obj["clip_id"],
            media_uri=obj["media_uri"],
            duration_s=float(obj.get("duration_s", 0.0)),
            transcript_text=obj.get("transcript_text"),
            caption_text=obj.get("caption_text"),
            steering_hint=obj.get("steering_hint"),
        )


def load_manifest(path) -> list[ClipManifestEntry]:
    """Load a JSONL manifest; duplicate clip_ids are a load-time error."""
    entries: list[ClipManifestEntry] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{line_no}: bad JSON: {exc}") from exc
            entry = ClipManifestEntry.from_json(obj)
            if not entry.clip_id:
                raise ManifestError(f"{path}:{line_no}: empty clip_id")
            if entry.clip_id in seen:
                raise ManifestError(
                    f"{path}:{line_no}: duplicate clip_id '{entry.clip_id}'"
                )
            if entry.duration_s < 0:
                raise ManifestError(
                    f"{path}:{line_no}: negative duration_s for '{entry.clip_id}'"
                )
            seen.add(entry.clip_id)
            entries.append(entry)
    return entries


# ---------------------------------------------------------------------------
# stage-1 output


@dataclass(frozen=True)
class EntityAttribute:
    name: str
    value: str

    def to_json(self) -> dict:
        return {"name": self.name, "value": self.value}


@dataclass(frozen=True)
class GenericEntity:
    entity_type: str
    attributes: tuple[EntityAttribute, ...] = ()

    def to_json(self) -> dict:
        return {
            "entity_type": self.entity_type,
            "attributes": [a.to_json() for a in self.attributes],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GenericEntity":
        return cls(
            entity_type=obj["entity_type"],
            attributes=tuple(
                EntityAttribute(a["name"], a["value"])
                for a in obj.get("attributes", [])
            ),
        )


@dataclass(frozen=True)
class RawCategorization:
    clip_id: str
    raw_category: str
    generic_entities: tuple[GenericEntity, ...]
    model_id: str
    created_at: str

    def to_json(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "raw_category": self.raw_category,
            "generic_entities": [e.to_json() for e in self.generic_entities],
            "model_id": self.model_id,
            "created_at": self.created_at,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RawCategorization":
        return cls(
            clip_id=obj["clip_id"],
            raw_category=obj["raw_category"],
            generic_entities=tuple(
                GenericEntity.from_json(e) for e in obj.get("generic_entities", [])
            ),
            model_id=obj.get("model_id", ""),
            created_at=obj.get("created_at", ""),
        )


# ---------------------------------------------------------------------------
# catalog


@dataclass(frozen=True)
class CanonicalCatalog:
    version: int
    canonical_categories: tuple[str, ...]
    mapping: dict  # raw category string -> canonical category string
    model_id: str

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "canonical_categories": list(self.canonical_categories),
            "mapping": dict(self.mapping),
            "model_id": self.model_id,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CanonicalCatalog":
        return cls(
            version=int(obj["version"]),
            canonical_categories=tuple(obj["canonical_categories"]),
            mapping=dict(obj["mapping"]),
            model_id=obj.get("model_id", ""),
        )

    def violations(self) -> list[str]:
        """Invariant check: mapping targets in catalog, no dupes under
        normalization."""
        out = []
        names = set(self.canonical_categories)
        for raw, target in self.mapping.items():
            if target not in names:
                out.append(f"mapping target '{target}' (from '{raw}') not in catalog")
        seen: dict[str, str] = {}
        for name in self.canonical_categories:
            norm = normalize_category_name(name)
            if norm in seen:
                out.append(f"'{name}' duplicates '{seen[norm]}' under normalization")
            else:
                seen[norm] = name
        return out


# ---------------------------------------------------------------------------
# entity schemas


@dataclass(frozen=True)
class AttributeDefinition:
    name: str
    description: str
    examples: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "examples": list(self.examples),
        }


@dataclass(frozen=True)
class EntityDefinition:
    name: str
    attributes: tuple[AttributeDefinition, ...]

    def to_json(self) -> dict:
        return {"name": self.name, "attributes": [a.to_json() for a in self.attributes]}


@dataclass(frozen=True)
class EntitySchema:
    category: str
    schema_version: int
    entities: tuple[EntityDefinition, ...]

    def to_json(self) -> dict:
        return {
            "category": self.category,
            "schema_version": self.schema_version,
            "entities": [e.to_json() for e in self.entities],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EntitySchema":
        return cls(
            category=obj["category"],
            schema_version=int(obj["schema_version"]),
            entities=tuple(
                EntityDefinition(
                    name=e["name"],
                    attributes=tuple(
                        AttributeDefinition(
                            name=a["name"],
                            description=a.get("description", ""),
                            examples=tuple(a.get("examples", [])),
                        )
                        for a in e.get("attributes", [])
                    ),
                )
                for e in obj.get("entities", [])
            ),
        )


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...]


def validate_schema(schema: EntitySchema) -> ValidationReport:
    """Check every EntitySchema invariant; violations carry the offending
    entity/attribute path."""
    violations: list[str] = []
    if not schema.entities:
        violations.append("entities empty")
    seen_entities: set[str] = set()
    for ent in schema.entities:
        if not ent.name.strip():
            violations.append("entity with empty name")
            continue
        if ent.name in seen_entities:
            violations.append(f"duplicate entity name '{ent.name}'")
        seen_entities.add(ent.name)
        seen_attrs: set[str] = set()
        for attr in ent.attributes:
            path = f"{ent.name}.{attr.name}"
            if not attr.name.strip():
                violations.append(f"{ent.name}: attribute with empty name")
                continue
            if attr.name in seen_attrs:
                violations.append(f"duplicate attribute name at {path}")
            seen_attrs.add(attr.name)
            if not attr.description.strip():
                violations.append(f"{path}: empty description")
            if not attr.examples:
                violations.append(f"{path}: no example values")
    return ValidationReport(ok=not violations, violations=tuple(violations))


# ---------------------------------------------------------------------------
# stage-2 output


@dataclass(frozen=True)
class EntityRecord:
    clip_id: str
    raw_category: str
    canonical_category: str
    retrieval_similarity: float
    schema_version: int
    entities: tuple[GenericEntity, ...]
    model_id: str
    created_at: str

    def to_json(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "raw_category": self.raw_category,
            "canonical_category": self.canonical_category,
            "retrieval_similarity": self.retrieval_similarity,
            "schema_version": self.schema_version,
            "entities": [e.to_json() for e in self.entities],
            "model_id": self.model_id,
            "created_at": self.created_at,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EntityRecord":
        return cls(
            clip_id=obj["clip_id"],
            raw_category=obj["raw_category"],
            canonical_category=obj["canonical_category"],
            retrieval_similarity=float(obj["retrieval_similarity"]),
            schema_version=int(obj["schema_version"]),
            entities=tuple(
                GenericEntity.from_json(e) for e in obj.get("entities", [])
            ),
            model_id=obj.get("model_id", ""),
            created_at=obj.get("created_at", ""),
        )


def record_conforms_to_schema(record: EntityRecord, schema: EntitySchema) -> list[str]:
    """Re-validate a persisted record against its schema (normalized name
    matching, same rule as conformance repair)."""
    problems = []
    by_type = {normalize_category_name(e.name): e for e in schema.entities}
    for ent in record.entities:
        sdef = by_type.get(normalize_category_name(ent.entity_type))
        if sdef is None:
            problems.append(f"{record.clip_id}: entity_type '{ent.entity_type}' not in schema")
            continue
        allowed = {normalize_category_name(a.name) for a in sdef.attributes}
        for attr in ent.attributes:
            if normalize_category_name(attr.name) not in allowed:
                problems.append(
                    f"{record.clip_id}: attribute '{attr.name}' not in schema entity '{ent.entity_type}'"
                )
    return problems
