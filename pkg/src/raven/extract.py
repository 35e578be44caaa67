"""Stage 2: schema-guided prompt assembly with in-context example values,
structured extraction per clip, and conformance repair."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from .errors import MalformedOutput, RavenError, TemplateError
from .gateway import Gateway, PromptRequest, RetryPolicy, media_part, text_part
from .index import RetrievalResult, SchemaIndex, retrieve
from .model import (
    CanonicalCatalog,
    ClipManifestEntry,
    EntityAttribute,
    EntityRecord,
    EntitySchema,
    GenericEntity,
    normalize_category_name,
)
from .store import RecordStore

EXTRACTION_SCHEMA = {
    "entities": [
        {"entity_type": "string", "attributes": [{"name": "string", "value": "string"}]}
    ],
}

DEFAULT_MAX_EXAMPLES_INLINE = 3


def render_schema_prompt(
    schema: EntitySchema, template: str, max_examples_inline: int = DEFAULT_MAX_EXAMPLES_INLINE
) -> str:
    """Render the schema block into the extraction template: every entity
    and attribute in schema order, each attribute with its description and
    up to max_examples_inline example values."""
    if "{schema_block}" not in template:
        raise TemplateError("template is missing {schema_block}")
    lines = [f"Category: {schema.category}"]
    for ent in schema.entities:
        lines.append(f"Entity: {ent.name}")
        for attr in ent.attributes:
            examples = ", ".join(attr.examples[:max_examples_inline])
            lines.append(f"  - {attr.name}: {attr.description} (examples: {examples})")
    return template.replace("{schema_block}", "\n".join(lines))


def build_extraction_request(
    clip: ClipManifestEntry,
    schema: EntitySchema,
    template: str,
    max_examples_inline: int = DEFAULT_MAX_EXAMPLES_INLINE,
    text_sidechannel: bool = True,
) -> PromptRequest:
    parts = [media_part(clip.media_uri), text_part(render_schema_prompt(schema, template, max_examples_inline))]
    if text_sidechannel:
        if clip.transcript_text:
            parts.append(text_part(f"Transcript:\n{clip.transcript_text}"))
        if clip.caption_text:
            parts.append(text_part(f"Caption:\n{clip.caption_text}"))
    return PromptRequest(role="vlm", parts=tuple(parts), response_schema=EXTRACTION_SCHEMA)


def repair_conformance(
    parsed, schema: EntitySchema
) -> tuple[list[GenericEntity], int, list[str]]:
    """Keep only schema-sanctioned entity types and attribute names.

    Matching is normalization-level (no fuzzy repair); kept names are
    rewritten to the schema's spelling, values trimmed but otherwise
    verbatim. Never fails; worst case returns an empty list.
    """
    by_type = {normalize_category_name(e.name): e for e in schema.entities}
    kept: list[GenericEntity] = []
    dropped = 0
    reasons: list[str] = []
    for ent in parsed.get("entities", []) if isinstance(parsed, dict) else []:
        etype = str(ent.get("entity_type", ""))
        sdef = by_type.get(normalize_category_name(etype))
        if sdef is None:
            dropped += 1
            reasons.append(f"entity_type '{etype}' not in schema")
            continue
        by_attr = {normalize_category_name(a.name): a.name for a in sdef.attributes}
        attrs: list[EntityAttribute] = []
        seen: set[str] = set()
        for a in ent.get("attributes", []):
            name = str(a.get("name", ""))
            canonical_name = by_attr.get(normalize_category_name(name))
            if canonical_name is None:
                dropped += 1
                reasons.append(f"attribute '{etype}.{name}' not in schema")
                continue
            if canonical_name in seen:
                dropped += 1
                reasons.append(f"duplicate attribute '{etype}.{canonical_name}'")
                continue
            seen.add(canonical_name)
            attrs.append(EntityAttribute(canonical_name, str(a.get("value", "")).strip()))
        kept.append(GenericEntity(sdef.name, tuple(attrs)))
    return kept, dropped, reasons


def extract_entities(
    gateway: Gateway,
    clip: ClipManifestEntry,
    schema: EntitySchema,
    retrieval: RetrievalResult,
    raw_category: str,
    template: str,
    policy: Optional[RetryPolicy] = None,
    max_examples_inline: int = DEFAULT_MAX_EXAMPLES_INLINE,
    text_sidechannel: bool = True,
    clock: Optional[Callable[[], str]] = None,
) -> tuple[EntityRecord, int, list[str]]:
    req = build_extraction_request(clip, schema, template, max_examples_inline, text_sidechannel)
    resp = gateway.complete_structured(req, policy)
    entities, dropped, reasons = repair_conformance(resp.parsed, schema)
    from .categorize import _utc_now

    record = EntityRecord(
        clip_id=clip.clip_id,
        raw_category=raw_category,
        canonical_category=retrieval.canonical_category,
        retrieval_similarity=retrieval.similarity,
        schema_version=schema.schema_version,
        entities=tuple(entities),
        model_id=resp.model_id,
        created_at=clock() if clock else _utc_now(),
    )
    return record, dropped, reasons


# ---------------------------------------------------------------------------
# batch orchestration


@dataclass
class ExtractSummary:
    processed: int
    failed: int
    dropped_members: int


def _retrieval_query(clip: ClipManifestEntry) -> Optional[str]:
    # clips that skipped stage 1 have no raw category; fall back to their
    # text side-channels as the retrieval query
    for candidate in (clip.caption_text, clip.transcript_text, clip.steering_hint):
        if candidate and candidate.strip():
            return candidate.strip()
    return None


def run_extract(
    gateway: Gateway,
    clips: list[ClipManifestEntry],
    raw_categories: dict[str, str],  # clip_id -> raw category (from stage 1)
    catalog: CanonicalCatalog,
    index: SchemaIndex,
    schema_dir,
    store: RecordStore,
    template: str,
    policy: Optional[RetryPolicy] = None,
    min_similarity: float = 0.30,
    max_examples_inline: int = DEFAULT_MAX_EXAMPLES_INLINE,
    text_sidechannel: bool = True,
    max_in_flight: int = 8,
    clock: Optional[Callable[[], str]] = None,
) -> ExtractSummary:
    """Extract schema-conformant entities for each clip.

    Schema selection prefers the catalog's raw->canonical mapping when the
    clip's raw category was seen during canonicalization; otherwise it
    falls back to embedding retrieval over the index.
    """
    import json as _json

    schema_cache: dict[str, EntitySchema] = {}
    entry_by_ref = {e.schema_ref: e for e in index.entries}
    ref_by_category = {
        normalize_category_name(e.canonical_category): e.schema_ref for e in index.entries
    }
    # variant spellings of a seen raw name still take the mapping fast path
    norm_mapping = {
        normalize_category_name(raw): canonical for raw, canonical in catalog.mapping.items()
    }

    def load_schema_ref(ref: str) -> EntitySchema:
        if ref not in schema_cache:
            with open(Path(schema_dir) / ref, "r", encoding="utf-8") as fh:
                schema_cache[ref] = EntitySchema.from_json(_json.load(fh))
        return schema_cache[ref]

    def select(clip: ClipManifestEntry) -> tuple[RetrievalResult, str]:
        raw = raw_categories.get(clip.clip_id)
        if raw and normalize_category_name(raw) in norm_mapping:
            canonical = norm_mapping[normalize_category_name(raw)]
            ref = ref_by_category.get(normalize_category_name(canonical))
            if ref is not None:
                return RetrievalResult(
                    entry_by_ref[ref].canonical_category, ref, 1.0, False
                ), raw
        query = raw or _retrieval_query(clip)
        if query is None:
            raise RavenError(
                f"clip '{clip.clip_id}' has no raw category and no text to retrieve with"
            )
        return retrieve(gateway, query, index, min_similarity), (raw or query)

    results: list = [None] * len(clips)

    def work(i: int):
        clip = clips[i]
        try:
            retrieval, raw = select(clip)
            schema = load_schema_ref(retrieval.schema_ref)
            results[i] = extract_entities(
                gateway, clip, schema, retrieval, raw, template, policy,
                max_examples_inline, text_sidechannel, clock,
            )
        except (MalformedOutput, RavenError) as exc:
            results[i] = exc

    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        list(pool.map(work, range(len(clips))))

    records, failures, drops = [], [], []
    total_dropped = 0
    for clip, result in zip(clips, results):
        if isinstance(result, tuple):
            record, dropped, reasons = result
            records.append(record.to_json())
            total_dropped += dropped
            for reason in reasons:
                drops.append({"clip_id": clip.clip_id, "dropped": reason, "reason": reason})
        else:
            failures.append(
                {
                    "clip_id": clip.clip_id,
                    "stage": "extract",
                    "error_kind": type(result).__name__,
                    "message": str(result),
                }
            )
    with store.acquire_writer():
        if records:
            store.append_many("entities", records)
        if failures:
            store.append_many("failures", failures)
        if drops:
            store.append_many("drops", drops)
    return ExtractSummary(
        processed=len(records), failed=len(failures), dropped_members=total_dropped
    )
