"""Stage 1a: per-clip category inference plus generic-entity extraction,
and aggregation of raw category frequencies."""

from __future__ import annotations

from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Iterable, Optional

from .errors import MalformedOutput, TemplateError
from .gateway import Gateway, PromptRequest, RetryPolicy, media_part, text_part
from .model import (
    ClipManifestEntry,
    EntityAttribute,
    GenericEntity,
    RawCategorization,
    normalize_category_name,
)
from .store import RecordStore

CATEGORIZATION_SCHEMA = {
    "raw_category": "string",
    "generic_entities?": [
        {"entity_type": "string", "attributes": [{"name": "string", "value": "string"}]}
    ],
}


def default_template(name: str) -> str:
    return resources.files("raven.templates").joinpath(f"{name}.txt").read_text(
        encoding="utf-8"
    )


def build_categorization_prompt(
    clip: ClipManifestEntry, template: str, generic_entities: bool = True
) -> PromptRequest:
    """Fill the categorization template for one clip.

    The template must contain {media} and {steering}; the clip's media goes
    through as an opaque media_ref part as well.
    """
    for placeholder in ("{media}", "{steering}"):
        if placeholder not in template:
            raise TemplateError(f"template is missing {placeholder}")
    steering = clip.steering_hint or ""
    text = template.replace("{media}", clip.media_uri).replace("{steering}", steering)
    schema = dict(CATEGORIZATION_SCHEMA) if generic_entities else {"raw_category": "string"}
    return PromptRequest(
        role="vlm",
        parts=(media_part(clip.media_uri), text_part(text)),
        response_schema=schema,
    )


def _nonempty_category(parsed) -> list[str]:
    if not str(parsed.get("raw_category", "")).strip():
        return ["$.raw_category: empty after trimming"]
    return []


def categorize_clip(
    gateway: Gateway,
    clip: ClipManifestEntry,
    template: str,
    policy: Optional[RetryPolicy] = None,
    generic_entities: bool = True,
    clock: Optional[Callable[[], str]] = None,
) -> RawCategorization:
    req = build_categorization_prompt(clip, template, generic_entities)
    resp = gateway.complete_structured(req, policy, extra_validate=_nonempty_category)
    parsed = resp.parsed
    entities = []
    if generic_entities:
        for ent in parsed.get("generic_entities", []):
            seen = set()
            attrs = []
            for a in ent.get("attributes", []):
                if a["name"] in seen:
                    continue
                seen.add(a["name"])
                attrs.append(EntityAttribute(a["name"], a["value"]))
            entities.append(GenericEntity(ent["entity_type"], tuple(attrs)))
    created = clock() if clock else _utc_now()
    return RawCategorization(
        clip_id=clip.clip_id,
        raw_category=parsed["raw_category"].strip(),
        generic_entities=tuple(entities),
        model_id=resp.model_id,
        created_at=created,
    )


def _utc_now() -> str:
    from datetime import datetime, timezone

    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class CategorizeSummary:
    processed: int
    failed: int
    tally_size: int


def run_categorize(
    gateway: Gateway,
    clips: list[ClipManifestEntry],
    store: RecordStore,
    template: str,
    policy: Optional[RetryPolicy] = None,
    generic_entities: bool = True,
    max_in_flight: int = 8,
    clock: Optional[Callable[[], str]] = None,
) -> CategorizeSummary:
    """Categorize a manifest with bounded parallelism.

    Per-clip MalformedOutput goes to the failures stream and the batch
    continues. Records are written in manifest order so reruns with the
    stub provider are byte-identical.
    """
    results: list = [None] * len(clips)

    def work(i: int):
        try:
            results[i] = categorize_clip(
                gateway, clips[i], template, policy, generic_entities, clock
            )
        except MalformedOutput as exc:
            results[i] = exc

    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        list(pool.map(work, range(len(clips))))

    records, failures = [], []
    for clip, result in zip(clips, results):
        if isinstance(result, RawCategorization):
            records.append(result.to_json())
        else:
            failures.append(
                {
                    "clip_id": clip.clip_id,
                    "stage": "categorize",
                    "error_kind": type(result).__name__,
                    "message": str(result),
                }
            )
    with store.acquire_writer():
        if records:
            store.append_many("categorization", records)
        if failures:
            store.append_many("failures", failures)
    tally = tally_raw_categories(
        RawCategorization.from_json(r) for r in records
    )
    return CategorizeSummary(
        processed=len(records), failed=len(failures), tally_size=len(tally)
    )


# ---------------------------------------------------------------------------
# frequency tally


@dataclass(frozen=True)
class CategoryCount:
    representative: str  # most frequent original spelling
    count: int


def tally_raw_categories(records: Iterable[RawCategorization]) -> dict[str, CategoryCount]:
    """Count raw categories keyed by their normalized form; remember the
    most frequent original spelling (ties: lexicographically smallest)."""
    counts: Counter = Counter()
    spellings: dict[str, Counter] = {}
    for record in records:
        norm = normalize_category_name(record.raw_category)
        counts[norm] += 1
        spellings.setdefault(norm, Counter())[record.raw_category] += 1
    out = {}
    for norm, count in counts.items():
        rep = min(spellings[norm].items(), key=lambda kv: (-kv[1], kv[0]))[0]
        out[norm] = CategoryCount(representative=rep, count=count)
    return out


def top_k(tally: dict[str, CategoryCount], k: int) -> list[tuple[str, int]]:
    """Top k raw names by count, descending; ties broken lexicographically
    by normalized name."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ordered = sorted(tally.items(), key=lambda kv: (-kv[1].count, kv[0]))
    return [(cc.representative, cc.count) for _, cc in ordered[:k]]
