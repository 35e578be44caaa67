"""Stage 1b: LLM canonicalization of raw category names and per-category
entity schema generation, with deterministic repair and persistence."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

from .errors import CatalogEmpty, MalformedOutput
from .gateway import Gateway, PromptRequest, RetryPolicy, text_part
from .index import cosine
from .model import (
    AttributeDefinition,
    CanonicalCatalog,
    EntityDefinition,
    EntitySchema,
    normalize_category_name,
    validate_schema,
)

CANONICALIZE_SCHEMA = {
    "canonical_categories": ["string"],
    "mapping": {"*": "string"},
}

SCHEMA_GEN_SCHEMA = {
    "entities": [
        {
            "name": "string",
            "attributes": [
                {"name": "string", "description": "string", "examples": ["string"]}
            ],
        }
    ],
}

MAX_ENTITIES_PER_SCHEMA = 12
MAX_ATTRIBUTES_PER_ENTITY = 8


def build_canonicalize_prompt(top_raw: list[tuple[str, int]]) -> PromptRequest:
    lines = "\n".join(f"- {name} ({count} clips)" for name, count in top_raw)
    text = (
        "Below are the most frequent raw video category names produced while "
        "categorizing a video collection, with their occurrence counts.\n"
        "Normalize and dedupe similar concepts into a short canonical list of "
        "categories, preferring the most representative spellings.\n\n"
        f"{lines}\n\n"
        "Respond with a single JSON object:\n"
        '- "canonical_categories": the deduplicated canonical category names.\n'
        '- "mapping": an object mapping every raw name above to one canonical '
        "category.\n"
        "Respond with JSON only."
    )
    return PromptRequest(role="llm", parts=(text_part(text),), response_schema=CANONICALIZE_SCHEMA)


def repair_catalog(
    gateway: Gateway,
    top_raw: list[tuple[str, int]],
    canonical_categories: list[str],
    mapping: dict,
    version: int,
    model_id: str,
) -> CanonicalCatalog:
    """Deterministically repair an LLM canonicalization result so the
    catalog invariants hold: dedupe canonicals under normalization (first
    spelling wins) and map every raw input, falling back to the nearest
    canonical by embedding cosine."""
    kept: list[str] = []
    by_norm: dict[str, str] = {}
    for name in canonical_categories:
        name = name.strip()
        if not name:
            continue
        norm = normalize_category_name(name)
        if norm not in by_norm:
            by_norm[norm] = name
            kept.append(name)
    if not kept:
        raise CatalogEmpty("no canonical categories after repair")

    kept_vecs = None

    def nearest(raw: str) -> str:
        nonlocal kept_vecs
        if kept_vecs is None:
            kept_vecs = gateway.embed(kept)
        qvec = gateway.embed([raw])[0]
        best_i, best_sim = 0, -2.0
        for i, vec in enumerate(kept_vecs):
            sim = cosine(qvec, vec)
            if sim > best_sim:
                best_i, best_sim = i, sim
        return kept[best_i]

    repaired: dict[str, str] = {}
    for raw, _count in top_raw:
        target = mapping.get(raw)
        target_norm = normalize_category_name(target) if target else None
        if target_norm in by_norm:
            repaired[raw] = by_norm[target_norm]
        else:
            repaired[raw] = nearest(raw)

    return CanonicalCatalog(
        version=version,
        canonical_categories=tuple(kept),
        mapping=repaired,
        model_id=model_id,
    )


def canonicalize(
    gateway: Gateway,
    top_raw: list[tuple[str, int]],
    policy: Optional[RetryPolicy] = None,
    version: int = 1,
) -> CanonicalCatalog:
    if not top_raw:
        raise ValueError("top_raw must be non-empty")
    req = build_canonicalize_prompt(top_raw)
    resp = gateway.complete_structured(req, policy)
    parsed = resp.parsed
    return repair_catalog(
        gateway,
        top_raw,
        parsed.get("canonical_categories", []),
        parsed.get("mapping", {}),
        version,
        resp.model_id,
    )


# ---------------------------------------------------------------------------
# schema generation


def build_schema_prompt(canonical_category: str) -> PromptRequest:
    text = (
        f'For the video category "{canonical_category}", list the typical '
        "entities one would expect to find in clips of that domain.\n"
        f"Produce at most {MAX_ENTITIES_PER_SCHEMA} entities, each with at most "
        f"{MAX_ATTRIBUTES_PER_ENTITY} attributes. Every attribute needs a short "
        "description and at least one example value.\n\n"
        "Respond with a single JSON object:\n"
        '- "entities": [{"name", "attributes": [{"name", "description", '
        '"examples"}]}]\n'
        "Respond with JSON only."
    )
    return PromptRequest(role="llm", parts=(text_part(text),), response_schema=SCHEMA_GEN_SCHEMA)


def _schema_from_parsed(parsed, category: str, version: int) -> EntitySchema:
    return EntitySchema(
        category=category,
        schema_version=version,
        entities=tuple(
            EntityDefinition(
                name=e["name"],
                attributes=tuple(
                    AttributeDefinition(
                        name=a["name"],
                        description=a["description"],
                        examples=tuple(a["examples"]),
                    )
                    for a in e["attributes"][:MAX_ATTRIBUTES_PER_ENTITY]
                ),
            )
            for e in parsed["entities"][:MAX_ENTITIES_PER_SCHEMA]
        ),
    )


def generate_schema(
    gateway: Gateway,
    canonical_category: str,
    policy: Optional[RetryPolicy] = None,
    schema_version: int = 1,
) -> EntitySchema:
    """Generate a validated EntitySchema; the gateway's corrective retry
    loop re-prompts until validate_schema passes or attempts run out."""
    req = build_schema_prompt(canonical_category)

    def check(parsed) -> list[str]:
        report = validate_schema(_schema_from_parsed(parsed, canonical_category, schema_version))
        return list(report.violations)

    resp = gateway.complete_structured(req, policy, extra_validate=check)
    return _schema_from_parsed(resp.parsed, canonical_category, schema_version)


def generate_schemas(
    gateway: Gateway,
    catalog: CanonicalCatalog,
    policy: Optional[RetryPolicy] = None,
    schema_version: int = 1,
    max_in_flight: int = 8,
) -> tuple[list[EntitySchema], list[tuple[str, str]]]:
    """Generate schemas for every catalog category with bounded
    parallelism; failed categories are returned, not raised."""
    categories = list(catalog.canonical_categories)
    results: list = [None] * len(categories)

    def work(i: int):
        try:
            results[i] = generate_schema(gateway, categories[i], policy, schema_version)
        except MalformedOutput as exc:
            results[i] = exc

    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        list(pool.map(work, range(len(categories))))

    schemas, failed = [], []
    for category, result in zip(categories, results):
        if isinstance(result, EntitySchema):
            schemas.append(result)
        else:
            failed.append((category, str(result)))
    return schemas, failed


# ---------------------------------------------------------------------------
# persistence


def category_slug(canonical_category: str) -> str:
    return normalize_category_name(canonical_category).replace(" ", "-")


def _dump(obj, path: Path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def persist_catalog(catalog: CanonicalCatalog, dir_path) -> Path:
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    path = dir_path / f"catalog.v{catalog.version}.json"
    obj = catalog.to_json()
    obj["mapping"] = {k: obj["mapping"][k] for k in sorted(obj["mapping"])}
    _dump(obj, path)
    return path


def persist_schemas(schemas: list[EntitySchema], dir_path) -> list[Path]:
    """Write each schema to schemas/{slug}.v{version}.json plus a manifest
    of current versions. Re-running with identical inputs is byte-identical;
    old versions are never mutated."""
    schemas_dir = Path(dir_path) / "schemas"
    schemas_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    manifest: dict[str, dict] = {}
    for schema in sorted(schemas, key=lambda s: normalize_category_name(s.category)):
        name = f"{category_slug(schema.category)}.v{schema.schema_version}.json"
        path = schemas_dir / name
        _dump(schema.to_json(), path)
        paths.append(path)
        manifest[schema.category] = {
            "file": f"schemas/{name}",
            "schema_version": schema.schema_version,
        }
    _dump(manifest, schemas_dir / "manifest.json")
    return paths


def load_schemas_manifest(dir_path) -> dict[str, dict]:
    path = Path(dir_path) / "schemas" / "manifest.json"
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def load_schema(dir_path, manifest_entry: dict) -> EntitySchema:
    with open(Path(dir_path) / manifest_entry["file"], "r", encoding="utf-8") as fh:
        return EntitySchema.from_json(json.load(fh))


def latest_catalog_version(dir_path) -> int:
    """Highest catalog.v{N}.json present, or 0 when none exists."""
    best = 0
    for path in Path(dir_path).glob("catalog.v*.json"):
        stem = path.name[len("catalog.v") : -len(".json")]
        if stem.isdigit():
            best = max(best, int(stem))
    return best


def load_catalog(dir_path, version: Optional[int] = None) -> CanonicalCatalog:
    version = version or latest_catalog_version(dir_path)
    path = Path(dir_path) / f"catalog.v{version}.json"
    with open(path, "r", encoding="utf-8") as fh:
        return CanonicalCatalog.from_json(json.load(fh))
