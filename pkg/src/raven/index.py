"""Embedding-based schema retrieval: map a clip's raw category to the best
matching canonical category by cosine similarity.

At catalog scale (tens of categories) the index is an exact linear scan;
determinism and oracle-checkable correctness beat ANN structures here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import DimensionMismatch, IndexEmpty, ZeroVector
from .gateway import Gateway
from .model import CanonicalCatalog, normalize_category_name

DEFAULT_MIN_SIMILARITY = 0.30


def cosine(u: list[float], v: list[float]) -> float:
    """dot(u,v)/(|u||v|), clamped to [-1, 1] against rounding."""
    if len(u) != len(v):
        raise DimensionMismatch(f"dimensions differ: {len(u)} vs {len(v)}")
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine undefined for zero-norm vector")
    return max(-1.0, min(1.0, dot / (nu * nv)))


@dataclass(frozen=True)
class IndexEntry:
    canonical_category: str
    embedding: tuple[float, ...]
    schema_ref: str


@dataclass(frozen=True)
class SchemaIndex:
    dimension: int
    entries: tuple[IndexEntry, ...]
    catalog_version: int


@dataclass(frozen=True)
class RetrievalResult:
    canonical_category: str
    schema_ref: str
    similarity: float
    low_confidence: bool


def build_index(
    gateway: Gateway,
    catalog: CanonicalCatalog,
    schemas_manifest: dict[str, dict],
) -> tuple[SchemaIndex, list[str]]:
    """One entry per catalog category with a current schema; categories
    missing a schema are excluded with a warning record."""
    if not catalog.canonical_categories:
        raise IndexEmpty("catalog has no categories")
    included = [c for c in catalog.canonical_categories if c in schemas_manifest]
    warnings = [
        f"no schema for category '{c}'; excluded from index"
        for c in catalog.canonical_categories
        if c not in schemas_manifest
    ]
    if not included:
        raise IndexEmpty("no catalog category has a schema")
    vectors = gateway.embed(included)
    entries = tuple(
        IndexEntry(
            canonical_category=c,
            embedding=tuple(vec),
            schema_ref=schemas_manifest[c]["file"],
        )
        for c, vec in zip(included, vectors)
    )
    return SchemaIndex(
        dimension=gateway.dimension,
        entries=entries,
        catalog_version=catalog.version,
    ), warnings


def retrieve(
    gateway: Gateway,
    raw_category: str,
    index: SchemaIndex,
    min_similarity: float = DEFAULT_MIN_SIMILARITY,
) -> RetrievalResult:
    """Best-matching canonical category for a raw name.

    Exact matches under normalization short-circuit with similarity 1.0;
    otherwise the argmax cosine over all entries wins, ties broken by
    catalog order. Matches below min_similarity are flagged low_confidence
    rather than rejected.
    """
    if not index.entries:
        raise IndexEmpty("schema index has no entries")
    if not raw_category.strip():
        raise ValueError("raw_category must be non-empty")
    norm = normalize_category_name(raw_category)
    for entry in index.entries:
        if normalize_category_name(entry.canonical_category) == norm:
            return RetrievalResult(entry.canonical_category, entry.schema_ref, 1.0, False)
    qvec = gateway.embed([raw_category])[0]
    best: Optional[IndexEntry] = None
    best_sim = -2.0
    for entry in index.entries:
        sim = cosine(qvec, list(entry.embedding))
        if sim > best_sim:
            best, best_sim = entry, sim
    return RetrievalResult(
        best.canonical_category,
        best.schema_ref,
        best_sim,
        best_sim < min_similarity,
    )


# ---------------------------------------------------------------------------
# persistence


def save_index(index: SchemaIndex, dir_path) -> Path:
    path = Path(dir_path) / f"index.v{index.catalog_version}.json"
    obj = {
        "dimension": index.dimension,
        "catalog_version": index.catalog_version,
        "entries": [
            {
                "canonical_category": e.canonical_category,
                "embedding": list(e.embedding),
                "schema_ref": e.schema_ref,
            }
            for e in index.entries
        ],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=2)
        fh.write("\n")
    return path


def load_index(dir_path, catalog_version: int) -> SchemaIndex:
    path = Path(dir_path) / f"index.v{catalog_version}.json"
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    return SchemaIndex(
        dimension=int(obj["dimension"]),
        entries=tuple(
            IndexEntry(e["canonical_category"], tuple(e["embedding"]), e["schema_ref"])
            for e in obj["entries"]
        ),
        catalog_version=int(obj["catalog_version"]),
    )
