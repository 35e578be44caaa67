"""RAVEN-style pipeline: structure video collections by inferring
categories, generating per-category entity schemas, and extracting
schema-conformant entities via a pluggable VLM/LLM/embedding gateway."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    CanonicalCatalog,
    ClipManifestEntry,
    EntityRecord,
    EntitySchema,
    GenericEntity,
    RawCategorization,
    normalize_category_name,
    normalize_entity_value,
    validate_schema,
)
