"""Shared test corpus: a 12-clip manifest plus a stub-provider fixture
covering the full pipeline (categorize -> canonicalize -> genschema ->
extract), including a Lincoln documentary clip used by the case study."""

from __future__ import annotations

import json

from raven.categorize import (
    build_categorization_prompt,
    default_template,
    tally_raw_categories,
    top_k,
)
from raven.extract import build_extraction_request
from raven.gateway import request_key
from raven.model import (
    AttributeDefinition,
    ClipManifestEntry,
    EntityDefinition,
    EntitySchema,
    RawCategorization,
)
from raven.schema_stage import build_canonicalize_prompt, build_schema_prompt

FIXED_TIME = "2025-01-01T00:00:00Z"


class FixtureBuilder:
    def __init__(self):
        self.completions = {}
        self.schema_failures = []

    def add(self, req, response):
        if not isinstance(response, (str, list)):
            response = json.dumps(response)
        self.completions[request_key(req)] = response
        return self

    def fail(self, req):
        self.schema_failures.append(request_key(req))
        return self

    def to_dict(self):
        return {"completions": self.completions, "schema_failures": self.schema_failures}

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, ensure_ascii=False, indent=2)
        return path


def clip(clip_id, uri=None, **kw):
    return ClipManifestEntry(clip_id=clip_id, media_uri=uri or f"vid://{clip_id}", **kw)


CLIPS = [
    clip("clip-lincoln", caption_text="a historical documentary about Abraham Lincoln"),
    clip("clip-hist-2"),
    clip("clip-cook-1"),
    clip("clip-cook-2"),
    clip("clip-howto-1", steering_hint="focus on the technique being taught"),
    clip("clip-howto-2"),
    clip("clip-travel-1"),
    clip("clip-travel-2"),
    clip("clip-edu"),
    clip("clip-music"),
    clip("clip-news"),
    clip("clip-sports"),
]

# raw category and generic entities each clip's categorize call returns
CATEGORIZE_RESPONSES = {
    "clip-lincoln": {
        "raw_category": "History",
        "generic_entities": [
            {
                "entity_type": "Person",
                "attributes": [
                    {"name": "Name", "value": "Abraham Lincoln"},
                    {"name": "Role", "value": "President"},
                ],
            },
            {
                "entity_type": "Object",
                "attributes": [{"name": "Type", "value": "Train Car"}],
            },
        ],
    },
    "clip-hist-2": {
        "raw_category": "Historical",
        "generic_entities": [
            {"entity_type": "Location", "attributes": [{"name": "Name", "value": "Museum"}]}
        ],
    },
    "clip-cook-1": {
        "raw_category": "Cooking",
        "generic_entities": [
            {
                "entity_type": "Background",
                "attributes": [{"name": "Setting", "value": "kitchen"}],
            }
        ],
    },
    "clip-cook-2": {
        "raw_category": "cooking!",
        "generic_entities": [
            {"entity_type": "Person", "attributes": [{"name": "Role", "value": "chef"}]}
        ],
    },
    "clip-howto-1": {"raw_category": "How-To", "generic_entities": []},
    "clip-howto-2": {"raw_category": "How to", "generic_entities": []},
    "clip-travel-1": {"raw_category": "Travel", "generic_entities": []},
    "clip-travel-2": {"raw_category": "Travel & Events", "generic_entities": []},
    "clip-edu": {"raw_category": "Education", "generic_entities": []},
    "clip-music": {"raw_category": "Music", "generic_entities": []},
    "clip-news": {"raw_category": "News", "generic_entities": []},
    "clip-sports": {"raw_category": "Sports", "generic_entities": []},
}

# canonical spellings the fixture LLM answers with (one deliberate
# duplicate, "history", to exercise the dedup repair)
CANONICAL_CATEGORIES = [
    "History", "history", "How-To", "Cooking", "Travel",
    "Education", "Music", "News", "Sports",
]

# expected after repair
KEPT_CATEGORIES = [
    "History", "How-To", "Cooking", "Travel", "Education", "Music", "News", "Sports",
]

CANONICAL_BY_NORM = {
    "history": "History",
    "historical": None,  # deliberately omitted from the mapping -> embedding repair
    "how to": "How-To",
    "cooking": "Cooking",
    "travel": "Travel",
    "travel and events": "Travel",
    "education": "Education",
    "music": "Music",
    "news": "News",
    "sports": "Sports",
}

SCHEMAS = {
    "History": EntitySchema(
        category="History",
        schema_version=1,
        entities=(
            EntityDefinition(
                "Person",
                (
                    AttributeDefinition("Name", "person's name", ("abraham lincoln", "neil armstrong")),
                    AttributeDefinition("Role", "their role", ("president", "astronaut")),
                    AttributeDefinition("Gender", "perceived gender", ("male", "female")),
                ),
            ),
            EntityDefinition(
                "Historical Event",
                (
                    AttributeDefinition("Description", "what happened", ("apollo 11", "world war ii")),
                    AttributeDefinition("Date", "when it happened", ("july 20, 1969",)),
                    AttributeDefinition("Location", "where it happened", ("washington d c",)),
                    AttributeDefinition("Key Figures", "people involved", ("neil armstrong",)),
                ),
            ),
            EntityDefinition(
                "Figure",
                (AttributeDefinition("Name", "historical figure's name", ("neil armstrong", "abraham lincoln")),),
            ),
        ),
    ),
    "How-To": EntitySchema(
        category="How-To",
        schema_version=1,
        entities=(
            EntityDefinition(
                "Tools & Materials",
                (AttributeDefinition("Type", "tool or material used", ("knife", "pot", "bowl")),),
            ),
            EntityDefinition(
                "Techniques",
                (AttributeDefinition("Type", "technique demonstrated", ("cutting", "cooking", "mixing")),),
            ),
        ),
    ),
    "Cooking": EntitySchema(
        category="Cooking",
        schema_version=1,
        entities=(
            EntityDefinition("Dish", (AttributeDefinition("Name", "dish prepared", ("pasta", "soup")),)),
            EntityDefinition(
                "Ingredient",
                (AttributeDefinition("Name", "ingredient shown", ("garlic", "tomato")),),
            ),
        ),
    ),
    "Travel": EntitySchema(
        category="Travel",
        schema_version=1,
        entities=(
            EntityDefinition(
                "Destination",
                (AttributeDefinition("Location", "place visited", ("bangkok", "tokyo", "london")),),
            ),
        ),
    ),
    "Education": EntitySchema(
        category="Education",
        schema_version=1,
        entities=(
            EntityDefinition("Topic", (AttributeDefinition("Name", "subject taught", ("algebra",)),)),
        ),
    ),
    "Music": EntitySchema(
        category="Music",
        schema_version=1,
        entities=(
            EntityDefinition("Instrument", (AttributeDefinition("Type", "instrument played", ("guitar",)),)),
        ),
    ),
    "News": EntitySchema(
        category="News",
        schema_version=1,
        entities=(
            EntityDefinition("Story", (AttributeDefinition("Topic", "story topic", ("election",)),)),
        ),
    ),
    "Sports": EntitySchema(
        category="Sports",
        schema_version=1,
        entities=(
            EntityDefinition("Sport", (AttributeDefinition("Type", "sport played", ("soccer",)),)),
        ),
    ),
}

LINCOLN_EXTRACTION = {
    "entities": [
        {
            "entity_type": "Person",
            "attributes": [
                {"name": "Name", "value": "Abraham Lincoln"},
                {"name": "Role", "value": "President"},
                {"name": "Gender", "value": "Male"},
            ],
        },
        {
            "entity_type": "historical event",
            "attributes": [
                {"name": "Description", "value": "Surrender of the Army of Northern Virginia"},
                {"name": "Date", "value": "April 9, 1865"},
                {"name": "Location", "value": "Appomattox Courthouse, Virginia"},
                {"name": "Key Figures", "value": "Robert E. Lee, Ulysses S. Grant"},
            ],
        },
        {
            "entity_type": "Figure",
            "attributes": [{"name": "Name", "value": "Abraham Lincoln"}],
        },
        # out-of-schema member: dropped by conformance repair
        {
            "entity_type": "Weather",
            "attributes": [{"name": "Condition", "value": "overcast"}],
        },
    ]
}

EXTRACTION_RESPONSES = {
    "clip-lincoln": LINCOLN_EXTRACTION,
    "clip-hist-2": {
        "entities": [
            {"entity_type": "Figure", "attributes": [{"name": "Name", "value": "Neil Armstrong"}]}
        ]
    },
    "clip-cook-1": {
        "entities": [
            {"entity_type": "Dish", "attributes": [{"name": "Name", "value": "soup"}]},
            {"entity_type": "Ingredient", "attributes": [{"name": "Name", "value": "garlic"}]},
        ]
    },
    "clip-cook-2": {
        "entities": [
            {"entity_type": "Dish", "attributes": [{"name": "Name", "value": "pasta"}]}
        ]
    },
    "clip-howto-1": {
        "entities": [
            {"entity_type": "Tools & Materials", "attributes": [{"name": "Type", "value": "knife"}]},
            {"entity_type": "Techniques", "attributes": [{"name": "Type", "value": "cutting"}]},
        ]
    },
    "clip-howto-2": {
        "entities": [
            {"entity_type": "Tools & Materials", "attributes": [{"name": "Type", "value": "fishing rod"}]}
        ]
    },
    "clip-travel-1": {
        "entities": [
            {"entity_type": "Destination", "attributes": [{"name": "Location", "value": "Tokyo"}]}
        ]
    },
    "clip-travel-2": {
        "entities": [
            {"entity_type": "Destination", "attributes": [{"name": "Location", "value": "New York City"}]}
        ]
    },
    "clip-edu": {
        "entities": [
            {"entity_type": "Topic", "attributes": [{"name": "Name", "value": "algebra"}]}
        ]
    },
    "clip-music": {
        "entities": [
            {"entity_type": "Instrument", "attributes": [{"name": "Type", "value": "guitar"}]}
        ]
    },
    "clip-news": {
        "entities": [
            {"entity_type": "Story", "attributes": [{"name": "Topic", "value": "election"}]}
        ]
    },
    "clip-sports": {
        "entities": [
            {"entity_type": "Sport", "attributes": [{"name": "Type", "value": "soccer"}]}
        ]
    },
}


def expected_canonical_for(raw_category):
    from raven.model import normalize_category_name

    return CANONICAL_BY_NORM.get(normalize_category_name(raw_category)) or "History"


def _schema_response(schema):
    return {
        "entities": [
            {
                "name": e.name,
                "attributes": [
                    {
                        "name": a.name,
                        "description": a.description,
                        "examples": list(a.examples),
                    }
                    for a in e.attributes
                ],
            }
            for e in schema.entities
        ]
    }


def build_pipeline_fixture(malformed_first_for=()):
    """Build the stub fixture dict covering every request the full
    pipeline issues over CLIPS.

    malformed_first_for: clip ids whose categorize response is invalid on
    attempt 1 and valid on attempt 2 (exercises the corrective retry).
    """
    builder = FixtureBuilder()
    template = default_template("categorize")
    extract_template = default_template("extract")

    records = []
    for c in CLIPS:
        response = CATEGORIZE_RESPONSES[c.clip_id]
        req = build_categorization_prompt(c, template, generic_entities=True)
        if c.clip_id in malformed_first_for:
            builder.add(req, ["{ this is not json", json.dumps(response)])
        else:
            builder.add(req, response)
        records.append(
            RawCategorization(
                clip_id=c.clip_id,
                raw_category=response["raw_category"],
                generic_entities=(),
                model_id="stub",
                created_at=FIXED_TIME,
            )
        )

    top = top_k(tally_raw_categories(records), 50)
    mapping = {}
    for raw, _count in top:
        target = expected_canonical_for(raw)
        from raven.model import normalize_category_name

        if CANONICAL_BY_NORM.get(normalize_category_name(raw)) is not None:
            mapping[raw] = target
    builder.add(
        build_canonicalize_prompt(top),
        {"canonical_categories": CANONICAL_CATEGORIES, "mapping": mapping},
    )

    for category in KEPT_CATEGORIES:
        builder.add(build_schema_prompt(category), _schema_response(SCHEMAS[category]))

    for c in CLIPS:
        canonical = expected_canonical_for(CATEGORIZE_RESPONSES[c.clip_id]["raw_category"])
        req = build_extraction_request(c, SCHEMAS[canonical], extract_template)
        builder.add(req, EXTRACTION_RESPONSES[c.clip_id])

    return builder.to_dict(), top


def write_manifest(path, clips=CLIPS):
    with open(path, "w", encoding="utf-8") as fh:
        for c in clips:
            fh.write(json.dumps(c.to_json(), ensure_ascii=False) + "\n")
    return path


GROUND_TRUTH = [
    {"clip_id": "clip-lincoln", "entity_type": "Person", "value": "Abraham Lincoln"},
    {"clip_id": "clip-lincoln", "entity_type": "Object", "value": "Train Car"},
    {"clip_id": "clip-lincoln", "entity_type": "Location", "value": "Appomattox Courthouse"},
    {"clip_id": "clip-cook-2", "entity_type": "Person", "value": "chef"},
    {"clip_id": "clip-travel-1", "entity_type": "Location", "value": "Tokyo"},
]

BASELINE_OUTPUTS = {
    "speech": [
        {"clip_id": "clip-lincoln", "entity_type": "Person", "value": "Abraham Lincoln; President Lincoln"},
        {"clip_id": "clip-lincoln", "entity_type": "Object", "value": "Train"},
    ],
    "ocr": [
        {"clip_id": "clip-lincoln", "entity_type": "Person", "value": "PRESIDENT LINCOLN"},
    ],
    "caption": [
        {"clip_id": "clip-lincoln", "entity_type": "Person", "value": "Abraham Lincoln"},
        {"clip_id": "clip-lincoln", "entity_type": "Object", "value": "Train Car"},
    ],
    "yolo": [
        {"clip_id": "clip-lincoln", "entity_type": "Person", "value": "Person"},
        {"clip_id": "clip-lincoln", "entity_type": "Object", "value": "Train"},
    ],
}


def write_eval_fixtures(dir_path):
    truth_path = dir_path / "truth.jsonl"
    with open(truth_path, "w", encoding="utf-8") as fh:
        for entry in GROUND_TRUTH:
            fh.write(json.dumps(entry) + "\n")
    method_paths = {}
    for method, rows in BASELINE_OUTPUTS.items():
        path = dir_path / f"method.{method}.jsonl"
        with open(path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps({"method": method, **row}) + "\n")
        method_paths[method] = path
    return truth_path, method_paths


def write_config(path, fixture_path, **overrides):
    config = {
        "provider_kind": "stub",
        "fixture_path": str(fixture_path),
        "fixed_time": FIXED_TIME,
    }
    config.update(overrides)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2)
    return path
