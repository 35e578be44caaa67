import json

import pytest
from hypothesis import given, strategies as st

from raven.errors import ManifestError
from raven.model import (
    AttributeDefinition,
    EntityDefinition,
    EntitySchema,
    load_manifest,
    normalize_category_name,
    normalize_entity_value,
    validate_schema,
)


class TestNormalization:
    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("How-To", "how to"),
            ("history", "history"),
            ("  Travel & Events!! ", "travel and events"),
            ("PRESIDENT LINCOLN", "president lincoln"),
            ("knife", "knife"),
            ("Appomattox  Courthouse, Virginia", "appomattox courthouse virginia"),
            ("", ""),
            ("a_b", "a b"),
        ],
    )
    def test_examples(self, raw, expected):
        assert normalize_category_name(raw) == expected

    def test_entity_value_same_pipeline(self):
        assert normalize_entity_value("How-To") == normalize_category_name("How-To")

    @given(st.text(max_size=60))
    def test_idempotent(self, s):
        once = normalize_category_name(s)
        assert normalize_category_name(once) == once

    @given(st.text(max_size=60))
    def test_entity_value_idempotent(self, s):
        once = normalize_entity_value(s)
        assert normalize_entity_value(once) == once


def history_schema():
    return EntitySchema(
        category="History",
        schema_version=1,
        entities=(
            EntityDefinition(
                "Figure",
                (AttributeDefinition("Name", "person's name", ("neil armstrong",)),),
            ),
        ),
    )


class TestValidateSchema:
    def test_valid(self):
        report = validate_schema(history_schema())
        assert report.ok
        assert report.violations == ()

    def test_empty_entities(self):
        report = validate_schema(EntitySchema("History", 1, ()))
        assert not report.ok
        assert "entities empty" in report.violations

    def test_missing_examples_names_path(self):
        schema = EntitySchema(
            "History",
            1,
            (EntityDefinition("Figure", (AttributeDefinition("Name", "desc", ()),)),),
        )
        report = validate_schema(schema)
        assert not report.ok
        assert any("Figure.Name" in v for v in report.violations)

    def test_duplicate_entity_names(self):
        ent = EntityDefinition(
            "Figure", (AttributeDefinition("Name", "desc", ("x",)),)
        )
        report = validate_schema(EntitySchema("History", 1, (ent, ent)))
        assert any("duplicate entity name" in v for v in report.violations)

    def test_duplicate_attribute_names(self):
        attr = AttributeDefinition("Name", "desc", ("x",))
        schema = EntitySchema(
            "History", 1, (EntityDefinition("Figure", (attr, attr)),)
        )
        report = validate_schema(schema)
        assert any("duplicate attribute name" in v for v in report.violations)

    def test_empty_description(self):
        schema = EntitySchema(
            "History",
            1,
            (EntityDefinition("Figure", (AttributeDefinition("Name", "  ", ("x",)),)),),
        )
        assert any("empty description" in v for v in validate_schema(schema).violations)

    def test_valid_schema_roundtrips(self):
        schema = history_schema()
        assert EntitySchema.from_json(json.loads(json.dumps(schema.to_json()))) == schema


class TestManifest:
    def test_load(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text(
            '{"clip_id": "a", "media_uri": "vid://a", "duration_s": 9.5}\n'
            '{"clip_id": "b", "media_uri": "vid://b"}\n'
        )
        entries = load_manifest(path)
        assert [e.clip_id for e in entries] == ["a", "b"]
        assert entries[0].duration_s == 9.5

    def test_duplicate_clip_id(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text(
            '{"clip_id": "a", "media_uri": "vid://a"}\n'
            '{"clip_id": "a", "media_uri": "vid://a2"}\n'
        )
        with pytest.raises(ManifestError, match="duplicate clip_id 'a'"):
            load_manifest(path)

    def test_negative_duration(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text('{"clip_id": "a", "media_uri": "vid://a", "duration_s": -1}\n')
        with pytest.raises(ManifestError, match="negative duration"):
            load_manifest(path)
