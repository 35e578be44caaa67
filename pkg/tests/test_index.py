import random

import pytest
from hypothesis import given, settings, strategies as st

from raven.errors import DimensionMismatch, IndexEmpty, ZeroVector
from raven.gateway import Gateway, StubProvider, trigram_embedding
from raven.index import (
    IndexEntry,
    SchemaIndex,
    build_index,
    cosine,
    load_index,
    retrieve,
    save_index,
)
from raven.model import CanonicalCatalog


def gateway():
    return Gateway(StubProvider({}))


def catalog_of(names, version=1):
    return CanonicalCatalog(
        version=version,
        canonical_categories=tuple(names),
        mapping={n: n for n in names},
        model_id="stub",
    )


def manifest_of(names):
    return {n: {"file": f"schemas/{n.lower()}.v1.json", "schema_version": 1} for n in names}


class TestCosine:
    def test_identity(self):
        v = [0.3, 0.4, 0.5]
        assert cosine(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        assert cosine([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_hand_computed(self):
        assert cosine([1, 2, 2], [2, 1, 2]) == pytest.approx(8 / 9, abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cosine([1.0], [1.0, 2.0])

    def test_zero_vector(self):
        with pytest.raises(ZeroVector):
            cosine([0.0, 0.0], [1.0, 0.0])

    def test_clamped(self):
        v = [1e-200, 1.0]
        assert -1.0 <= cosine(v, v) <= 1.0


class TestBuildIndex:
    def test_all_schemas_present(self):
        names = [f"Category {i}" for i in range(15)]
        index, warnings = build_index(gateway(), catalog_of(names), manifest_of(names))
        assert len(index.entries) == 15
        assert warnings == []
        for entry in index.entries:
            norm = sum(x * x for x in entry.embedding) ** 0.5
            assert abs(norm - 1.0) <= 1e-6

    def test_empty_catalog(self):
        with pytest.raises(IndexEmpty):
            build_index(gateway(), catalog_of([]), {})

    def test_missing_schema_excluded_with_warning(self):
        names = ["History", "Travel", "Music"]
        manifest = manifest_of(["History", "Music"])
        index, warnings = build_index(gateway(), catalog_of(names), manifest)
        assert len(index.entries) == 2
        assert len(warnings) == 1
        assert "Travel" in warnings[0]


def brute_force(gw, raw, index):
    qvec = gw.embed([raw])[0]
    best, best_sim = None, -2.0
    for entry in index.entries:
        sim = cosine(qvec, list(entry.embedding))
        if sim > best_sim:
            best, best_sim = entry, sim
    return best.canonical_category, best_sim


class TestRetrieve:
    def make_index(self, names):
        gw = gateway()
        index, _ = build_index(gw, catalog_of(names), manifest_of(names))
        return gw, index

    def test_exact_match_fast_path(self):
        gw, index = self.make_index(["History", "Travel"])
        result = retrieve(gw, "History", index)
        assert result.canonical_category == "History"
        assert result.similarity == 1.0
        assert not result.low_confidence

    def test_exact_match_normalized(self):
        gw, index = self.make_index(["How-To", "Travel"])
        result = retrieve(gw, "how to", index)
        assert result.canonical_category == "How-To"
        assert result.similarity == 1.0

    def test_argmax_equals_brute_force(self):
        gw, index = self.make_index(["History", "Cooking", "Travel"])
        result = retrieve(gw, "Historical documentaries", index)
        expected_cat, expected_sim = brute_force(gw, "Historical documentaries", index)
        assert result.canonical_category == expected_cat == "History"
        assert result.similarity == pytest.approx(expected_sim, abs=1e-12)

    def test_tie_breaks_by_catalog_order(self):
        gw = gateway()
        vec = tuple(trigram_embedding("zzz"))
        index = SchemaIndex(
            dimension=256,
            entries=(
                IndexEntry("First", vec, "schemas/first.v1.json"),
                IndexEntry("Second", vec, "schemas/second.v1.json"),
            ),
            catalog_version=1,
        )
        a = retrieve(gw, "zzzq", index)
        b = retrieve(gw, "zzzq", index)
        assert a.canonical_category == "First"
        assert a == b

    def test_low_confidence_flag(self):
        gw, index = self.make_index(["History"])
        result = retrieve(gw, "qqqq", index, min_similarity=0.99)
        assert result.low_confidence
        result2 = retrieve(gw, "qqqq", index, min_similarity=-1.0)
        assert not result2.low_confidence

    def test_empty_index(self):
        gw = gateway()
        index = SchemaIndex(dimension=256, entries=(), catalog_version=1)
        with pytest.raises(IndexEmpty):
            retrieve(gw, "x", index)

    def test_empty_query(self):
        gw, index = self.make_index(["History"])
        with pytest.raises(ValueError):
            retrieve(gw, "  ", index)

    @settings(max_examples=30, deadline=None)
    @given(st.data())
    def test_oracle_equivalence_randomized(self, data):
        rng = random.Random(data.draw(st.integers(0, 10**6)))
        names = [
            f"cat {rng.randrange(10**6)} {i}" for i in range(rng.randint(3, 12))
        ]
        gw, index = self.make_index(names)
        query = f"query {rng.randrange(10**6)}"
        result = retrieve(gw, query, index)
        expected_cat, expected_sim = brute_force(gw, query, index)
        assert result.canonical_category == expected_cat
        assert result.similarity == pytest.approx(expected_sim, abs=1e-12)


class TestPersistence:
    def test_roundtrip(self, tmp_path):
        gw, index = TestRetrieve().make_index(["History", "Travel"])
        save_index(index, tmp_path)
        loaded = load_index(tmp_path, 1)
        assert loaded == index
