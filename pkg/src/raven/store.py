"""Append-only JSONL record store with derived inverted indexes.

Layout under the store root:
    streams/*.jsonl   append-only source of truth, one JSON object per line
    indexes/*.json    derived, always rebuildable from the streams
    locks/*.lock      single-writer coordination
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Callable, Iterator, Optional

from .errors import CorruptLine, MissingStream, StoreLocked
from .model import normalize_category_name, normalize_entity_value

STREAMS = ("manifest", "categorization", "entities", "failures", "drops")

INDEX_KEYS = ("canonical_category", "entity_type", "attribute_value_normalized")

# minimum fields each stream's records must carry, for verify()
_REQUIRED_FIELDS = {
    "manifest": ("clip_id", "media_uri"),
    "categorization": ("clip_id", "raw_category"),
    "entities": ("clip_id", "canonical_category", "schema_version", "entities"),
    "failures": ("clip_id", "error_kind", "message"),
    "drops": ("clip_id", "dropped", "reason"),
}


class RecordStore:
    def __init__(self, root):
        self.root = Path(root)
        (self.root / "streams").mkdir(parents=True, exist_ok=True)
        (self.root / "indexes").mkdir(exist_ok=True)
        (self.root / "locks").mkdir(exist_ok=True)
        self._offsets: dict[str, int] = {}

    def stream_path(self, stream: str) -> Path:
        return self.root / "streams" / f"{stream}.jsonl"

    def _next_offset(self, stream: str) -> int:
        if stream not in self._offsets:
            path = self.stream_path(stream)
            count = 0
            if path.exists():
                with open(path, "rb") as fh:
                    count = sum(1 for _ in fh)
            self._offsets[stream] = count
        return self._offsets[stream]

    def append(self, stream: str, record: dict) -> int:
        """Append one record; returns its 0-based line offset. Durable
        before return."""
        offset = self._next_offset(stream)
        line = json.dumps(record, ensure_ascii=False)
        with open(self.stream_path(stream), "a", encoding="utf-8", newline="\n") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        self._offsets[stream] = offset + 1
        return offset

    def append_many(self, stream: str, records: list[dict]) -> int:
        """Batch append with a single fsync; returns the first offset."""
        first = self._next_offset(stream)
        with open(self.stream_path(stream), "a", encoding="utf-8", newline="\n") as fh:
            for record in records:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        self._offsets[stream] = first + len(records)
        return first

    def scan(self, stream: str, predicate: Optional[Callable[[dict], bool]] = None) -> Iterator[dict]:
        path = self.stream_path(stream)
        if not path.exists():
            raise MissingStream(f"stream '{stream}' does not exist at {path}")
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorruptLine(stream, line_no, str(exc)) from exc
                if predicate is None or predicate(record):
                    yield record

    def count(self, stream: str) -> int:
        path = self.stream_path(stream)
        if not path.exists():
            return 0
        with open(path, "rb") as fh:
            return sum(1 for _ in fh)

    def truncate(self, stream: str):
        path = self.stream_path(stream)
        if path.exists():
            path.unlink()
        self._offsets[stream] = 0

    def verify(self) -> list[str]:
        """Every line in every stream must parse and carry its stream's
        required fields."""
        problems = []
        for stream in STREAMS:
            path = self.stream_path(stream)
            if not path.exists():
                continue
            required = _REQUIRED_FIELDS.get(stream, ())
            try:
                for i, record in enumerate(self.scan(stream)):
                    missing = [f for f in required if f not in record]
                    if missing:
                        problems.append(f"{stream}:{i}: missing fields {missing}")
            except CorruptLine as exc:
                problems.append(str(exc))
        return problems

    # --- locking ---------------------------------------------------------

    def _writer_lock_path(self) -> Path:
        return self.root / "locks" / "writer.lock"

    def acquire_writer(self):
        return _WriterLock(self._writer_lock_path())

    # --- indexes ---------------------------------------------------------

    def build_inverted_index(self, key: str) -> Path:
        """Build indexes/entities.{key}.json: key value -> sorted offsets.

        Rebuilding from the same stream is byte-identical.
        """
        if key not in INDEX_KEYS:
            raise ValueError(f"unknown index key '{key}'")
        if self._writer_lock_path().exists():
            raise StoreLocked("cannot build indexes while a writer is active")
        index: dict[str, list[int]] = {}

        def add(value: str, offset: int):
            if value:
                index.setdefault(value, []).append(offset)

        for offset, record in enumerate(self.scan("entities")):
            if key == "canonical_category":
                add(normalize_category_name(record.get("canonical_category", "")), offset)
            elif key == "entity_type":
                for ent in record.get("entities", []):
                    add(normalize_category_name(ent.get("entity_type", "")), offset)
            else:  # attribute_value_normalized
                for ent in record.get("entities", []):
                    for attr in ent.get("attributes", []):
                        add(normalize_entity_value(attr.get("value", "")), offset)

        out = {k: sorted(set(v)) for k, v in sorted(index.items())}
        path = self.root / "indexes" / f"entities.{key}.json"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(out, fh, ensure_ascii=False, indent=2, sort_keys=True)
            fh.write("\n")
        return path


class _WriterLock:
    def __init__(self, path: Path):
        self.path = path

    def __enter__(self):
        if self.path.exists():
            raise StoreLocked(f"writer lock already held: {self.path}")
        self.path.write_text(str(os.getpid()))
        return self

    def __exit__(self, *exc):
        if self.path.exists():
            self.path.unlink()
        return False
