import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pipeline_fixture import (  # noqa: E402
    CLIPS,
    build_pipeline_fixture,
    write_config,
    write_manifest,
)


@pytest.fixture
def pipeline_dir(tmp_path):
    """Manifest, stub fixture file, and config for a full pipeline run."""
    fixture, _top = build_pipeline_fixture()
    import json

    fixture_path = tmp_path / "fixture.json"
    fixture_path.write_text(json.dumps(fixture), encoding="utf-8")
    manifest_path = write_manifest(tmp_path / "manifest.jsonl")
    config_path = write_config(tmp_path / "config.json", fixture_path)
    return {
        "root": tmp_path,
        "fixture": fixture_path,
        "manifest": manifest_path,
        "config": config_path,
        "clips": CLIPS,
    }
