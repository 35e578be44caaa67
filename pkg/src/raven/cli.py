"""Command-line orchestrator: one resumable command per pipeline stage.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 provider
failure budget exceeded.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import categorize as stage_categorize
from . import evalreport as ev
from . import extract as stage_extract
from . import figures
from . import schema_stage
from .config import build_gateway, load_config
from .errors import (
    CatalogEmpty,
    ConfigError,
    CorruptLine,
    IndexEmpty,
    ManifestError,
    MissingStream,
    ProviderUnreachable,
    RateLimited,
    RavenError,
    UnknownClip,
)
from .index import build_index, load_index, save_index
from .model import ClipManifestEntry, EntityRecord, load_manifest
from .store import RecordStore

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PROVIDER = 3


class ClobberError(RavenError):
    """Output already exists and --overwrite was not given."""


class FailureBudgetExceeded(RavenError):
    pass


def _refuse_or_truncate(store: RecordStore, streams: list[str], overwrite: bool):
    existing = [s for s in streams if store.count(s) > 0]
    if existing and not overwrite:
        raise ClobberError(
            f"streams already contain data: {existing}; pass --overwrite to redo"
        )
    if overwrite:
        for s in streams:
            store.truncate(s)


def _check_failure_rate(processed: int, failed: int, max_rate: float):
    total = processed + failed
    if total > 0 and failed / total > max_rate:
        raise FailureBudgetExceeded(
            f"{failed}/{total} clips failed, exceeding --max-failure-rate {max_rate}"
        )


@click.group()
def cli():
    """Structure a video collection: infer categories, generate entity
    schemas, and extract schema-conformant entities."""


@cli.command("categorize")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--store", "store_root", required=True, type=click.Path())
@click.option("--overwrite", is_flag=True)
@click.option("--max-failure-rate", type=float, default=None)
@click.option("--generic-entities/--no-generic-entities", default=None)
@click.option("--template", "template_path", type=click.Path(exists=True), default=None)
def cmd_categorize(config_path, manifest_path, store_root, overwrite,
                   max_failure_rate, generic_entities, template_path):
    """Run per-clip category inference over a manifest."""
    config = load_config(config_path)
    gateway = build_gateway(config, base_dir=Path(config_path).parent)
    clips = load_manifest(manifest_path)
    store = RecordStore(store_root)
    _refuse_or_truncate(store, ["manifest", "categorization", "failures"], overwrite)
    if template_path:
        template = Path(template_path).read_text(encoding="utf-8")
    elif config.categorize_template:
        template = Path(config.categorize_template).read_text(encoding="utf-8")
    else:
        template = stage_categorize.default_template("categorize")
    with store.acquire_writer():
        store.append_many("manifest", [c.to_json() for c in clips])
    use_generic = config.generic_entities if generic_entities is None else generic_entities
    summary = stage_categorize.run_categorize(
        gateway, clips, store, template,
        policy=config.retry_policy,
        generic_entities=use_generic,
        max_in_flight=config.max_in_flight,
        clock=config.clock(),
    )
    click.echo(
        f"categorize: processed={summary.processed} failed={summary.failed} "
        f"distinct_raw_categories={summary.tally_size}"
    )
    _check_failure_rate(
        summary.processed, summary.failed,
        config.max_failure_rate if max_failure_rate is None else max_failure_rate,
    )


@cli.command("canonicalize")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--store", "store_root", required=True, type=click.Path())
@click.option("--k", type=int, default=None, help="How many top raw names to send.")
@click.option("--overwrite", is_flag=True)
def cmd_canonicalize(config_path, store_root, k, overwrite):
    """Consolidate raw category names into a canonical catalog."""
    config = load_config(config_path)
    gateway = build_gateway(config, base_dir=Path(config_path).parent)
    store = RecordStore(store_root)
    if store.count("categorization") == 0:
        raise MissingStream("no categorization records; run categorize first")
    from .model import RawCategorization

    records = (RawCategorization.from_json(r) for r in store.scan("categorization"))
    tally = stage_categorize.tally_raw_categories(records)
    top = stage_categorize.top_k(tally, k or config.k_top_categories)
    existing = schema_stage.latest_catalog_version(store.root)
    if existing and not overwrite:
        raise ClobberError(
            f"catalog.v{existing}.json already exists; pass --overwrite to redo"
        )
    version = existing if existing else 1
    catalog = schema_stage.canonicalize(gateway, top, config.retry_policy, version)
    path = schema_stage.persist_catalog(catalog, store.root)
    click.echo(
        f"canonicalize: raw_names={len(top)} canonical={len(catalog.canonical_categories)} "
        f"-> {path}"
    )


@cli.command("genschema")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--store", "store_root", required=True, type=click.Path())
@click.option("--overwrite", is_flag=True)
def cmd_genschema(config_path, store_root, overwrite):
    """Generate per-category entity schemas and the retrieval index."""
    config = load_config(config_path)
    gateway = build_gateway(config, base_dir=Path(config_path).parent)
    store = RecordStore(store_root)
    if schema_stage.latest_catalog_version(store.root) == 0:
        raise MissingStream("no catalog found; run canonicalize first")
    catalog = schema_stage.load_catalog(store.root)
    manifest_path = store.root / "schemas" / "manifest.json"
    if manifest_path.exists() and not overwrite:
        raise ClobberError("schemas/manifest.json already exists; pass --overwrite to redo")
    schemas, failed = schema_stage.generate_schemas(
        gateway, catalog, config.retry_policy,
        schema_version=catalog.version,
        max_in_flight=config.max_in_flight,
    )
    schema_stage.persist_schemas(schemas, store.root)
    for category, message in failed:
        click.echo(f"genschema: FAILED {category}: {message}", err=True)
    manifest = schema_stage.load_schemas_manifest(store.root)
    index, warnings = build_index(gateway, catalog, manifest)
    for w in warnings:
        click.echo(f"genschema: {w}", err=True)
    save_index(index, store.root)
    click.echo(
        f"genschema: schemas={len(schemas)} failed={len(failed)} "
        f"index_entries={len(index.entries)}"
    )
    if schemas == [] and failed:
        raise FailureBudgetExceeded("every category failed schema generation")


@cli.command("extract")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--store", "store_root", required=True, type=click.Path())
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), default=None,
              help="Override the stored manifest stream.")
@click.option("--extra-manifest", type=click.Path(exists=True), default=None,
              help="Additional clips not seen by categorize (pure retrieval path).")
@click.option("--overwrite", is_flag=True)
@click.option("--max-failure-rate", type=float, default=None)
@click.option("--min-similarity", type=float, default=None)
@click.option("--no-text-sidechannel", is_flag=True)
@click.option("--template", "template_path", type=click.Path(exists=True), default=None)
def cmd_extract(config_path, store_root, manifest_path, extra_manifest, overwrite,
                max_failure_rate, min_similarity, no_text_sidechannel, template_path):
    """Schema-guided entity extraction for every clip."""
    config = load_config(config_path)
    gateway = build_gateway(config, base_dir=Path(config_path).parent)
    store = RecordStore(store_root)
    if schema_stage.latest_catalog_version(store.root) == 0:
        raise MissingStream("no catalog found; run canonicalize first")
    catalog = schema_stage.load_catalog(store.root)
    if not (store.root / "schemas" / "manifest.json").exists():
        raise MissingStream("no schemas found; run genschema first")
    index = load_index(store.root, catalog.version)
    if manifest_path:
        clips = load_manifest(manifest_path)
    else:
        if store.count("manifest") == 0:
            raise MissingStream("no manifest stream; run categorize first or pass --manifest")
        clips = [ClipManifestEntry.from_json(r) for r in store.scan("manifest")]
    if extra_manifest:
        known = {c.clip_id for c in clips}
        for clip in load_manifest(extra_manifest):
            if clip.clip_id in known:
                raise ManifestError(f"extra manifest repeats clip_id '{clip.clip_id}'")
            clips.append(clip)
    raw_categories = {}
    if store.count("categorization") > 0:
        for r in store.scan("categorization"):
            raw_categories[r["clip_id"]] = r["raw_category"]
    _refuse_or_truncate(store, ["entities", "drops"], overwrite)
    template = (
        Path(template_path).read_text(encoding="utf-8")
        if template_path
        else Path(config.extract_template).read_text(encoding="utf-8")
        if config.extract_template
        else stage_categorize.default_template("extract")
    )
    summary = stage_extract.run_extract(
        gateway, clips, raw_categories, catalog, index, store.root, store, template,
        policy=config.retry_policy,
        min_similarity=config.min_similarity if min_similarity is None else min_similarity,
        max_examples_inline=config.max_examples_inline,
        text_sidechannel=config.text_sidechannel and not no_text_sidechannel,
        max_in_flight=config.max_in_flight,
        clock=config.clock(),
    )
    for key in ("canonical_category", "entity_type", "attribute_value_normalized"):
        store.build_inverted_index(key)
    click.echo(
        f"extract: processed={summary.processed} failed={summary.failed} "
        f"dropped_members={summary.dropped_members}"
    )
    _check_failure_rate(
        summary.processed, summary.failed,
        config.max_failure_rate if max_failure_rate is None else max_failure_rate,
    )


def _parse_method_options(method_options) -> dict[str, str]:
    out = {}
    for item in method_options:
        if "=" not in item:
            raise click.UsageError(f"--method expects NAME=PATH, got {item!r}")
        name, path = item.split("=", 1)
        out[name] = path
    return out


def _load_all_outputs(store: RecordStore, method_files: dict[str, str]) -> list[ev.MethodOutput]:
    outputs: list[ev.MethodOutput] = []
    for name, path in method_files.items():
        outputs.extend(ev.load_method_outputs(path, method=name))
    if "ours" not in method_files:
        if store.count("entities") == 0:
            raise MissingStream(
                "no entities stream and no --method ours=...; run extract first"
            )
        records = (EntityRecord.from_json(r) for r in store.scan("entities"))
        outputs.extend(ev.our_method_outputs(records))
    return outputs


@cli.command("eval")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--store", "store_root", required=True, type=click.Path())
@click.option("--truth", "truth_path", required=True, type=click.Path(exists=True))
@click.option("--method", "method_options", multiple=True,
              help="Baseline outputs as NAME=PATH (JSONL of method outputs).")
@click.option("--match-jaccard", type=float, default=ev.DEFAULT_JACCARD)
@click.option("--match-levenshtein", type=float, default=ev.DEFAULT_LEVENSHTEIN)
@click.option("--overwrite", is_flag=True)
def cmd_eval(config_path, store_root, truth_path, method_options,
             match_jaccard, match_levenshtein, overwrite):
    """Compute entity recall per method against ground truth."""
    store = RecordStore(store_root)
    reports_dir = store.root / "reports"
    report_path = reports_dir / "report.json"
    if report_path.exists() and not overwrite:
        raise ClobberError("reports/report.json already exists; pass --overwrite to redo")
    method_files = _parse_method_options(method_options)
    truth = ev.load_ground_truth(truth_path)
    outputs = _load_all_outputs(store, method_files)
    methods = ["ours"] + sorted(m for m in method_files if m != "ours")
    report = ev.build_eval_report(
        outputs, truth,
        methods=methods,
        jaccard_threshold=match_jaccard,
        levenshtein_threshold=match_levenshtein,
        metadata={
            "truth_entries": len(truth),
            "match_jaccard": match_jaccard,
            "match_levenshtein": match_levenshtein,
        },
    )
    reports_dir.mkdir(exist_ok=True)
    with open(report_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.to_json(), fh, ensure_ascii=False, indent=2)
        fh.write("\n")
    (reports_dir / "recall.csv").write_text(report.recall_csv(), encoding="utf-8")
    for m in methods:
        cells = " ".join(
            f"{t}={_fmt_recall(report.cells[(m, t)]['recall'])}" for t in report.entity_types
        )
        click.echo(f"eval: {m}: {cells}")


def _fmt_recall(value):
    return "n/a" if value is None else f"{value:.3f}"


@cli.command("report")
@click.option("--store", "store_root", required=True, type=click.Path())
@click.option("--method", "method_options", multiple=True,
              help="Baseline outputs as NAME=PATH, used for the case study.")
@click.option("--case-clip", "case_clips", multiple=True,
              help="Emit a case-study table for this clip id.")
@click.option("--top-n", type=int, default=10)
@click.option("--overwrite", is_flag=True)
def cmd_report(store_root, method_options, case_clips, top_n, overwrite):
    """Emit distribution CSVs, figures, and optional case-study tables."""
    store = RecordStore(store_root)
    if store.count("entities") == 0:
        raise MissingStream("no entities stream; run extract first")
    records = [EntityRecord.from_json(r) for r in store.scan("entities")]
    reports_dir = store.root / "reports"
    dist_dir = reports_dir / "distributions"
    fig_dir = reports_dir / "figures"
    if dist_dir.exists() and any(dist_dir.iterdir()) and not overwrite:
        raise ClobberError("reports/distributions already exists; pass --overwrite to redo")
    dist_dir.mkdir(parents=True, exist_ok=True)
    fig_dir.mkdir(parents=True, exist_ok=True)

    cat_dist = ev.category_distribution(records)
    _write_dist_csv(dist_dir / "categories.csv", "canonical_category", cat_dist)
    figures.plot_histogram(cat_dist, "Canonical category distribution",
                           fig_dir / "categories.png")

    type_dist = ev.entity_type_distribution(records)
    _write_dist_csv(dist_dir / "entity_types.csv", "entity_type", type_dist)
    figures.plot_histogram(type_dist, "Entity type distribution",
                           fig_dir / "entity_types.png")

    for etype, _count in type_dist:
        attr_dist = ev.attribute_distribution(records, etype)
        slug = etype.lower().replace(" ", "-")
        _write_dist_csv(dist_dir / f"attributes.{slug}.csv", "attribute", attr_dist)
        figures.plot_histogram(attr_dist, f"Attributes of {etype}",
                               fig_dir / f"attributes.{slug}.png")

    report_path = reports_dir / "report.json"
    if report_path.exists():
        with open(report_path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        report = ev.EvalReport(
            methods=obj["methods"],
            entity_types=obj["entity_types"],
            cells={
                (r["method"], r["entity_type"]): {
                    "recall": r["recall"], "matched": r["matched"], "total": r["total"]
                }
                for r in obj["results"]
            },
            metadata=obj.get("metadata", {}),
        )
        figures.plot_recall(report, fig_dir / "recall.png")

    if case_clips:
        method_files = _parse_method_options(method_options)
        outputs_by_method = {
            name: ev.load_method_outputs(path, method=name)
            for name, path in method_files.items()
        }
        manifest = schema_stage.load_schemas_manifest(store.root)
        case_dir = reports_dir / "case_study"
        case_dir.mkdir(exist_ok=True)
        by_clip = {r.clip_id: r for r in records}
        for clip_id in case_clips:
            record = by_clip.get(clip_id)
            if record is None:
                raise UnknownClip(f"no extracted record for clip '{clip_id}'")
            entry = manifest.get(record.canonical_category)
            if entry is None:
                raise MissingStream(
                    f"no schema for category '{record.canonical_category}'"
                )
            schema = schema_stage.load_schema(store.root, entry)
            table = ev.case_study(
                clip_id, outputs_by_method, record, schema,
                methods=list(method_files) or list(ev.DEFAULT_METHODS[1:]),
            )
            (case_dir / f"{clip_id}.csv").write_text(table.to_csv(), encoding="utf-8")
            (case_dir / f"{clip_id}.txt").write_text(table.to_text(), encoding="utf-8")
    click.echo(f"report: wrote {reports_dir}")


def _write_dist_csv(path, key_name, pairs):
    import csv as _csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh, lineterminator="\r\n")
        writer.writerow([key_name, "count"])
        for key, count in pairs:
            writer.writerow([key, count])


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        return EXIT_USAGE
    except (ConfigError, ClobberError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_USAGE
    except (ManifestError, MissingStream, CorruptLine, CatalogEmpty,
            IndexEmpty, UnknownClip) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA
    except (FailureBudgetExceeded, ProviderUnreachable, RateLimited) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_PROVIDER
    except RavenError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
