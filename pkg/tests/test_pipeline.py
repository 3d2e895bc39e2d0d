from __future__ import annotations

import json
from pathlib import Path

import pytest

from refinery.pipeline import (DEFAULT_CONFIG, CorpusManifest, PipelineConfig,
                               classify_token_bucket, run_pipeline, validate_config)
from tests.conftest import make_record


class TestValidateConfig:
    def test_defaults_valid(self):
        result = validate_config("{}")
        assert result.ok
        assert result.config is not None
        assert result.config.raw["filter"]["max_lines"] == 10_000

    def test_near_threshold_out_of_range(self):
        result = validate_config(json.dumps({"dedup": {"near_threshold": 1.5}}))
        assert not result.ok
        assert any("dedup.near_threshold" in e and "(0, 1]" in e for e in result.errors)

    def test_unknown_downsample_language_warns_but_accepts(self):
        result = validate_config(json.dumps({"resample": {"downsample": {"klingon": 0.5}}}))
        assert result.ok
        assert any("klingon" in w for w in result.warnings)

    def test_all_errors_reported_at_once(self):
        bad = {
            "dedup": {"near_threshold": 2.0, "segment_threshold": -1},
            "filter": {"max_lines": 0},
            "quality": {"threshold": -5},
        }
        result = validate_config(json.dumps(bad))
        assert len(result.errors) >= 4
        paths = " ".join(result.errors)
        for expected in ("dedup.near_threshold", "dedup.segment_threshold",
                         "filter.max_lines", "quality.threshold"):
            assert expected in paths

    def test_malformed_json(self):
        result = validate_config("{nope")
        assert not result.ok

    def test_unknown_top_level_key_warns(self):
        result = validate_config(json.dumps({"obsolete_option": 1}))
        assert result.ok
        assert any("obsolete_option" in w for w in result.warnings)

    def test_config_hash_ignores_output_dir(self):
        a = validate_config(json.dumps({"output_dir": "x"})).config
        b = validate_config(json.dumps({"output_dir": "y"})).config
        assert a.config_hash() == b.config_hash()
        c = validate_config(json.dumps({"seed": 5})).config
        assert a.config_hash() != c.config_hash()


def build_config(roots: list[Path], out_dir: Path, **overrides) -> PipelineConfig:
    raw = {
        "roots": [str(r) for r in roots],
        "output_dir": str(out_dir),
        "tokenstats": {"vocab_size": 300, "train_bytes": 50_000, "sample_files": 50},
    }
    for key, value in overrides.items():
        raw[key] = value
    result = validate_config(json.dumps(raw))
    assert result.ok, result.errors
    return result.config


FIXTURE_FUNCTIONS = [
    ("parse_headers", "Split raw header lines into a name/value mapping.",
     "entries = raw.strip().split(chr(10))\n    table = dict(e.split(': ', 1) for e in entries)\n    return table"),
    ("merge_windows", "Coalesce overlapping intervals into disjoint spans.",
     "ordered = sorted(spans)\n    stack = [ordered[0]]\n    return stack + ordered"),
    ("score_tokens", "Weight query tokens by inverse document frequency.",
     "weights = {tok: registry.idf(tok) for tok in query}\n    ranked = sorted(weights)\n    return ranked"),
    ("flush_buffer", "Write buffered rows to the sink and reset state.",
     "pending = list(buffer)\n    sink.write_rows(pending)\n    buffer.clear()"),
    ("expand_macro", "Substitute macro arguments into the template body.",
     "bound = template.format_map(arguments)\n    checked = validate(bound)\n    return checked"),
    ("trim_history", "Drop history entries older than the retention floor.",
     "cutoff = now() - retention\n    recent = [h for h in history if h.ts > cutoff]\n    return recent"),
]


def write_fixture_corpus(root: Path) -> None:
    root.mkdir(parents=True, exist_ok=True)
    # Normal files, each with genuinely distinct content.
    for i, (name, doc, body) in enumerate(FIXTURE_FUNCTIONS):
        (root / f"mod_{i}.py").write_text(
            f'"""Support module for {name}."""\n\n'
            f"def {name}(arg):\n"
            f'    """{doc}"""\n'
            f"    {body}\n",
            encoding="utf-8",
        )
    # One oversize file (too many lines).
    (root / "huge.py").write_text("x = 1\n" * 10_001, encoding="utf-8")
    # Two exact duplicates of mod_0 content.
    duplicate = (root / "mod_0.py").read_text(encoding="utf-8")
    (root / "za_copy1.py").write_text(duplicate, encoding="utf-8")
    (root / "zb_copy2.py").write_text(duplicate, encoding="utf-8")
    # A large file and a near duplicate of it: one identifier renamed.
    large = "\n".join(f"value_{i} = input_{i} * {i} + offset_{i}" for i in range(300))
    (root / "large.py").write_text(large + "\n", encoding="utf-8")
    (root / "zc_near.py").write_text(
        large.replace("value_150", "renamed_150") + "\n", encoding="utf-8")


class TestRunPipeline:
    def test_empty_corpus_all_zero_manifest(self, tmp_path):
        root = tmp_path / "corpus"
        root.mkdir()
        config = build_config([root], tmp_path / "out")
        manifest = run_pipeline(config)
        assert manifest.conservation_violations() == []
        ingest = manifest.entry("ingest")
        assert ingest.input_count == 0 and ingest.kept_count == 0
        assert (tmp_path / "out" / "manifest.json").exists()

    def test_fixture_drop_ledger(self, tmp_path):
        root = tmp_path / "corpus"
        write_fixture_corpus(root)
        config = build_config([root], tmp_path / "out")
        manifest = run_pipeline(config)
        assert manifest.conservation_violations() == []
        assert manifest.entry("ingest").kept_count == 11
        assert manifest.entry("filter").drop_counts == {"max_lines": 1}
        assert manifest.entry("dedup_exact").drop_counts == {"exact_duplicate": 2}
        assert manifest.entry("dedup_near").drop_counts == {"near_duplicate": 1}
        assert manifest.entry("quality").kept_count == 7
        assert manifest.entry("extract").kept_count == 6
        assert manifest.entry("sft").kept_count == manifest.entry("extract").kept_count

    def test_reruns_byte_identical(self, tmp_path):
        root = tmp_path / "corpus"
        write_fixture_corpus(root)
        config_a = build_config([root], tmp_path / "out_a")
        config_b = build_config([root], tmp_path / "out_b")
        run_pipeline(config_a)
        run_pipeline(config_b)
        manifest_a = (tmp_path / "out_a" / "manifest.json").read_bytes()
        manifest_b = (tmp_path / "out_b" / "manifest.json").read_bytes()
        assert manifest_a == manifest_b
        for shard in sorted((tmp_path / "out_a").rglob("*.jsonl")):
            twin = tmp_path / "out_b" / shard.relative_to(tmp_path / "out_a")
            assert shard.read_bytes() == twin.read_bytes(), shard.name

    def test_kill_and_resume_identical(self, tmp_path):
        root = tmp_path / "corpus"
        write_fixture_corpus(root)
        config_full = build_config([root], tmp_path / "full")
        full = run_pipeline(config_full)

        config_killed = build_config([root], tmp_path / "killed")
        partial = run_pipeline(config_killed, stop_after="dedup_near")
        assert partial.entry("quality") is None
        resumed = run_pipeline(config_killed, resume=True)
        assert resumed.entry("quality") is not None
        full_bytes = (tmp_path / "full" / "manifest.json").read_bytes()
        resumed_bytes = (tmp_path / "killed" / "manifest.json").read_bytes()
        assert full_bytes == resumed_bytes

    def test_resume_skips_completed_stages(self, tmp_path, monkeypatch):
        root = tmp_path / "corpus"
        write_fixture_corpus(root)
        config = build_config([root], tmp_path / "out")
        run_pipeline(config)
        import refinery.pipeline as pipeline_mod

        def boom(*args, **kwargs):
            raise AssertionError("ingest must not rerun on resume")

        monkeypatch.setattr(pipeline_mod, "_stage_ingest", boom)
        manifest = run_pipeline(config, resume=True)
        assert manifest.conservation_violations() == []

    def test_resume_with_damaged_stage_recomputes(self, tmp_path):
        root = tmp_path / "corpus"
        write_fixture_corpus(root)
        config = build_config([root], tmp_path / "out")
        run_pipeline(config)
        # Corrupt one quality output; resume must rebuild from there.
        target = tmp_path / "out" / "05_quality" / "report.jsonl"
        target.write_text("", encoding="utf-8")
        manifest = run_pipeline(config, resume=True)
        assert manifest.conservation_violations() == []
        assert target.stat().st_size > 0

    def test_stage_toggles_skip_stages(self, tmp_path):
        root = tmp_path / "corpus"
        write_fixture_corpus(root)
        config = build_config(
            [root], tmp_path / "out",
            stages={"dedup_segment": False, "tokenstats": False, "portrait": False,
                    "extract": False, "sft": False},
        )
        manifest = run_pipeline(config)
        names = [s.name for s in manifest.stages]
        assert "dedup_segment" not in names and "tokenstats" not in names
        assert manifest.conservation_violations() == []
        resample_entry = manifest.entry("resample")
        assert resample_entry.input_from == "quality"

    def test_manifest_round_trip(self, tmp_path):
        root = tmp_path / "corpus"
        write_fixture_corpus(root)
        config = build_config([root], tmp_path / "out")
        manifest = run_pipeline(config)
        loaded = CorpusManifest.load(tmp_path / "out")
        assert loaded.to_json() == manifest.to_json()

    def test_chain_linkage_recorded(self, tmp_path):
        root = tmp_path / "corpus"
        write_fixture_corpus(root)
        config = build_config([root], tmp_path / "out")
        manifest = run_pipeline(config)
        by_name = {s.name: s for s in manifest.stages}
        assert by_name["filter"].input_from == "ingest"
        assert by_name["dedup_exact"].input_from == "filter"
        assert by_name["quality"].input_from == "dedup_segment"
        assert by_name["resample"].input_from == "quality"
        for stage in manifest.stages:
            if stage.input_from:
                assert stage.input_count == by_name[stage.input_from].kept_count


def test_classify_token_bucket():
    assert classify_token_bucket(make_record("int x;\n", language="c")) == "code"
    assert classify_token_bucket(
        make_record("Plain English documentation.\n", language="markdown")) == "english"
    assert classify_token_bucket(
        make_record("这是一个中文文档，解释代码的行为。\n", language="markdown")) == "chinese"
