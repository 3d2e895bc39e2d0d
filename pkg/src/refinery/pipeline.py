"""Staged pipeline orchestration with a deterministic manifest and resume.

Stage order: ingest -> filter/scrub -> dedup (exact, near, segment) ->
quality gate -> extract -> sft formatting, then resample on the pretrain
stream and tokenstats/portrait reports on the result. Every stage writes its
JSONL outputs and manifest entry before the next starts; identical config
and corpus give byte-identical stage outputs and manifest. Wall-clock
timings go to a sibling timings.json so the manifest itself stays
reproducible.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator

from . import dedup as dedup_mod
from . import quality as quality_mod
from .extract import ParseFailure, extract_pairs, supported_language
from .filters import FilterRuleSet, apply_file_filters, scrub_secrets
from .ingest import IngestConfig, ScanDrop, scan_corpus
from .portrait import build_portrait, write_portrait
from .records import (DropReason, FileRecord, dump_json_line, iter_jsonl,
                      read_records, write_jsonl)
from .resample import (LanguageDistribution, ResamplePolicy, compute_distribution,
                       render_distribution_table, resample, write_distribution)
from .sftformat import (DEFAULT_ROLE_NAMES, DEFAULT_SYSTEM_PROMPT, from_json_record,
                        make_sample, pair_to_record)
from .tokenstats import BpeVocab, CompressionReport, corpus_compression_report, train_bpe

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
TIMINGS_NAME = "timings.json"
DEFAULT_SHARD_BYTES = 256 * 1024 * 1024

STAGE_ORDER = (
    "ingest", "filter", "dedup_exact", "dedup_near", "dedup_segment",
    "quality", "extract", "sft", "resample", "tokenstats", "portrait",
)
# Stages whose output is the record stream (chain-count invariant applies).
RECORD_STAGES = ("ingest", "filter", "dedup_exact", "dedup_near",
                 "dedup_segment", "quality", "resample")

DEFAULT_CONFIG: dict[str, Any] = {
    "roots": [],
    "output_dir": "refinery-out",
    "seed": 0,
    "include_other": False,
    "lossy_decode": False,
    "shard_bytes": DEFAULT_SHARD_BYTES,
    "stages": {name: True for name in STAGE_ORDER if name != "ingest"},
    "filter": {
        "max_lines": 10_000,
        "max_bytes": 1_000_000,
        "max_avg_line_len": 100.0,
        "min_alnum_ratio": 0.40,
        "drop_on_secret": False,
    },
    "dedup": {
        "near_threshold": dedup_mod.DEFAULT_NEAR_THRESHOLD,
        "segment_threshold": dedup_mod.DEFAULT_SEGMENT_THRESHOLD,
        "shingle_k": dedup_mod.DEFAULT_SHINGLE_K,
    },
    "quality": {
        "threshold": quality_mod.DEFAULT_QUALITY_THRESHOLD,
        "strict_syntax": False,
    },
    "resample": {
        "min_proportion": 0.001,
        "downsample": {"html": 0.25, "css": 0.25, "json": 0.25},
    },
    "tokenstats": {
        "vocab_size": 512,
        "train_bytes": 2_000_000,
        "sample_files": 500,
    },
    "sft": {
        "role_names": dict(DEFAULT_ROLE_NAMES),
        "include_end_marker": True,
        "system_prompt": DEFAULT_SYSTEM_PROMPT,
    },
}


@dataclass
class PipelineConfig:
    raw: dict[str, Any]

    @property
    def roots(self) -> list[str]:
        return self.raw["roots"]

    @property
    def output_dir(self) -> Path:
        return Path(self.raw["output_dir"])

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def shard_bytes(self) -> int:
        return self.raw["shard_bytes"]

    def stage_enabled(self, name: str) -> bool:
        if name == "ingest":
            return True
        return bool(self.raw["stages"].get(name, True))

    def ingest_config(self) -> IngestConfig:
        return IngestConfig(include_other=self.raw["include_other"],
                            lossy_decode=self.raw["lossy_decode"])

    def filter_rules(self) -> FilterRuleSet:
        f = self.raw["filter"]
        return FilterRuleSet(
            max_lines=f["max_lines"], max_bytes=f["max_bytes"],
            max_avg_line_len=f["max_avg_line_len"],
            min_alnum_ratio=f["min_alnum_ratio"],
            drop_on_secret=f["drop_on_secret"],
        )

    def resample_policy(self) -> ResamplePolicy:
        r = self.raw["resample"]
        return ResamplePolicy(min_proportion=r["min_proportion"],
                              downsample=dict(r["downsample"]), seed=self.seed)

    def config_hash(self) -> str:
        """Hash of the curation semantics; the output location is excluded so
        the same run in two directories yields identical manifests."""
        significant = {k: v for k, v in self.raw.items() if k != "output_dir"}
        canonical = json.dumps(significant, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class ValidationResult:
    config: PipelineConfig | None
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def _deep_merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            merged[key] = _deep_merge(base[key], value)
        else:
            merged[key] = value
    return merged


def validate_config(raw_text: str) -> ValidationResult:
    """Parse and validate a JSON config; every problem reported at once with
    its field path. Unknown keys and unknown downsample languages warn but
    are accepted."""
    errors: list[str] = []
    warnings: list[str] = []
    try:
        user = json.loads(raw_text) if raw_text.strip() else {}
    except json.JSONDecodeError as exc:
        return ValidationResult(None, [f"config is not valid JSON: {exc}"])
    if not isinstance(user, dict):
        return ValidationResult(None, ["config must be a JSON object"])

    for key in user:
        if key not in DEFAULT_CONFIG:
            warnings.append(f"{key}: unknown key, ignored")
    merged = _deep_merge(DEFAULT_CONFIG, user)

    def check(cond: bool, path: str, message: str) -> None:
        if not cond:
            errors.append(f"{path}: {message}")

    check(isinstance(merged["roots"], list)
          and all(isinstance(r, str) for r in merged["roots"]),
          "roots", "must be a list of paths")
    check(isinstance(merged["output_dir"], str) and merged["output_dir"] != "",
          "output_dir", "must be a non-empty path")
    check(isinstance(merged["seed"], int), "seed", "must be an integer")
    check(isinstance(merged["shard_bytes"], int) and merged["shard_bytes"] >= 65536,
          "shard_bytes", "must be an integer >= 65536")
    check(isinstance(merged["include_other"], bool), "include_other", "must be a boolean")
    check(isinstance(merged["lossy_decode"], bool), "lossy_decode", "must be a boolean")

    stages = merged["stages"]
    if isinstance(stages, dict):
        for name in stages:
            if name not in STAGE_ORDER or name == "ingest":
                warnings.append(f"stages.{name}: unknown stage toggle, ignored")
    else:
        errors.append("stages: must be an object of stage -> bool")

    f = merged["filter"]
    for key in ("max_lines", "max_bytes"):
        check(isinstance(f.get(key), int) and f.get(key, 0) > 0,
              f"filter.{key}", "must be a positive integer")
    check(isinstance(f.get("max_avg_line_len"), (int, float)) and f.get("max_avg_line_len", 0) > 0,
          "filter.max_avg_line_len", "must be positive")
    ratio = f.get("min_alnum_ratio")
    check(isinstance(ratio, (int, float)) and 0 < ratio <= 1,
          "filter.min_alnum_ratio", "must be in (0, 1]")

    d = merged["dedup"]
    for key in ("near_threshold", "segment_threshold"):
        value = d.get(key)
        check(isinstance(value, (int, float)) and 0 < value <= 1,
              f"dedup.{key}", "out of (0, 1]")
    check(isinstance(d.get("shingle_k"), int) and d.get("shingle_k", 0) >= 1,
          "dedup.shingle_k", "must be an integer >= 1")

    q = merged["quality"]
    check(isinstance(q.get("threshold"), (int, float)) and q.get("threshold", -1) >= 0,
          "quality.threshold", "must be >= 0")
    check(isinstance(q.get("strict_syntax"), bool), "quality.strict_syntax",
          "must be a boolean")

    r = merged["resample"]
    mp = r.get("min_proportion")
    check(isinstance(mp, (int, float)) and 0 <= mp < 1,
          "resample.min_proportion", "must be in [0, 1)")
    downsample = r.get("downsample", {})
    if isinstance(downsample, dict):
        from .langinfo import REGISTRY

        for lang, rate in downsample.items():
            check(isinstance(rate, (int, float)) and 0 < rate <= 1,
                  f"resample.downsample.{lang}", "keep rate out of (0, 1]")
            if lang not in REGISTRY:
                warnings.append(f"resample.downsample.{lang}: unknown language, "
                                "accepted as-is")
    else:
        errors.append("resample.downsample: must be an object of language -> rate")

    t = merged["tokenstats"]
    check(isinstance(t.get("vocab_size"), int) and t.get("vocab_size", 0) > 258,
          "tokenstats.vocab_size", "must exceed byte alphabet plus special tokens (258)")
    check(isinstance(t.get("train_bytes"), int) and t.get("train_bytes", 0) > 0,
          "tokenstats.train_bytes", "must be a positive integer")
    check(isinstance(t.get("sample_files"), int) and t.get("sample_files", 0) > 0,
          "tokenstats.sample_files", "must be a positive integer")

    s = merged["sft"]
    role_names = s.get("role_names", {})
    if isinstance(role_names, dict):
        for role in role_names:
            if role not in ("system", "human", "bot"):
                errors.append(f"sft.role_names.{role}: unknown role")
    else:
        errors.append("sft.role_names: must be an object")

    if errors:
        return ValidationResult(None, errors, warnings)
    return ValidationResult(PipelineConfig(merged), [], warnings)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


@dataclass
class StageEntry:
    name: str
    unit: str  # files | pairs | samples | report
    input_from: str | None
    input_count: int
    kept_count: int
    drop_counts: dict[str, int]
    outputs: dict[str, str]  # relative path -> sha256
    extras: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "unit": self.unit,
            "input_from": self.input_from,
            "input_count": self.input_count,
            "kept_count": self.kept_count,
            "drop_counts": self.drop_counts,
            "outputs": self.outputs,
            "extras": self.extras,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "StageEntry":
        return cls(
            name=obj["name"], unit=obj["unit"], input_from=obj["input_from"],
            input_count=obj["input_count"], kept_count=obj["kept_count"],
            drop_counts=dict(obj["drop_counts"]), outputs=dict(obj["outputs"]),
            extras=dict(obj.get("extras", {})),
        )


@dataclass
class CorpusManifest:
    config_hash: str
    stages: list[StageEntry] = field(default_factory=list)

    def entry(self, name: str) -> StageEntry | None:
        for stage in self.stages:
            if stage.name == name:
                return stage
        return None

    def to_json(self) -> dict[str, Any]:
        return {"config_hash": self.config_hash,
                "stages": [s.to_json() for s in self.stages]}

    def save(self, directory: Path) -> None:
        tmp = directory / (MANIFEST_NAME + ".tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write("\n")
        tmp.replace(directory / MANIFEST_NAME)

    @classmethod
    def load(cls, directory: Path) -> "CorpusManifest":
        with open(directory / MANIFEST_NAME, "r", encoding="utf-8") as f:
            obj = json.load(f)
        return cls(config_hash=obj["config_hash"],
                   stages=[StageEntry.from_json(s) for s in obj["stages"]])

    def conservation_violations(self) -> list[str]:
        """Within-stage count conservation plus chain linkage between stages."""
        problems: list[str] = []
        by_name = {s.name: s for s in self.stages}
        for stage in self.stages:
            dropped = sum(stage.drop_counts.values())
            if stage.input_count != stage.kept_count + dropped:
                problems.append(
                    f"{stage.name}: input {stage.input_count} != kept "
                    f"{stage.kept_count} + dropped {dropped}"
                )
            if stage.input_from is not None:
                upstream = by_name.get(stage.input_from)
                if upstream and stage.input_count != upstream.kept_count:
                    problems.append(
                        f"{stage.name}: input {stage.input_count} != "
                        f"{stage.input_from} kept {upstream.kept_count}"
                    )
        return problems


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# Stage I/O
# ---------------------------------------------------------------------------


def _stage_dir(out_dir: Path, name: str) -> Path:
    index = STAGE_ORDER.index(name)
    return out_dir / f"{index:02d}_{name}"


def _write_shards(directory: Path, records: Iterable[FileRecord],
                  shard_bytes: int) -> tuple[int, list[Path]]:
    """Bounded-size JSONL shards; returns (record count, shard paths)."""
    directory.mkdir(parents=True, exist_ok=True)
    count = 0
    paths: list[Path] = []
    shard_idx = 0
    current_size = 0
    handle = None
    try:
        for record in records:
            line = dump_json_line(record.to_json()) + "\n"
            encoded = line.encode("utf-8")
            if handle is None or (current_size and current_size + len(encoded) > shard_bytes):
                if handle is not None:
                    handle.close()
                path = directory / f"records-{shard_idx:05d}.jsonl"
                paths.append(path)
                handle = open(path, "w", encoding="utf-8")
                shard_idx += 1
                current_size = 0
            handle.write(line)
            current_size += len(encoded)
            count += 1
        if handle is None:  # always leave at least one (possibly empty) shard
            path = directory / "records-00000.jsonl"
            paths.append(path)
            handle = open(path, "w", encoding="utf-8")
    finally:
        if handle is not None:
            handle.close()
    return count, paths


def _read_shards(directory: Path) -> Iterator[FileRecord]:
    for path in sorted(directory.glob("records-*.jsonl")):
        yield from read_records(path)


def _checksum_outputs(stage_path: Path) -> dict[str, str]:
    return {
        p.name: _sha256_file(p)
        for p in sorted(stage_path.iterdir())
        if p.is_file() and not p.name.endswith(".tmp")
    }


# ---------------------------------------------------------------------------
# Stage implementations
# ---------------------------------------------------------------------------


def _stage_ingest(cfg: PipelineConfig, out: Path) -> StageEntry:
    stage_path = _stage_dir(out, "ingest")
    stage_path.mkdir(parents=True, exist_ok=True)
    drops: list[ScanDrop] = []
    records = scan_corpus(cfg.roots, cfg.ingest_config(), drops)
    kept, _ = _write_shards(stage_path, records, cfg.shard_bytes)
    write_jsonl(stage_path / "drops.jsonl",
                ({"repo": d.repo, "path": d.path, "reason": str(d.reason)} for d in drops))
    drop_counts: dict[str, int] = {}
    for drop in drops:
        drop_counts[str(drop.reason)] = drop_counts.get(str(drop.reason), 0) + 1
    return StageEntry(
        name="ingest", unit="files", input_from=None,
        input_count=kept + len(drops), kept_count=kept,
        drop_counts=dict(sorted(drop_counts.items())),
        outputs=_checksum_outputs(stage_path),
    )


def _stage_filter(cfg: PipelineConfig, out: Path, upstream: str) -> StageEntry:
    stage_path = _stage_dir(out, "filter")
    stage_path.mkdir(parents=True, exist_ok=True)
    rules = cfg.filter_rules()
    rules.validate()
    drops: list[dict[str, Any]] = []
    drop_counts: dict[str, int] = {}
    scrubbed_files = 0
    input_count = 0

    def process() -> Iterator[FileRecord]:
        nonlocal scrubbed_files, input_count
        for record in _read_shards(_stage_dir(out, upstream)):
            input_count += 1
            record, matched = scrub_secrets(record)
            if matched:
                scrubbed_files += 1
            verdict = apply_file_filters(record, rules, secret_matched=matched)
            if verdict.keep:
                yield record
            else:
                reasons = sorted(str(r) for r in verdict.reasons)
                key = ",".join(reasons)
                drop_counts[key] = drop_counts.get(key, 0) + 1
                drops.append({"id": record.id, "path": record.path, "reasons": reasons})

    kept, _ = _write_shards(stage_path, process(), cfg.shard_bytes)
    write_jsonl(stage_path / "drops.jsonl", drops)
    return StageEntry(
        name="filter", unit="files", input_from=upstream,
        input_count=input_count, kept_count=kept,
        drop_counts=dict(sorted(drop_counts.items())),
        outputs=_checksum_outputs(stage_path),
        extras={"scrubbed_files": scrubbed_files},
    )


def _stage_dedup(cfg: PipelineConfig, out: Path, upstream: str, name: str) -> StageEntry:
    stage_path = _stage_dir(out, name)
    stage_path.mkdir(parents=True, exist_ok=True)
    d = cfg.raw["dedup"]
    records = list(_read_shards(_stage_dir(out, upstream)))
    if name == "dedup_exact":
        kept_records, decisions = dedup_mod.dedup_pass(records, "exact")
        drop_key = "exact_duplicate"
    elif name == "dedup_near":
        kept_records, decisions = dedup_mod.dedup_pass(
            records, "near_file", threshold=d["near_threshold"], shingle_k=d["shingle_k"])
        drop_key = "near_duplicate"
    else:
        kept_records, decisions = dedup_mod.dedup_segments(
            records, threshold=d["segment_threshold"], shingle_k=d["shingle_k"])
        drop_key = "segment_duplicate"
    kept, _ = _write_shards(stage_path, iter(kept_records), cfg.shard_bytes)
    write_jsonl(stage_path / "decisions.jsonl", (dec.to_json() for dec in decisions))
    dropped = sum(1 for dec in decisions if not dec.kept)
    extras: dict[str, Any] = {}
    if name == "dedup_segment":
        extras["files_rewritten"] = sum(
            1 for dec in decisions if dec.kept and dec.score is not None)
    return StageEntry(
        name=name, unit="files", input_from=upstream,
        input_count=len(records), kept_count=kept,
        drop_counts={drop_key: dropped} if dropped else {},
        outputs=_checksum_outputs(stage_path), extras=extras,
    )


def _stage_quality(cfg: PipelineConfig, out: Path, upstream: str) -> StageEntry:
    stage_path = _stage_dir(out, "quality")
    stage_path.mkdir(parents=True, exist_ok=True)
    q = cfg.raw["quality"]
    drop_counts: dict[str, int] = {}
    drops: list[dict[str, Any]] = []
    report_rows: list[dict[str, Any]] = []
    input_count = 0

    def process() -> Iterator[FileRecord]:
        nonlocal input_count
        for record in _read_shards(_stage_dir(out, upstream)):
            input_count += 1
            counts = quality_mod.collect_metric_counts(record)
            score = quality_mod.compute_quality_score(counts)
            report_rows.append(quality_mod.quality_report_row(record, counts, score))
            keep, reason = quality_mod.quality_gate(
                score, counts, threshold=q["threshold"], strict_syntax=q["strict_syntax"])
            if keep:
                yield record
            else:
                key = str(reason)
                drop_counts[key] = drop_counts.get(key, 0) + 1
                drops.append({"id": record.id, "path": record.path, "reasons": [key]})

    kept, _ = _write_shards(stage_path, process(), cfg.shard_bytes)
    write_jsonl(stage_path / "report.jsonl", report_rows)
    write_jsonl(stage_path / "drops.jsonl", drops)
    return StageEntry(
        name="quality", unit="files", input_from=upstream,
        input_count=input_count, kept_count=kept,
        drop_counts=dict(sorted(drop_counts.items())),
        outputs=_checksum_outputs(stage_path),
    )


def _stage_extract(cfg: PipelineConfig, out: Path, upstream: str) -> StageEntry:
    stage_path = _stage_dir(out, "extract")
    stage_path.mkdir(parents=True, exist_ok=True)
    files_scanned = 0
    files_unsupported = 0
    files_parse_failed = 0
    pairs_total = 0
    pairs_kept = 0
    drop_counts: dict[str, int] = {}
    rows: list[dict[str, Any]] = []
    for record in _read_shards(_stage_dir(out, upstream)):
        files_scanned += 1
        if not supported_language(record.language):
            files_unsupported += 1
            continue
        try:
            pairs = extract_pairs(record)
        except ParseFailure:
            files_parse_failed += 1
            continue
        for pair in pairs:
            pairs_total += 1
            if pair.verdict == "keep":
                pairs_kept += 1
            else:
                drop_counts[pair.reason] = drop_counts.get(pair.reason, 0) + 1
            rows.append({
                "source_id": pair.unit.source_id,
                "language": pair.unit.language,
                "name": pair.unit.name,
                "signature": pair.unit.signature,
                "body": pair.unit.body,
                "comment": pair.comment,
                "verdict": pair.verdict,
                "reason": pair.reason,
            })
    write_jsonl(stage_path / "pairs.jsonl", rows)
    return StageEntry(
        name="extract", unit="pairs", input_from=None,
        input_count=pairs_total, kept_count=pairs_kept,
        drop_counts=dict(sorted(drop_counts.items())),
        outputs=_checksum_outputs(stage_path),
        extras={
            "files_scanned": files_scanned,
            "files_unsupported": files_unsupported,
            "files_parse_failed": files_parse_failed,
        },
    )


def _stage_sft(cfg: PipelineConfig, out: Path) -> StageEntry:
    stage_path = _stage_dir(out, "sft")
    stage_path.mkdir(parents=True, exist_ok=True)
    s = cfg.raw["sft"]
    role_names = s["role_names"]
    pairs_path = _stage_dir(out, "extract") / "pairs.jsonl"
    samples: list[dict[str, Any]] = []
    input_count = 0
    for row in iter_jsonl(pairs_path):
        if row["verdict"] != "keep":
            continue
        input_count += 1
        record = pair_to_record(row)
        turns = from_json_record(record, "instruction", system_prompt=s["system_prompt"])
        sample = make_sample(turns, role_names=role_names,
                             include_end_marker=s["include_end_marker"])
        obj = sample.to_json()
        obj["meta"]["source_id"] = row["source_id"]
        samples.append(obj)
    write_jsonl(stage_path / "samples.jsonl", samples)
    return StageEntry(
        name="sft", unit="samples", input_from="extract",
        input_count=input_count, kept_count=len(samples), drop_counts={},
        outputs=_checksum_outputs(stage_path),
    )


def _stage_resample(cfg: PipelineConfig, out: Path, upstream: str) -> StageEntry:
    stage_path = _stage_dir(out, "resample")
    stage_path.mkdir(parents=True, exist_ok=True)
    records = list(_read_shards(_stage_dir(out, upstream)))
    dist = compute_distribution(records)
    write_distribution(str(stage_path / "distribution.json"), dist)
    (stage_path / "distribution.txt").write_text(
        render_distribution_table(dist) + "\n", encoding="utf-8")
    drop_log: list[tuple[int, DropReason]] = []
    policy = cfg.resample_policy()
    kept, _ = _write_shards(stage_path, resample(records, dist, policy, drop_log),
                            cfg.shard_bytes)
    drop_counts: dict[str, int] = {}
    for _, reason in drop_log:
        drop_counts[str(reason)] = drop_counts.get(str(reason), 0) + 1
    return StageEntry(
        name="resample", unit="files", input_from=upstream,
        input_count=len(records), kept_count=kept,
        drop_counts=dict(sorted(drop_counts.items())),
        outputs=_checksum_outputs(stage_path),
    )


_DOC_LANGS = frozenset({"markdown", "text", "restructuredtext", "tex", "other"})


def classify_token_bucket(record: FileRecord) -> str:
    """code / chinese / english corpus-type assignment for the token report."""
    if record.language not in _DOC_LANGS:
        return "code"
    sample = record.content[:4000]
    if not sample:
        return "english"
    han = sum(1 for ch in sample if "一" <= ch <= "鿿")
    return "chinese" if han / len(sample) > 0.05 else "english"


def _stage_tokenstats(cfg: PipelineConfig, out: Path, upstream: str) -> StageEntry:
    stage_path = _stage_dir(out, "tokenstats")
    stage_path.mkdir(parents=True, exist_ok=True)
    t = cfg.raw["tokenstats"]

    def training_texts() -> Iterator[str]:
        budget = t["train_bytes"]
        for record in _read_shards(_stage_dir(out, upstream)):
            if budget <= 0:
                break
            yield record.content
            budget -= record.byte_size

    vocab = train_bpe(training_texts(), vocab_size=t["vocab_size"])
    vocab.save(stage_path)

    sample: list[FileRecord] = []
    for record in _read_shards(_stage_dir(out, upstream)):
        if len(sample) >= t["sample_files"]:
            break
        sample.append(record)
    buckets = {record.id: classify_token_bucket(record) for record in sample}
    report = corpus_compression_report(sample, vocab, buckets)
    with open(stage_path / "report.json", "w", encoding="utf-8") as f:
        json.dump(report.to_json(), f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")
    (stage_path / "report.txt").write_text(report.render_table() + "\n", encoding="utf-8")
    return StageEntry(
        name="tokenstats", unit="report", input_from=None,
        input_count=len(sample), kept_count=len(sample), drop_counts={},
        outputs=_checksum_outputs(stage_path),
        extras={"vocab_size": vocab.size, "merges": len(vocab.merges)},
    )


def _stage_portrait(cfg: PipelineConfig, out: Path, upstream: str) -> StageEntry:
    stage_path = _stage_dir(out, "portrait")
    stage_path.mkdir(parents=True, exist_ok=True)
    quality_totals: dict[int, float] = {}
    report_path = _stage_dir(out, "quality") / "report.jsonl"
    if report_path.exists():
        for row in iter_jsonl(report_path):
            quality_totals[row["id"]] = row["total"]
    records = _read_shards(_stage_dir(out, upstream))
    report = build_portrait(records, quality_totals if quality_totals else None)
    write_portrait(str(stage_path / "portrait.json"), report)
    (stage_path / "portrait.txt").write_text(report.render_table() + "\n", encoding="utf-8")
    return StageEntry(
        name="portrait", unit="report", input_from=None,
        input_count=report.total_files, kept_count=report.total_files, drop_counts={},
        outputs=_checksum_outputs(stage_path),
    )


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------


def _stage_outputs_valid(out: Path, entry: StageEntry) -> bool:
    stage_path = _stage_dir(out, entry.name)
    if not stage_path.is_dir():
        return False
    try:
        return _checksum_outputs(stage_path) == entry.outputs
    except OSError:
        return False


def run_pipeline(
    config: PipelineConfig,
    resume: bool = False,
    stop_after: str | None = None,
) -> CorpusManifest:
    """Execute enabled stages in order, writing outputs and the manifest
    incrementally; with resume, completed stages verify and are skipped.

    ``stop_after`` ends the run after the named stage (used to exercise
    kill-and-resume); the manifest then covers only the completed prefix.
    """
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    config_hash = config.config_hash()

    manifest = CorpusManifest(config_hash=config_hash)
    timings: dict[str, float] = {}
    if resume and (out / MANIFEST_NAME).exists():
        previous = CorpusManifest.load(out)
        if previous.config_hash != config_hash:
            logger.warning("resume: config changed, restarting from scratch")
        else:
            for entry in previous.stages:
                if _stage_outputs_valid(out, entry):
                    manifest.stages.append(entry)
                else:
                    break  # suffix after a broken stage is recomputed
            if (out / TIMINGS_NAME).exists():
                with open(out / TIMINGS_NAME, "r", encoding="utf-8") as f:
                    timings = {k: v for k, v in json.load(f).items()
                               if manifest.entry(k) is not None}

    record_upstream: str | None = None
    completed = {entry.name for entry in manifest.stages}
    for entry in manifest.stages:  # rebuild upstream pointer over resumed prefix
        if entry.name in RECORD_STAGES:
            record_upstream = entry.name

    def run_stage(name: str, fn: Callable[[], StageEntry]) -> StageEntry:
        nonlocal record_upstream
        if name in completed:
            entry = manifest.entry(name)
            logger.info("stage %s: resumed (kept %d)", name, entry.kept_count)
        else:
            started = time.monotonic()
            entry = fn()
            timings[name] = round(time.monotonic() - started, 6)
            manifest.stages.append(entry)
            manifest.save(out)
            with open(out / TIMINGS_NAME, "w", encoding="utf-8") as f:
                json.dump(timings, f, indent=2, sort_keys=True)
                f.write("\n")
            logger.info("stage %s: input %d kept %d", name, entry.input_count,
                        entry.kept_count)
        if name in RECORD_STAGES:
            record_upstream = name
        return entry

    class _StopRun(Exception):
        pass

    def maybe_stop(name: str) -> None:
        if stop_after == name:
            raise _StopRun()

    try:
        run_stage("ingest", lambda: _stage_ingest(config, out))
        maybe_stop("ingest")
        if config.stage_enabled("filter"):
            run_stage("filter", lambda: _stage_filter(config, out, record_upstream))
            maybe_stop("filter")
        for dedup_name in ("dedup_exact", "dedup_near", "dedup_segment"):
            if config.stage_enabled(dedup_name):
                run_stage(dedup_name,
                          lambda n=dedup_name: _stage_dedup(config, out, record_upstream, n))
                maybe_stop(dedup_name)
        if config.stage_enabled("quality"):
            run_stage("quality", lambda: _stage_quality(config, out, record_upstream))
            maybe_stop("quality")
        if config.stage_enabled("extract"):
            extract_upstream = record_upstream
            entry = run_stage("extract", lambda: _stage_extract(config, out, extract_upstream))
            maybe_stop("extract")
            if config.stage_enabled("sft"):
                run_stage("sft", lambda: _stage_sft(config, out))
                maybe_stop("sft")
        if config.stage_enabled("resample"):
            run_stage("resample", lambda: _stage_resample(config, out, record_upstream))
            maybe_stop("resample")
        if config.stage_enabled("tokenstats"):
            run_stage("tokenstats", lambda: _stage_tokenstats(config, out, record_upstream))
            maybe_stop("tokenstats")
        if config.stage_enabled("portrait"):
            run_stage("portrait", lambda: _stage_portrait(config, out, record_upstream))
            maybe_stop("portrait")
    except _StopRun:
        logger.info("run stopped after stage %s", stop_after)

    problems = manifest.conservation_violations()
    for problem in problems:
        logger.error("manifest conservation violated: %s", problem)
    return manifest
