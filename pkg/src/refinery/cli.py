"""Command-line interface: full pipeline runs plus per-stage subcommands."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import dedup as dedup_mod
from . import quality as quality_mod
from .extract import ParseFailure, extract_pairs, supported_language
from .filters import FilterRuleSet, apply_file_filters, scrub_secrets
from .ingest import IngestConfig, ScanDrop, scan_corpus
from .pipeline import DEFAULT_CONFIG, run_pipeline, validate_config
from .portrait import build_portrait
from .records import DropReason, iter_jsonl, read_records, write_jsonl, write_records
from .resample import (ResamplePolicy, compute_distribution, render_distribution_table,
                       resample)
from .sftformat import ChatMLError, from_json_record, make_sample, parse_chatml
from .tokenstats import BpeVocab, corpus_compression_report, train_bpe

logger = logging.getLogger("refinery")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def _cmd_run(args: argparse.Namespace) -> int:
    raw = Path(args.config).read_text(encoding="utf-8") if args.config else "{}"
    result = validate_config(raw)
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    if not result.ok:
        for error in result.errors:
            print(f"error: {error}", file=sys.stderr)
        return 2
    config = result.config
    if args.output_dir:
        config.raw["output_dir"] = args.output_dir
    if args.roots:
        config.raw["roots"] = args.roots
    if not config.roots:
        print("error: no corpus roots configured", file=sys.stderr)
        return 2
    if args.dry_run:
        print(json.dumps(config.raw, indent=2, sort_keys=True, ensure_ascii=False))
        print("dry run: configuration valid, nothing executed")
        return 0
    manifest = run_pipeline(config, resume=args.resume)
    problems = manifest.conservation_violations()
    for stage in manifest.stages:
        dropped = sum(stage.drop_counts.values())
        print(f"{stage.name:>14}: in {stage.input_count:>8}  kept {stage.kept_count:>8}"
              f"  dropped {dropped:>7}")
    if problems:
        for problem in problems:
            print(f"error: {problem}", file=sys.stderr)
        return 1
    print(f"manifest: {config.output_dir / 'manifest.json'}")
    return 0


def _cmd_scan(args: argparse.Namespace) -> int:
    config = IngestConfig(include_other=args.include_other, lossy_decode=args.lossy)
    drops: list[ScanDrop] = []
    count = write_records(args.output, scan_corpus(args.roots, config, drops))
    print(f"scanned {count} files ({len(drops)} skipped) -> {args.output}")
    return 0


def _cmd_filter(args: argparse.Namespace) -> int:
    rules = FilterRuleSet(
        max_lines=args.max_lines, max_bytes=args.max_bytes,
        max_avg_line_len=args.max_avg_line_len, min_alnum_ratio=args.min_alnum_ratio,
        drop_on_secret=args.drop_on_secret,
    )
    rules.validate()
    drops = []
    kept = 0
    with open(args.output, "w", encoding="utf-8") as out:
        for record in read_records(args.input):
            record, matched = scrub_secrets(record)
            verdict = apply_file_filters(record, rules, secret_matched=matched)
            if verdict.keep:
                out.write(json.dumps(record.to_json(), ensure_ascii=False,
                                     separators=(",", ":")) + "\n")
                kept += 1
            else:
                drops.append({"id": record.id, "path": record.path,
                              "reasons": sorted(str(r) for r in verdict.reasons)})
    if args.drops:
        write_jsonl(args.drops, drops)
    print(f"kept {kept}, dropped {len(drops)}")
    return 0


def _cmd_dedup(args: argparse.Namespace) -> int:
    records = list(read_records(args.input))
    if args.mode == "segment":
        kept, decisions = dedup_mod.dedup_segments(records, threshold=args.segment_threshold)
    else:
        threshold = args.near_threshold if args.mode == "near_file" else 1.0
        kept, decisions = dedup_mod.dedup_pass(records, args.mode, threshold=threshold)
    write_records(args.output, kept)
    if args.decisions:
        write_jsonl(args.decisions, (d.to_json() for d in decisions))
    print(f"kept {len(kept)} of {len(records)}")
    return 0


def _cmd_quality(args: argparse.Namespace) -> int:
    rows = []
    kept_records = []
    dropped = 0
    for record in read_records(args.input):
        counts = quality_mod.collect_metric_counts(record)
        score = quality_mod.compute_quality_score(counts)
        rows.append(quality_mod.quality_report_row(record, counts, score))
        keep, _ = quality_mod.quality_gate(score, counts, threshold=args.quality_threshold,
                                           strict_syntax=args.strict_syntax)
        if keep:
            kept_records.append(record)
        else:
            dropped += 1
    write_jsonl(args.report, rows)
    if args.output:
        write_records(args.output, kept_records)
    print(f"scored {len(rows)} files, gate dropped {dropped}")
    return 0


def _cmd_extract(args: argparse.Namespace) -> int:
    rows = []
    failed = 0
    for record in read_records(args.input):
        if not supported_language(record.language):
            continue
        try:
            pairs = extract_pairs(record)
        except ParseFailure:
            failed += 1
            continue
        for pair in pairs:
            rows.append({
                "source_id": pair.unit.source_id, "language": pair.unit.language,
                "name": pair.unit.name, "signature": pair.unit.signature,
                "body": pair.unit.body, "comment": pair.comment,
                "verdict": pair.verdict, "reason": pair.reason,
            })
    write_jsonl(args.output, rows)
    kept = sum(1 for r in rows if r["verdict"] == "keep")
    print(f"mined {len(rows)} pairs ({kept} kept, {failed} files unparseable)")
    return 0


def _parse_downsample(items: list[str]) -> dict[str, float]:
    table: dict[str, float] = {}
    for item in items:
        lang, _, rate = item.partition("=")
        if not rate:
            raise SystemExit(f"error: --downsample expects lang=rate, got {item!r}")
        table[lang] = float(rate)
    return table


def _cmd_resample(args: argparse.Namespace) -> int:
    records = list(read_records(args.input))
    dist = compute_distribution(records)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as f:
            json.dump(dist.to_json(), f, indent=2, ensure_ascii=False)
            f.write("\n")
    policy = ResamplePolicy(
        min_proportion=args.min_proportion,
        downsample=_parse_downsample(args.downsample or []) or dict(
            DEFAULT_CONFIG["resample"]["downsample"]),
        seed=args.seed,
    )
    drop_log: list[tuple[int, DropReason]] = []
    kept = write_records(args.output, resample(records, dist, policy, drop_log))
    print(render_distribution_table(dist))
    print(f"kept {kept} of {len(records)}")
    return 0


def _cmd_tokenstats(args: argparse.Namespace) -> int:
    records = list(read_records(args.input))
    if args.train:
        budget = args.train_bytes
        texts = []
        for record in records:
            if budget <= 0:
                break
            texts.append(record.content)
            budget -= record.byte_size
        vocab = train_bpe(texts, vocab_size=args.vocab_size)
        vocab.save(args.vocab_dir)
        print(f"trained vocab: {vocab.size} tokens ({len(vocab.merges)} merges)"
              f" -> {args.vocab_dir}")
    else:
        vocab = BpeVocab.load(args.vocab_dir)
    sample = records[: args.sample_files]
    from .pipeline import classify_token_bucket

    buckets = {r.id: classify_token_bucket(r) for r in sample}
    report = corpus_compression_report(sample, vocab, buckets)
    print(report.render_table())
    if args.report:
        with open(args.report, "w", encoding="utf-8") as f:
            json.dump(report.to_json(), f, indent=2, sort_keys=True)
            f.write("\n")
    return 0


def _cmd_chatml(args: argparse.Namespace) -> int:
    if args.action == "parse":
        text = Path(args.file).read_text(encoding="utf-8")
        try:
            turns = parse_chatml(text)
        except ChatMLError as exc:
            print(f"parse error: {exc} (byte {exc.byte_offset})", file=sys.stderr)
            return 1
        for turn in turns:
            suffix = " (open)" if turn.open else ""
            print(f"[{turn.role}]{suffix} {turn.content}")
        return 0

    failures = 0
    rendered = 0
    rows = []
    for obj in iter_jsonl(args.input):
        try:
            turns = from_json_record(obj, task_type=args.task_type)
            sample = make_sample(turns, include_end_marker=not args.no_end_marker)
        except (ChatMLError, ValueError) as exc:
            failures += 1
            logger.warning("record rejected: %s", exc)
            continue
        rendered += 1
        if args.action == "render":
            rows.append(sample.to_json())
    if args.action == "render":
        write_jsonl(args.output, rows)
        print(f"rendered {rendered} samples ({failures} rejected) -> {args.output}")
    else:
        print(f"validated {rendered} records, {failures} invalid")
    return 1 if (args.action == "validate" and failures) else 0


def _cmd_portrait(args: argparse.Namespace) -> int:
    quality_totals = None
    if args.quality:
        quality_totals = {row["id"]: row["total"] for row in iter_jsonl(args.quality)}
    report = build_portrait(read_records(args.input), quality_totals)
    print(report.render_table())
    if args.output:
        with open(args.output, "w", encoding="utf-8") as f:
            json.dump(report.to_json(), f, indent=2, ensure_ascii=False)
            f.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="refinery",
        description="Code-corpus curation: scan, clean, dedup, score, resample, format.",
    )
    _add_common(parser)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the full pipeline from a config file")
    p.add_argument("-c", "--config", help="pipeline config JSON")
    p.add_argument("--output-dir", help="override the configured output directory")
    p.add_argument("--roots", nargs="*", help="override the configured corpus roots")
    p.add_argument("--resume", action="store_true", help="skip completed stages")
    p.add_argument("--dry-run", action="store_true", help="validate and print the plan")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("scan", help="walk corpus roots into a records JSONL")
    p.add_argument("roots", nargs="+")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--include-other", action="store_true")
    p.add_argument("--lossy", action="store_true", help="lossy-decode non-UTF-8 files")
    p.set_defaults(func=_cmd_scan)

    p = sub.add_parser("filter", help="apply attribute filters and the secret scrubber")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--drops", help="write dropped {id, path, reasons} JSONL here")
    p.add_argument("--max-lines", type=int, default=10_000)
    p.add_argument("--max-bytes", type=int, default=1_000_000)
    p.add_argument("--max-avg-line-len", type=float, default=100.0)
    p.add_argument("--min-alnum-ratio", type=float, default=0.40)
    p.add_argument("--drop-on-secret", action="store_true")
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("dedup", help="run one dedup pass")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--mode", choices=["exact", "near_file", "segment"], default="exact")
    p.add_argument("--near-threshold", type=float, default=dedup_mod.DEFAULT_NEAR_THRESHOLD)
    p.add_argument("--segment-threshold", type=float,
                   default=dedup_mod.DEFAULT_SEGMENT_THRESHOLD)
    p.add_argument("--decisions", help="write decisions JSONL here")
    p.set_defaults(func=_cmd_dedup)

    p = sub.add_parser("quality", help="score files and apply the quality gate")
    p.add_argument("input")
    p.add_argument("--report", required=True, help="quality report JSONL")
    p.add_argument("-o", "--output", help="records passing the gate")
    p.add_argument("--quality-threshold", type=float,
                   default=quality_mod.DEFAULT_QUALITY_THRESHOLD)
    p.add_argument("--strict-syntax", action="store_true")
    p.set_defaults(func=_cmd_quality)

    p = sub.add_parser("extract", help="mine function/comment pairs")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("resample", help="language-distribution resampling")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--min-proportion", type=float, default=0.001)
    p.add_argument("--downsample", nargs="*", metavar="LANG=RATE")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="write the distribution JSON here")
    p.set_defaults(func=_cmd_resample)

    p = sub.add_parser("tokenstats", help="train/load a BPE vocab and report C-Rate")
    p.add_argument("input")
    p.add_argument("--vocab-dir", required=True)
    p.add_argument("--train", action="store_true")
    p.add_argument("--vocab-size", type=int, default=512)
    p.add_argument("--train-bytes", type=int, default=2_000_000)
    p.add_argument("--sample-files", type=int, default=500)
    p.add_argument("--report", help="write the report JSON here")
    p.set_defaults(func=_cmd_tokenstats)

    p = sub.add_parser("chatml", help="render/parse/validate ChatML data")
    p.add_argument("action", choices=["render", "parse", "validate"])
    p.add_argument("input", nargs="?", help="task JSONL (render/validate)")
    p.add_argument("-o", "--output", help="rendered samples JSONL (render)")
    p.add_argument("--file", help="ChatML text file (parse)")
    p.add_argument("--task-type", choices=["instruction", "chat", "fewshot"],
                   default="instruction")
    p.add_argument("--no-end-marker", action="store_true",
                   help="exclude bot end markers from the loss mask")
    p.set_defaults(func=_cmd_chatml)

    p = sub.add_parser("portrait", help="dataset portrait report")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.add_argument("--quality", help="quality report JSONL for decile slices")
    p.set_defaults(func=_cmd_portrait)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "chatml":
        if args.action == "parse" and not args.file:
            print("error: chatml parse requires --file", file=sys.stderr)
            return 2
        if args.action in ("render", "validate") and not args.input:
            print(f"error: chatml {args.action} requires an input JSONL", file=sys.stderr)
            return 2
        if args.action == "render" and not args.output:
            print("error: chatml render requires -o/--output", file=sys.stderr)
            return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
