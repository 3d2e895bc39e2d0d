"""Per-file code quality scoring and gating.

The score decomposes into seven components: correctness (weighted bug
density per KLOC with weights 0.6/0.3/0.1 for fatal/error/warning), three
size scores (mean plus population variance of method sizes, class sizes,
and parameter counts), redundancy and literal densities per KLOC, and an
identifier-naming score. Higher total means lower quality.

Counts come from a small heuristic rule set standing in for a real static
analyzer; the formulas on top of them are exact.
"""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Sequence

from .extract import FunctionUnit, ParseFailure, parse_functions
from .langinfo import DECISION_TOKENS, FUNCTION_LANGS, IMPORT_PATTERNS
from .records import DropReason, FileRecord
from .srcscan import mask_strings_and_comments

logger = logging.getLogger(__name__)

CORRECTNESS_WEIGHTS = (0.6, 0.3, 0.1)  # fatal, error, warning
IDENTIFIER_MIN_LEN = 2
IDENTIFIER_MAX_LEN = 30
MAX_LINE_WARNING = 200

# Calibrated on fixtures: ordinary small files land in the hundreds (literal
# density per KLOC dominates short files), seeded-defect fixtures in the tens
# of thousands. Not a published number; tune per corpus.
DEFAULT_QUALITY_THRESHOLD = 2500.0


@dataclass
class MetricCounts:
    kloc: float = 0.0  # non-blank lines / 1000
    fatal_count: int = 0
    error_count: int = 0
    warning_count: int = 0
    method_sizes: list[int] = field(default_factory=list)
    class_sizes: list[int] = field(default_factory=list)
    param_counts: list[int] = field(default_factory=list)
    redundant_class_count: int = 0
    literal_count: int = 0
    low_bad_identifier_count: int = 0
    high_bad_identifier_lengths: list[int] = field(default_factory=list)
    complexities: list[int] = field(default_factory=list)
    degenerate: bool = False  # parse failed; size/complexity fields are empty


@dataclass(frozen=True)
class QualityScore:
    score_s: float
    score_m: float
    score_c: float
    score_p: float
    score_r: float
    score_l: float
    score_i: float

    @property
    def total(self) -> float:
        return (self.score_s + self.score_m + self.score_c + self.score_p
                + self.score_r + self.score_l + self.score_i)


def score_correctness(counts: MetricCounts) -> float:
    """Weighted bug density: 0.6·fatal/KLOC + 0.3·error/KLOC + 0.1·warning/KLOC."""
    if counts.kloc <= 0:
        return 0.0
    wf, we, ww = CORRECTNESS_WEIGHTS
    return (counts.fatal_count / counts.kloc) * wf \
        + (counts.error_count / counts.kloc) * we \
        + (counts.warning_count / counts.kloc) * ww


def size_score(sizes: Sequence[int | float]) -> float:
    """Mean plus population variance (divide by count, not count-1); [] -> 0."""
    n = len(sizes)
    if n == 0:
        return 0.0
    mean = sum(sizes) / n
    variance = sum((s - mean) ** 2 for s in sizes) / n
    return mean + variance


def score_redundancy(counts: MetricCounts) -> float:
    return counts.redundant_class_count / counts.kloc if counts.kloc > 0 else 0.0


def score_literals(counts: MetricCounts) -> float:
    return counts.literal_count / counts.kloc if counts.kloc > 0 else 0.0


def score_identifiers(counts: MetricCounts) -> float:
    """Too-short identifier density plus the size score of over-long name lengths."""
    low = counts.low_bad_identifier_count / counts.kloc if counts.kloc > 0 else 0.0
    return low + size_score(counts.high_bad_identifier_lengths)


def compute_quality_score(counts: MetricCounts) -> QualityScore:
    return QualityScore(
        score_s=score_correctness(counts),
        score_m=size_score(counts.method_sizes),
        score_c=size_score(counts.class_sizes),
        score_p=size_score(counts.param_counts),
        score_r=score_redundancy(counts),
        score_l=score_literals(counts),
        score_i=score_identifiers(counts),
    )


def cyclomatic_complexity(function_body: str, language: str) -> int:
    """1 + decision tokens (branch keywords, short-circuit operators, ternary).

    Counted over the body with strings and comments masked out. Unsupported
    languages report 1 with a warning.
    """
    tokens = DECISION_TOKENS.get(language)
    if tokens is None:
        logger.debug("cyclomatic_complexity: no token table for %s", language)
        return 1
    masked = mask_strings_and_comments(function_body, language).masked
    count = 0
    for keyword in tokens.keywords:
        count += len(re.findall(rf"\b{keyword}\b", masked))
    for op in tokens.operators:
        count += masked.count(op)
    return 1 + count


def coupling_degree(record: FileRecord) -> int:
    """Number of distinct import/include/require targets; 0 when unsupported."""
    patterns = IMPORT_PATTERNS.get(record.language)
    if not patterns:
        logger.debug("coupling_degree: no import patterns for %s", record.language)
        return 0
    targets: set[str] = set()
    for pattern in patterns:
        for m in pattern.finditer(record.content):
            raw = m.group(1)
            for item in raw.split(","):
                item = item.strip().split(" as ")[0].strip()
                if item:
                    targets.add(item)
    return len(targets)


_IDENTIFIER = re.compile(r"[A-Za-z_]\w*")
_NUMERIC_LITERAL = re.compile(r"(?<![\w.])\d(?:[\w.]*\w)?")
_IDENTICAL_CMP = re.compile(r"(\b[\w.]+)\s*(?:===|==|!=|<=|>=)\s*\1(?![\w.(])")
_EMPTY_CATCH = re.compile(r"\bcatch\s*(?:\([^)]*\))?\s*\{\s*\}")
_EMPTY_EXCEPT = re.compile(r"^[ \t]*except[^\n:]*:[ \t]*\n[ \t]*pass\b", re.MULTILINE)
_TODO_MARKER = re.compile(r"\b(TODO|FIXME)\b")
# A line that looks like a constant/declaration; literals on it don't count.
_DECL_LINE = re.compile(
    r"^\s*(?:(?:const|final|static|#define|public|private|protected|export)\b"
    r"|[A-Z_][A-Z0-9_]*\s*[:=][^=])"
)

_BRACKETS = (("(", ")"), ("[", "]"), ("{", "}"))

_PY_CLASS = re.compile(r"^([ \t]*)class\s+([A-Za-z_]\w*)", re.MULTILINE)
_BRACE_CLASS = re.compile(r"\b(?:class|interface|struct|enum)\s+([A-Za-z_]\w*)[^{;=]*\{")


def _class_bodies(record: FileRecord, masked: str) -> list[tuple[int, str]]:
    """(line_size, normalized_body) per class found in the file."""
    out: list[tuple[int, str]] = []
    content = record.content
    if record.language == "python":
        lines = content.split("\n")
        for m in _PY_CLASS.finditer(content):
            start_line = content.count("\n", 0, m.start())
            indent = len(m.group(1).expandtabs(8))
            end = start_line
            for k in range(start_line + 1, len(lines)):
                if not lines[k].strip():
                    continue
                width = len(lines[k].expandtabs(8)) - len(lines[k].expandtabs(8).lstrip(" "))
                if width <= indent:
                    break
                end = k
            body = "\n".join(lines[start_line + 1 : end + 1])  # name excluded
            out.append((end - start_line + 1, "".join(body.split())))
        return out
    braces = [(m.start(), m.group(0)) for m in re.finditer(r"[{}]", masked)]
    for m in _BRACE_CLASS.finditer(masked):
        open_pos = masked.find("{", m.start())
        depth = 0
        close_pos = None
        for pos, ch in braces:
            if pos < open_pos:
                continue
            depth += 1 if ch == "{" else -1
            if depth == 0:
                close_pos = pos
                break
        if close_pos is None:
            continue
        body = content[open_pos : close_pos + 1]  # braces in, name out
        out.append((content.count("\n", m.start(), close_pos) + 1, "".join(body.split())))
    return out


def collect_metric_counts(record: FileRecord) -> MetricCounts:
    """Populate MetricCounts from the shipped heuristic rule set.

    Fatal: unbalanced (), [], {} (per bracket kind, structured languages
    only). Error: empty catch/except blocks, comparisons of identical
    operands. Warning: lines over 200 chars, TODO/FIXME markers. Sizes and
    complexities come from the function extractor; redundant classes are
    classes with identical whitespace-normalized bodies; literals are string
    and numeric literals outside declaration-looking lines.
    """
    content = record.content
    counts = MetricCounts()
    counts.kloc = sum(1 for ln in content.split("\n") if ln.strip()) / 1000.0
    masked_info = mask_strings_and_comments(content, record.language)
    masked = masked_info.masked

    if record.language in FUNCTION_LANGS:
        for open_ch, close_ch in _BRACKETS:
            if masked.count(open_ch) != masked.count(close_ch):
                counts.fatal_count += 1

    counts.error_count += len(_EMPTY_CATCH.findall(masked))
    counts.error_count += len(_EMPTY_EXCEPT.findall(masked))
    counts.error_count += len(_IDENTICAL_CMP.findall(masked))

    counts.warning_count += sum(1 for ln in content.split("\n") if len(ln) > MAX_LINE_WARNING)
    counts.warning_count += len(_TODO_MARKER.findall(content))

    units: list[FunctionUnit] = []
    if record.language in FUNCTION_LANGS:
        try:
            units = parse_functions(record)
        except ParseFailure:
            counts.degenerate = True
    counts.method_sizes = [u.body_line_count for u in units]
    counts.param_counts = [u.param_count for u in units]
    counts.complexities = [cyclomatic_complexity(u.body, record.language) for u in units]

    if not counts.degenerate and record.language in FUNCTION_LANGS:
        bodies = _class_bodies(record, masked)
        counts.class_sizes = [size for size, _ in bodies]
        normalized = Counter(norm for _, norm in bodies)
        counts.redundant_class_count = sum(c - 1 for c in normalized.values() if c > 1)

    masked_lines = masked.split("\n")
    raw_lines = content.split("\n")
    numeric = 0
    for masked_line, raw_line in zip(masked_lines, raw_lines):
        if _DECL_LINE.match(raw_line):
            continue
        numeric += len(_NUMERIC_LITERAL.findall(masked_line))
    string_literals = 0
    for span_start, _span_end in masked_info.string_spans:
        line_idx = content.count("\n", 0, span_start)
        if line_idx < len(raw_lines) and _DECL_LINE.match(raw_lines[line_idx]):
            continue
        string_literals += 1
    counts.literal_count = numeric + string_literals

    identifiers = set(_IDENTIFIER.findall(masked))
    counts.low_bad_identifier_count = sum(1 for i in identifiers if len(i) < IDENTIFIER_MIN_LEN)
    counts.high_bad_identifier_lengths = sorted(
        len(i) for i in identifiers if len(i) > IDENTIFIER_MAX_LEN
    )
    return counts


def quality_gate(
    score: QualityScore,
    counts: MetricCounts,
    threshold: float = DEFAULT_QUALITY_THRESHOLD,
    strict_syntax: bool = False,
) -> tuple[bool, DropReason | None]:
    """Keep/drop verdict: fatal syntax problems first (strict mode), then total."""
    if strict_syntax and counts.fatal_count > 0:
        return False, DropReason.FATAL_SYNTAX
    if score.total > threshold:
        return False, DropReason.QUALITY
    return True, None


def quality_report_row(record: FileRecord, counts: MetricCounts,
                       score: QualityScore) -> dict[str, Any]:
    return {
        "id": record.id,
        "score_s": score.score_s,
        "score_m": score.score_m,
        "score_c": score.score_c,
        "score_p": score.score_p,
        "score_r": score.score_r,
        "score_l": score.score_l,
        "score_i": score.score_i,
        "total": score.total,
        "kloc": counts.kloc,
        "complexity_max": max(counts.complexities, default=0),
        "coupling": coupling_degree(record),
    }
