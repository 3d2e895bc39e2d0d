"""First-level file-attribute filters and a small secret scrubber.

Thresholds default to the classic large-file / abnormal-text cleaning rules:
drop files over 10,000 lines or 1MB, and files whose average line length
exceeds 100 or whose alphanumeric ratio falls below 40%. All boundaries are
exclusive on the keep side ("more than", "less than") and configurable.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field

from .ingest import with_content
from .records import DropReason, FileRecord

REDACTION_MARKER = "<<REDACTED>>"

# Assignment of a long opaque literal to a sensitively named variable.
_SECRET_ASSIGN = re.compile(
    r"""(?ix)
    \b[\w.\[\]'"-]*(key|token|secret|passwd|password|pwd|credential)[\w.\[\]'"-]*
    \s*[:=]\s*
    ['"]([A-Za-z0-9+/_\-=]{12,})['"]
    """
)
_PRIVATE_KEY_BEGIN = re.compile(r"-----BEGIN [A-Z ]*PRIVATE KEY-----")
_PRIVATE_KEY_END = re.compile(r"-----END [A-Z ]*PRIVATE KEY-----")

_MIN_SECRET_ENTROPY = 3.0  # bits per char over the quoted literal


@dataclass
class FilterRuleSet:
    max_lines: int = 10_000
    max_bytes: int = 1_000_000
    max_avg_line_len: float = 100.0
    min_alnum_ratio: float = 0.40
    drop_on_secret: bool = False  # drop files where the scrubber fired

    def validate(self) -> None:
        if self.max_lines <= 0 or self.max_bytes <= 0 or self.max_avg_line_len <= 0:
            raise ValueError("filter thresholds must be strictly positive")
        if not 0.0 < self.min_alnum_ratio <= 1.0:
            raise ValueError("min_alnum_ratio must be in (0, 1]")


@dataclass(frozen=True)
class FilterVerdict:
    keep: bool
    reasons: frozenset[DropReason]


def apply_file_filters(
    record: FileRecord,
    rules: FilterRuleSet | None = None,
    secret_matched: bool = False,
) -> FilterVerdict:
    """Evaluate every rule (no short-circuit) and collect all violations.

    Drop iff line_count > max_lines, byte_size > max_bytes,
    avg_line_len > max_avg_line_len, or alnum_ratio < min_alnum_ratio;
    boundary values survive. ``secret_matched`` adds a secret reason only
    when the rule set says scrubber hits are drops.
    """
    rules = rules or FilterRuleSet()
    reasons: set[DropReason] = set()
    if record.stats.line_count > rules.max_lines:
        reasons.add(DropReason.MAX_LINES)
    if record.byte_size > rules.max_bytes:
        reasons.add(DropReason.MAX_BYTES)
    if record.stats.avg_line_len > rules.max_avg_line_len:
        reasons.add(DropReason.AVG_LINE_LEN)
    if record.stats.alnum_ratio < rules.min_alnum_ratio:
        reasons.add(DropReason.ALNUM_RATIO)
    if secret_matched and rules.drop_on_secret:
        reasons.add(DropReason.SECRET)
    return FilterVerdict(keep=not reasons, reasons=frozenset(reasons))


def _entropy_bits(text: str) -> float:
    counts = Counter(text)
    n = len(text)
    return -sum((c / n) * math.log2(c / n) for c in counts.values()) if n else 0.0


def _line_is_secret(line: str) -> bool:
    if _PRIVATE_KEY_BEGIN.search(line) or _PRIVATE_KEY_END.search(line):
        return True
    m = _SECRET_ASSIGN.search(line)
    if m:
        literal = m.group(2)
        return _entropy_bits(literal) >= _MIN_SECRET_ENTROPY
    return False


def scrub_secrets(
    record: FileRecord,
    extra_patterns: tuple[str | re.Pattern[str], ...] = (),
) -> tuple[FileRecord, bool]:
    """Replace secret-bearing lines with a fixed redaction marker.

    Shipped rules cover private-key blocks (the BEGIN/END lines and
    everything between) and high-entropy quoted literals assigned to names
    containing key/token/secret/password; ``extra_patterns`` adds per-line
    regexes on top. Idempotent; stats and byte size are recomputed when
    anything changed.
    """
    extras = [re.compile(p) if isinstance(p, str) else p for p in extra_patterns]
    lines = record.content.split("\n")
    out: list[str] = []
    matched = False
    in_key_block = False
    for line in lines:
        if in_key_block:
            out.append(REDACTION_MARKER)
            if _PRIVATE_KEY_END.search(line):
                in_key_block = False
            continue
        if _PRIVATE_KEY_BEGIN.search(line):
            in_key_block = True
            matched = True
            out.append(REDACTION_MARKER)
            continue
        if _line_is_secret(line) or any(p.search(line) for p in extras):
            matched = True
            out.append(REDACTION_MARKER)
        else:
            out.append(line)
    if not matched:
        return record, False
    return with_content(record, "\n".join(out)), True
