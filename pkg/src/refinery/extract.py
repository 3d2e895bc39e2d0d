"""Function-level code/comment pair mining for SFT data.

Functions are located with per-language structural heuristics: indentation
blocks for Python, signature-pattern-plus-brace-matching for the brace
languages. Pairs then pass four selection rules: enough body lines, enough
effective code, a bounded comment length, and a non-meaningless comment.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace
from typing import Iterable

from .langinfo import BRACE_FUNCTION_LANGS, FUNCTION_LANGS, PYTHON_LIKE_FUNCTIONS
from .records import FileRecord
from .srcscan import classify_lines, line_starts, mask_strings_and_comments, offset_to_line

logger = logging.getLogger(__name__)

MIN_BODY_LINES = 3
MIN_EFFECTIVE_RATIO = 0.60
MAX_COMMENT_CHARS = 512

VERDICT_KEEP = "keep"
REASON_MEANINGLESS = "meaningless"
REASON_TOO_SHORT = "too_short"
REASON_LOW_EFFECTIVE = "low_effective"
REASON_COMMENT_TOO_LONG = "comment_too_long"

# Comments that say nothing once lowercased and stripped of punctuation.
MEANINGLESS_COMMENTS = frozenset({
    "todo", "fixme", "xxx", "tbd", "hack", "stub", "placeholder",
    "auto generated", "autogenerated", "generated code", "generated",
    "do not edit", "no comment", "comment", "constructor", "default constructor",
    "noop", "no op", "nothing", "empty", "test", "temp", "wip",
})

_ACCESSOR_NAME = re.compile(r"^(get|set|is)(_|[A-Z0-9]|$)")
_WORD = re.compile(r"\w+")
_CAMEL_SPLIT = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")


class ParseFailure(Exception):
    """File could not be structurally parsed (e.g. unbalanced braces)."""


@dataclass
class FunctionUnit:
    language: str
    name: str
    signature: str
    body: str
    body_line_count: int
    doc_comment: str | None
    effective_ratio: float
    source_id: int
    span: tuple[int, int]  # 0-based inclusive (first line, last line)
    param_count: int = 0


@dataclass
class CodeCommentPair:
    unit: FunctionUnit
    comment: str
    verdict: str = VERDICT_KEEP  # keep | dropped
    reason: str | None = None


def effective_code_ratio(body: str, language: str) -> float:
    """Share of body lines that are neither blank nor comments; 0 when empty."""
    if not body:
        return 0.0
    kinds = classify_lines(body, language)
    if not kinds:
        return 0.0
    effective = sum(1 for k in kinds if k == "code")
    return effective / len(kinds)


def _name_tokens(name: str) -> set[str]:
    parts: list[str] = []
    for chunk in name.split("_"):
        if chunk:
            parts.extend(p for p in _CAMEL_SPLIT.split(chunk) if p)
    return {p.lower() for p in parts}


def normalize_comment(comment: str) -> str:
    """Lowercase, strip punctuation and comment decoration, collapse spaces."""
    text = re.sub(r"[^\w\s]", " ", comment.lower().replace("_", " "))
    return " ".join(text.split())


def is_meaningless_comment(comment: str, unit: FunctionUnit) -> bool:
    """True when the comment carries no information beyond the code itself.

    Fires on stopword comments, on any comment attached to a short accessor
    (get*/set*/is* with a body of at most 3 lines), and on comments whose
    words merely restate the function name.
    """
    norm = normalize_comment(comment)
    if norm in MEANINGLESS_COMMENTS:
        return True
    if _ACCESSOR_NAME.match(unit.name) and unit.body_line_count <= 3:
        return True
    comment_tokens = set(norm.split())
    if comment_tokens <= _name_tokens(unit.name):
        return True
    return False


def filter_pairs(pairs: Iterable[CodeCommentPair]) -> list[CodeCommentPair]:
    """Assign a verdict to every pair; never mutates units.

    Rules in order, first failure recorded: body under 3 lines, effective
    ratio under 0.60, comment over 512 characters (Unicode scalars),
    meaningless comment.
    """
    out: list[CodeCommentPair] = []
    for pair in pairs:
        reason: str | None = None
        if pair.unit.body_line_count < MIN_BODY_LINES:
            reason = REASON_TOO_SHORT
        elif pair.unit.effective_ratio < MIN_EFFECTIVE_RATIO:
            reason = REASON_LOW_EFFECTIVE
        elif len(pair.comment) > MAX_COMMENT_CHARS:
            reason = REASON_COMMENT_TOO_LONG
        elif is_meaningless_comment(pair.comment, pair.unit):
            reason = REASON_MEANINGLESS
        out.append(replace(pair, verdict=VERDICT_KEEP if reason is None else "dropped",
                           reason=reason))
    return out


# ---------------------------------------------------------------------------
# Python parsing (indentation blocks)
# ---------------------------------------------------------------------------

_PY_DEF = re.compile(r"^([ \t]*)(?:async[ \t]+)?def[ \t]+([A-Za-z_]\w*)[ \t]*\(")
_PY_DOCSTRING = re.compile(r'^\s*[rbuRBU]{0,2}("""|\'\'\')(.*?)\1', re.DOTALL)


def _indent_width(line: str) -> int:
    return len(line) - len(line.lstrip(" \t")) if line.strip() else -1


def _python_preceding_comment(lines: list[str], def_line: int) -> str | None:
    i = def_line - 1
    while i >= 0 and lines[i].lstrip().startswith("@"):
        i -= 1
    collected: list[str] = []
    while i >= 0 and lines[i].strip().startswith("#"):
        collected.append(lines[i].strip().lstrip("#").strip())
        i -= 1
    if not collected:
        return None
    return "\n".join(reversed(collected))


def _parse_python(record: FileRecord) -> list[FunctionUnit]:
    content = record.content
    lines = content.split("\n")
    masked_lines = mask_strings_and_comments(content, "python").masked.split("\n")
    units: list[FunctionUnit] = []
    for i, line in enumerate(lines):
        m = _PY_DEF.match(line)
        if not m:
            continue
        indent = len(m.group(1).expandtabs(8))
        name = m.group(2)
        # Signature may span lines: consume until parens close and ':' appears.
        j = i
        depth = 0
        while j < len(lines):
            ml = masked_lines[j] if j < len(masked_lines) else lines[j]
            depth += ml.count("(") - ml.count(")")
            if depth <= 0 and ml.rstrip().endswith(":"):
                break
            j += 1
        if j >= len(lines):
            continue
        sig_end = j
        body_start = sig_end + 1
        end = body_start - 1
        k = body_start
        while k < len(lines):
            if not lines[k].strip():
                k += 1
                continue
            if _indent_width(lines[k].expandtabs(8)) <= indent:
                break
            end = k
            k += 1
        if end < body_start:
            continue
        body = "\n".join(lines[body_start : end + 1])
        doc = None
        dm = _PY_DOCSTRING.match(body)
        if dm:
            doc = dm.group(2).strip()
        else:
            doc = _python_preceding_comment(lines, i)
        sig_text = "\n".join(lines[i : sig_end + 1]).strip()
        units.append(FunctionUnit(
            language=record.language,
            name=name,
            signature=sig_text,
            body=body,
            body_line_count=end - body_start + 1,
            doc_comment=doc if doc else None,
            effective_ratio=effective_code_ratio(body, record.language),
            source_id=record.id,
            span=(i, end),
            param_count=_count_params(_paren_args(sig_text), drop_self=True),
        ))
    return units


def _paren_args(signature: str) -> str:
    start = signature.find("(")
    if start == -1:
        return ""
    depth = 0
    for pos in range(start, len(signature)):
        if signature[pos] in "([{":
            depth += 1
        elif signature[pos] in ")]}":
            depth -= 1
            if depth == 0:
                return signature[start + 1 : pos]
    return signature[start + 1 :]


def _count_params(args: str, drop_self: bool = False) -> int:
    args = args.strip()
    if not args or args == "void":
        return 0
    parts: list[str] = []
    depth = 0
    current = []
    for ch in args:
        if ch in "([{<":
            depth += 1
        elif ch in ")]}>":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(current).strip())
            current = []
        else:
            current.append(ch)
    parts.append("".join(current).strip())
    parts = [p for p in parts if p]
    if drop_self and parts and parts[0].split(":")[0].split("=")[0].strip() in ("self", "cls"):
        parts = parts[1:]
    return len(parts)


# ---------------------------------------------------------------------------
# Brace-language parsing (signature pattern + brace matching)
# ---------------------------------------------------------------------------

_SIG_NAME = re.compile(r"[A-Za-z_$][\w$]*\s*\(")
_ARROW_SIG = re.compile(
    r"([A-Za-z_$][\w$]*)\s*=\s*(?:async\s+)?\(([^()]*)\)\s*(?::[^={;]*)?=>\s*\{"
)
_NOT_FUNCTION_NAMES = frozenset({
    "if", "else", "for", "foreach", "while", "switch", "catch", "return",
    "new", "do", "synchronized", "using", "lock", "with", "try", "match",
    "when", "until", "unless", "elif", "func", "fn", "function", "defer",
    "assert", "throw", "delete", "typeof", "sizeof", "case", "await",
})
# Between the closing paren and the body brace: whitespace, throws clauses,
# trailing return types, etc. — but never ; ( ) { }.
_FILLER = re.compile(r"[^;(){}]*\{")


def _parse_braces(record: FileRecord) -> list[FunctionUnit]:
    content = record.content
    masked = mask_strings_and_comments(content, record.language).masked
    if masked.count("{") != masked.count("}"):
        raise ParseFailure(f"unbalanced braces in {record.path}")
    starts = line_starts(content)
    lines = content.split("\n")
    braces = [(m.start(), m.group(0)) for m in re.finditer(r"[{}]", masked)]
    brace_positions = [p for p, _ in braces]

    def match_brace(open_pos: int) -> int | None:
        import bisect as _bisect

        idx = _bisect.bisect_left(brace_positions, open_pos)
        depth = 0
        for pos, ch in braces[idx:]:
            depth += 1 if ch == "{" else -1
            if depth == 0:
                return pos
        return None

    units: list[FunctionUnit] = []
    seen_bodies: set[int] = set()

    def add_unit(name: str, sig_start: int, open_brace: int, args: str) -> None:
        if open_brace in seen_bodies:
            return
        close = match_brace(open_brace)
        if close is None:
            return
        seen_bodies.add(open_brace)
        body = content[open_brace + 1 : close]
        body_lines = body.split("\n")
        while body_lines and not body_lines[0].strip():
            body_lines.pop(0)
        while body_lines and not body_lines[-1].strip():
            body_lines.pop()
        if not body_lines:
            body_lines = [""]
        body_text = "\n".join(body_lines)
        first_line = offset_to_line(starts, sig_start)
        last_line = offset_to_line(starts, close)
        units.append(FunctionUnit(
            language=record.language,
            name=name,
            signature=" ".join(content[sig_start:open_brace].split()),
            body=body_text,
            body_line_count=len(body_lines),
            doc_comment=_brace_preceding_comment(lines, first_line),
            effective_ratio=effective_code_ratio(body_text, record.language),
            source_id=record.id,
            span=(first_line, last_line),
            param_count=_count_params(args),
        ))

    for m in _SIG_NAME.finditer(masked):
        name = re.match(r"[A-Za-z_$][\w$]*", m.group(0)).group(0)
        if name in _NOT_FUNCTION_NAMES:
            continue
        before = masked[max(0, m.start() - 16) : m.start()].rstrip()
        prev_word = re.search(r"([A-Za-z_$][\w$]*)$", before)
        if prev_word and prev_word.group(1) in ("new", "throw", "return", "case", "in"):
            continue
        open_paren = m.end() - 1
        depth = 0
        close_paren = None
        for pos in range(open_paren, min(len(masked), open_paren + 20000)):
            ch = masked[pos]
            if ch == "(":
                depth += 1
            elif ch == ")":
                depth -= 1
                if depth == 0:
                    close_paren = pos
                    break
        if close_paren is None:
            continue
        fm = _FILLER.match(masked, close_paren + 1)
        if not fm:
            continue
        open_brace = fm.end() - 1
        args = content[open_paren + 1 : close_paren]
        add_unit(name, m.start(), open_brace, args)

    for m in _ARROW_SIG.finditer(masked):
        name = m.group(1)
        if name in _NOT_FUNCTION_NAMES:
            continue
        open_brace = m.end() - 1
        add_unit(name, m.start(), open_brace, m.group(2))

    units.sort(key=lambda u: (u.span[0], -u.span[1]))
    return units


def _brace_preceding_comment(lines: list[str], sig_line: int) -> str | None:
    i = sig_line - 1
    if i < 0:
        return None
    stripped = lines[i].strip()
    if stripped.endswith("*/"):
        block: list[str] = []
        j = i
        while j >= 0:
            block.append(lines[j])
            if "/*" in lines[j]:
                text = "\n".join(reversed(block))
                return _clean_block_comment(text)
            j -= 1
        return None
    if stripped.startswith("//"):
        collected: list[str] = []
        j = i
        while j >= 0 and lines[j].strip().startswith("//"):
            collected.append(lines[j].strip().lstrip("/").strip())
            j -= 1
        return "\n".join(reversed(collected))
    return None


def _clean_block_comment(text: str) -> str:
    inner = text.strip()
    start = inner.find("/*")
    if start != -1:
        inner = inner[start + 2 :]
    inner = inner.removeprefix("*")  # '/**' javadoc opener
    if inner.endswith("*/"):
        inner = inner[:-2]
    cleaned = []
    for ln in inner.split("\n"):
        ln = ln.strip()
        if ln.startswith("*"):
            ln = ln[1:].strip()
        cleaned.append(ln)
    return "\n".join(cleaned).strip()


def parse_functions(record: FileRecord) -> list[FunctionUnit]:
    """Locate function units with attached doc comments, outermost-first.

    A doc comment is a docstring, or a block comment / contiguous run of line
    comments directly above the signature with no blank line between.
    Unsupported languages return an empty list; unbalanced braces raise
    ParseFailure.
    """
    if record.language in PYTHON_LIKE_FUNCTIONS:
        return _parse_python(record)
    if record.language in BRACE_FUNCTION_LANGS:
        return _parse_braces(record)
    return []


def extract_pairs(record: FileRecord) -> list[CodeCommentPair]:
    """Mine the record's functions and run the pair filters.

    Only units with a doc comment form pairs; the result carries verdicts.
    Raises ParseFailure when the file cannot be parsed structurally.
    """
    units = parse_functions(record)
    pairs = [CodeCommentPair(unit=u, comment=u.doc_comment) for u in units
             if u.doc_comment is not None]
    return filter_pairs(pairs)


def supported_language(language: str) -> bool:
    return language in FUNCTION_LANGS
