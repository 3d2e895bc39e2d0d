"""Lightweight lexical scanning shared by dedup, quality, and extract.

Nothing here is a real parser: lines are classified with the per-language
comment tables, and strings/comments can be masked out (offset-preserving)
so downstream regex and brace matching never fire inside literals.
"""

from __future__ import annotations

import bisect
import re
from dataclasses import dataclass
from functools import lru_cache

from .langinfo import COMMENT_SYNTAX, CommentSyntax

LineKind = str  # 'code' | 'comment' | 'blank'

# Markup and comment-delimiter-conflicted languages where quoted strings are
# not masked.
_NO_STRING_MASK = frozenset({
    "html", "xml", "markdown", "vue", "svelte", "tex", "vim", "visual-basic",
    "batch", "restructuredtext",
})

_DQ_STRING = r'"(?:\\.|[^"\\\n])*"'
_SQ_STRING = r"'(?:\\.|[^'\\\n])*'"
_BT_STRING = r"`(?:\\.|[^`\\])*`"


def classify_lines(text: str, language: str) -> list[LineKind]:
    """Label each line of text as code, comment, or blank.

    Block comments are tracked line-wise: any line inside (or opening or
    closing) a block counts as a comment line. Mixed code-and-trailing-comment
    lines count as code. Unsupported languages classify every non-blank line
    as code.
    """
    syntax = COMMENT_SYNTAX.get(language)
    lines = text.split("\n")
    if text.endswith("\n"):
        lines.pop()
    if syntax is None:
        return ["blank" if not ln.strip() else "code" for ln in lines]

    kinds: list[LineKind] = []
    close_needed: str | None = None
    for line in lines:
        stripped = line.strip()
        if close_needed is not None:
            kinds.append("comment")
            if close_needed in stripped:
                close_needed = None
            continue
        if not stripped:
            kinds.append("blank")
            continue
        if any(stripped.startswith(p) for p in syntax.line_prefixes):
            kinds.append("comment")
            continue
        opened = False
        for opener, closer in syntax.block_pairs:
            if stripped.startswith(opener):
                kinds.append("comment")
                rest = stripped[len(opener):]
                if closer not in rest:
                    close_needed = closer
                opened = True
                break
        if not opened:
            kinds.append("code")
    return kinds


@dataclass(frozen=True)
class MaskedText:
    """Original text with strings and comments blanked to spaces."""

    masked: str
    string_spans: tuple[tuple[int, int], ...]

    @property
    def string_count(self) -> int:
        return len(self.string_spans)


@lru_cache(maxsize=128)
def _mask_pattern(language: str) -> re.Pattern[str] | None:
    syntax = COMMENT_SYNTAX.get(language)
    if syntax is None:
        return None
    comment_alts: list[str] = []
    for opener, closer in sorted(syntax.block_pairs, key=lambda p: -len(p[0])):
        comment_alts.append(re.escape(opener) + r".*?" + re.escape(closer))
    string_alts: list[str] = []
    if language not in _NO_STRING_MASK:
        string_alts.extend([_DQ_STRING, _SQ_STRING])
        if language in ("javascript", "typescript"):
            string_alts.append(_BT_STRING)
    for prefix in syntax.line_prefixes:
        comment_alts.append(re.escape(prefix) + r"[^\n]*")
    # Block comments first (longest openers), then strings, then line comments;
    # leftmost-first alternation makes "won't start inside a literal" hold.
    parts = []
    blocks = [a for a in comment_alts if not a.endswith(r"[^\n]*")]
    line_comments = [a for a in comment_alts if a.endswith(r"[^\n]*")]
    if blocks:
        parts.append("(?P<block>" + "|".join(blocks) + ")")
    if string_alts:
        parts.append("(?P<string>" + "|".join(string_alts) + ")")
    if line_comments:
        parts.append("(?P<line>" + "|".join(line_comments) + ")")
    if not parts:
        return None
    return re.compile("|".join(parts), re.DOTALL)


_NON_NEWLINE = re.compile(r"[^\n]")


def mask_strings_and_comments(text: str, language: str) -> MaskedText:
    """Blank out string literals and comments, preserving offsets and newlines."""
    pattern = _mask_pattern(language)
    if pattern is None:
        return MaskedText(text, ())
    string_spans: list[tuple[int, int]] = []

    def blank(m: re.Match[str]) -> str:
        if m.lastgroup == "string":
            string_spans.append(m.span())
        return _NON_NEWLINE.sub(" ", m.group(0))

    return MaskedText(pattern.sub(blank, text), tuple(string_spans))


def line_starts(text: str) -> list[int]:
    """Offsets where each line begins; index with offset_to_line."""
    starts = [0]
    pos = text.find("\n")
    while pos != -1:
        starts.append(pos + 1)
        pos = text.find("\n", pos + 1)
    return starts


def offset_to_line(starts: list[int], offset: int) -> int:
    """0-based line number containing a character offset."""
    return bisect.bisect_right(starts, offset) - 1
