"""Corpus scanning: walk roots, classify files, measure text, emit records.

The scan is deterministic: files are emitted in lexicographic (repo, path)
order and ids are assigned in that order, so reruns over an unchanged tree
produce identical streams. Unreadable or undecodable files are skipped and
logged, never fatal.
"""

from __future__ import annotations

import logging
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .langinfo import OTHER, detect_language
from .records import DropReason, FileRecord, TextStats

logger = logging.getLogger(__name__)

THREADS_ENV = "REFINERY_THREADS"

DEFAULT_EXCLUDE_DIRS = frozenset({".git", ".hg", ".svn", "__pycache__", "node_modules"})

# Runs of Unicode letters and ASCII digits ([^\W\d_] is "letter" exactly).
_ALNUM_RUN = re.compile(r"(?:[0-9]|[^\W\d_])+")


@dataclass
class IngestConfig:
    include_other: bool = False  # emit files that classify as "other"
    lossy_decode: bool = False  # decode non-UTF-8 bytes with replacement chars
    exclude_dirs: frozenset[str] = DEFAULT_EXCLUDE_DIRS


@dataclass(frozen=True)
class ScanDrop:
    """A file skipped during scanning, before any id was assigned."""

    repo: str
    path: str
    reason: DropReason


def normalize_newlines(text: str) -> str:
    """Collapse CRLF to LF so line thresholds compare identically across platforms."""
    return text.replace("\r\n", "\n")


def compute_text_stats(content: str) -> TextStats:
    """Measure a text: line count, max/avg line length, alphanumeric ratio.

    Lines split on '\\n' with a trailing empty line not counted. The average
    is non-newline characters over lines; the ratio counts Unicode letters
    plus ASCII digits over non-newline characters, 0 when there are none.
    """
    if not content:
        return TextStats(0, 0, 0.0, 0.0)
    lines = content.split("\n")
    if lines[-1] == "":
        lines.pop()
    line_count = len(lines)
    non_newline = len(content) - content.count("\n")
    max_line_len = max(map(len, lines), default=0)
    avg_line_len = non_newline / line_count if line_count else 0.0
    alnum = sum(map(len, _ALNUM_RUN.findall(content)))
    alnum_ratio = alnum / non_newline if non_newline else 0.0
    return TextStats(line_count, max_line_len, avg_line_len, alnum_ratio)


def with_content(record: FileRecord, content: str) -> FileRecord:
    """Copy of a record with rewritten content and rederived size and stats."""
    return FileRecord(
        id=record.id,
        repo=record.repo,
        path=record.path,
        language=record.language,
        content=content,
        byte_size=len(content.encode("utf-8")),
        stats=compute_text_stats(content),
        fingerprints=None,
    )


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _list_files(root: Path, exclude: frozenset[str]) -> list[tuple[str, str, Path]]:
    """All regular files under root as (repo, relpath, fullpath)."""
    repo = root.name
    found: list[tuple[str, str, Path]] = []

    def onerror(err: OSError) -> None:
        logger.warning("scan: cannot enter %s: %s", getattr(err, "filename", root), err)

    for dirpath, dirnames, filenames in os.walk(root, onerror=onerror):
        dirnames[:] = sorted(d for d in dirnames if d not in exclude)
        for name in filenames:
            full = Path(dirpath) / name
            if full.is_symlink() or not full.is_file():
                continue
            rel = full.relative_to(root).as_posix()
            found.append((repo, rel, full))
    return found


def scan_corpus(
    roots: Iterable[str | Path],
    config: IngestConfig | None = None,
    drop_log: list[ScanDrop] | None = None,
) -> Iterator[FileRecord]:
    """Walk corpus roots and yield FileRecords in deterministic order.

    Each root directory is one repo (its basename). Files are sorted by
    (repo, path) before ids are assigned. Unreadable files are logged as
    io_error drops; non-UTF-8 files as encoding drops unless lossy decoding
    is enabled; "other"-language files are skipped unless configured in.
    """
    config = config or IngestConfig()
    entries: list[tuple[str, str, Path]] = []
    for root in roots:
        root = Path(root)
        if not root.is_dir():
            raise FileNotFoundError(f"corpus root is not a directory: {root}")
        entries.extend(_list_files(root, config.exclude_dirs))
    entries.sort(key=lambda e: (e[0], e[1]))

    def load(entry: tuple[str, str, Path]) -> tuple[str, str, str | DropReason]:
        repo, rel, full = entry
        try:
            raw = full.read_bytes()
        except OSError:
            return repo, rel, DropReason.IO_ERROR
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError:
            if not config.lossy_decode:
                return repo, rel, DropReason.ENCODING
            text = raw.decode("utf-8", errors="replace")
        return repo, rel, text

    threads = _thread_count()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            loaded = list(pool.map(load, entries))
    else:
        loaded = [load(e) for e in entries]

    next_id = 0
    for repo, rel, result in loaded:
        if isinstance(result, DropReason):
            logger.info("scan: dropped %s/%s (%s)", repo, rel, result)
            if drop_log is not None:
                drop_log.append(ScanDrop(repo, rel, result))
            continue
        content = normalize_newlines(result)
        language = detect_language(rel, content)
        if language == OTHER and not config.include_other:
            if drop_log is not None:
                drop_log.append(ScanDrop(repo, rel, DropReason.NOT_IN_REGISTRY))
            continue
        yield FileRecord(
            id=next_id,
            repo=repo,
            path=rel,
            language=language,
            content=content,
            byte_size=len(content.encode("utf-8")),
            stats=compute_text_stats(content),
        )
        next_id += 1
