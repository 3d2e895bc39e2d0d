"""Core record types and JSONL helpers shared by every pipeline stage."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator


class DropReason(str, Enum):
    """Why a record left the stream; manifest drop ledgers key on these."""

    IO_ERROR = "io_error"
    ENCODING = "encoding"
    NOT_IN_REGISTRY = "not_in_registry"
    MAX_LINES = "max_lines"
    MAX_BYTES = "max_bytes"
    AVG_LINE_LEN = "avg_line_len"
    ALNUM_RATIO = "alnum_ratio"
    SECRET = "secret"
    QUALITY = "quality"
    FATAL_SYNTAX = "fatal_syntax"
    NICHE_LANGUAGE = "niche_language"
    DOWNSAMPLED = "downsampled"
    PARSE_FAILURE = "parse_failure"

    def __str__(self) -> str:  # JSON-friendly
        return self.value


@dataclass(frozen=True)
class TextStats:
    """Per-file text measurements consumed by the attribute filters."""

    line_count: int
    max_line_len: int
    avg_line_len: float
    alnum_ratio: float


@dataclass
class Fingerprint:
    """Content digests attached by the dedup passes."""

    exact: str | None = None  # 128-bit hex digest of the content bytes
    simhash: int | None = None  # 64-bit near-duplicate fingerprint


@dataclass
class FileRecord:
    """One source file flowing through the pipeline.

    ``id`` is the stable scan ordinal: unique per run, strictly increasing in
    emission order, and the tie-breaker for keep-first deduplication.
    """

    id: int
    repo: str
    path: str
    language: str
    content: str
    byte_size: int
    stats: TextStats
    fingerprints: Fingerprint | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "repo": self.repo,
            "path": self.path,
            "language": self.language,
            "byte_size": self.byte_size,
            "line_count": self.stats.line_count,
            "max_line_len": self.stats.max_line_len,
            "avg_line_len": self.stats.avg_line_len,
            "alnum_ratio": self.stats.alnum_ratio,
            "content": self.content,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "FileRecord":
        return cls(
            id=obj["id"],
            repo=obj["repo"],
            path=obj["path"],
            language=obj["language"],
            content=obj["content"],
            byte_size=obj["byte_size"],
            stats=TextStats(
                line_count=obj["line_count"],
                max_line_len=obj["max_line_len"],
                avg_line_len=obj["avg_line_len"],
                alnum_ratio=obj["alnum_ratio"],
            ),
        )


def dump_json_line(obj: dict[str, Any]) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def write_jsonl(path: str | Path, objs: Iterable[dict[str, Any]]) -> int:
    """Write one JSON object per line; returns the number written."""
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for obj in objs:
            f.write(dump_json_line(obj))
            f.write("\n")
            n += 1
    return n


def iter_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)


def write_records(path: str | Path, records: Iterable[FileRecord]) -> int:
    return write_jsonl(path, (r.to_json() for r in records))


def read_records(path: str | Path) -> Iterator[FileRecord]:
    for obj in iter_jsonl(path):
        yield FileRecord.from_json(obj)
