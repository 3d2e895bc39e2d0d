"""Language-distribution reporting and distribution-based resampling.

Niche languages (below a byte-share floor, default 0.1%) are removed
entirely; configured markup/data languages are downsampled with
hash-threshold sampling, so the keep/drop decision for a record depends
only on the seed and the record id, never on processing order.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator

from .hashing import hash64_pair
from .records import DropReason, FileRecord

logger = logging.getLogger(__name__)

DEFAULT_MIN_PROPORTION = 0.001
DEFAULT_DOWNSAMPLE = {"html": 0.25, "css": 0.25, "json": 0.25}

_SCALE = float(1 << 64)


@dataclass
class LanguageShare:
    file_count: int = 0
    byte_count: int = 0
    proportion: float = 0.0  # of total bytes


@dataclass
class LanguageDistribution:
    per_language: dict[str, LanguageShare] = field(default_factory=dict)
    total_files: int = 0
    total_bytes: int = 0

    def proportion_of(self, language: str) -> float:
        share = self.per_language.get(language)
        return share.proportion if share else 0.0

    def to_json(self) -> dict[str, Any]:
        return {
            "total_files": self.total_files,
            "total_bytes": self.total_bytes,
            "languages": {
                lang: {
                    "file_count": s.file_count,
                    "byte_count": s.byte_count,
                    "proportion": s.proportion,
                }
                for lang, s in sorted(self.per_language.items(),
                                      key=lambda kv: (-kv[1].byte_count, kv[0]))
            },
        }


@dataclass
class ResamplePolicy:
    min_proportion: float = DEFAULT_MIN_PROPORTION
    downsample: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_DOWNSAMPLE))
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.min_proportion < 1.0:
            raise ValueError("min_proportion must be in [0, 1)")
        for lang, rate in self.downsample.items():
            if not 0.0 < rate <= 1.0:
                raise ValueError(f"downsample rate for {lang} must be in (0, 1]")


def compute_distribution(records: Iterable[FileRecord]) -> LanguageDistribution:
    """Exact per-language file and byte counts; proportions by bytes."""
    dist = LanguageDistribution()
    for record in records:
        share = dist.per_language.setdefault(record.language, LanguageShare())
        share.file_count += 1
        share.byte_count += record.byte_size
        dist.total_files += 1
        dist.total_bytes += record.byte_size
    if dist.total_bytes:
        for share in dist.per_language.values():
            share.proportion = share.byte_count / dist.total_bytes
    return dist


def keep_decision(policy: ResamplePolicy, record_id: int, keep_rate: float) -> bool:
    """Deterministic per-record coin flip: hash(seed, id)/2^64 < keep_rate."""
    if keep_rate >= 1.0:
        return True
    return hash64_pair(policy.seed, record_id) / _SCALE < keep_rate


def resample(
    records: Iterable[FileRecord],
    dist: LanguageDistribution,
    policy: ResamplePolicy | None = None,
    drop_log: list[tuple[int, DropReason]] | None = None,
) -> Iterator[FileRecord]:
    """Apply the niche-removal and downsampling policy, order-preserving."""
    policy = policy or ResamplePolicy()
    policy.validate()
    for record in records:
        proportion = dist.proportion_of(record.language)
        if proportion < policy.min_proportion:
            if drop_log is not None:
                drop_log.append((record.id, DropReason.NICHE_LANGUAGE))
            continue
        rate = policy.downsample.get(record.language, 1.0)
        if not keep_decision(policy, record.id, rate):
            if drop_log is not None:
                drop_log.append((record.id, DropReason.DOWNSAMPLED))
            continue
        yield record


def render_distribution_table(dist: LanguageDistribution, tail_cutoff: float = 0.01) -> str:
    """Aligned text table, languages descending by share, small ones bucketed
    into an "others" tail row."""
    rows: list[tuple[str, int, int, float]] = []
    others = LanguageShare()
    ordered = sorted(dist.per_language.items(), key=lambda kv: (-kv[1].byte_count, kv[0]))
    for lang, share in ordered:
        if share.proportion >= tail_cutoff:
            rows.append((lang, share.file_count, share.byte_count, share.proportion))
        else:
            others.file_count += share.file_count
            others.byte_count += share.byte_count
            others.proportion += share.proportion
    if others.file_count:
        rows.append(("others", others.file_count, others.byte_count, others.proportion))
    header = ("language", "files", "bytes", "share")
    table = [header] + [
        (lang, str(files), str(nbytes), f"{prop * 100:.1f}%")
        for lang, files, nbytes, prop in rows
    ]
    widths = [max(len(row[i]) for row in table) for i in range(4)]
    lines = []
    for row in table:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    return "\n".join(lines)


def write_distribution(path: str, dist: LanguageDistribution) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(dist.to_json(), f, ensure_ascii=False, indent=2)
        f.write("\n")
