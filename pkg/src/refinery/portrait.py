"""Multi-dimensional dataset portraits: language shares, path-derived module
categories, size buckets, and quality-score deciles.

Portraits accumulate associatively, so disjoint slices can be profiled in
parallel and merged: portrait(A) ⊕ portrait(B) == portrait(A ∪ B).
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .records import FileRecord

MODULE_CATEGORIES = ("test", "dal", "facade", "model", "other")
SIZE_BUCKETS = ((50, "<=50"), (200, "<=200"), (1000, "<=1000"))
SIZE_BUCKET_OVERFLOW = ">1000"
QUALITY_DECILES = 10

_TEST_FILE = re.compile(r"(?:^test_|_test$|Tests?$)")


def classify_module(path: str) -> str:
    """Path-based module category, priority test > dal > facade > model.

    A category matches on a whole path segment (case-insensitive) or, for
    test, on conventional file names (FooTest.java, test_foo.py, foo_test.go).
    """
    segments = [s.lower() for s in path.split("/") if s]
    stem = path.rsplit("/", 1)[-1]
    stem = stem.split(".", 1)[0]
    for category in ("test", "dal", "facade", "model"):
        if category in segments or (category + "s") in segments:
            return category
    if _TEST_FILE.search(stem):
        return "test"
    return "other"


def size_bucket(line_count: int) -> str:
    for limit, label in SIZE_BUCKETS:
        if line_count <= limit:
            return label
    return SIZE_BUCKET_OVERFLOW


@dataclass
class PortraitReport:
    language_counts: Counter = field(default_factory=Counter)
    category_counts: Counter = field(default_factory=Counter)
    size_counts: Counter = field(default_factory=Counter)
    quality_totals: list[float] = field(default_factory=list)
    total_files: int = 0

    def add(self, record: FileRecord, quality_total: float | None = None) -> None:
        self.language_counts[record.language] += 1
        self.category_counts[classify_module(record.path)] += 1
        self.size_counts[size_bucket(record.stats.line_count)] += 1
        if quality_total is not None:
            self.quality_totals.append(quality_total)
        self.total_files += 1

    def merge(self, other: "PortraitReport") -> "PortraitReport":
        merged = PortraitReport(
            language_counts=self.language_counts + other.language_counts,
            category_counts=self.category_counts + other.category_counts,
            size_counts=self.size_counts + other.size_counts,
            quality_totals=sorted(self.quality_totals + other.quality_totals),
            total_files=self.total_files + other.total_files,
        )
        return merged

    def __or__(self, other: "PortraitReport") -> "PortraitReport":
        return self.merge(other)

    def language_proportions(self) -> dict[str, float]:
        if not self.total_files:
            return {}
        return {lang: c / self.total_files for lang, c in sorted(self.language_counts.items())}

    def category_proportions(self) -> dict[str, float]:
        if not self.total_files:
            return {}
        return {cat: self.category_counts.get(cat, 0) / self.total_files
                for cat in MODULE_CATEGORIES}

    def quality_decile_counts(self) -> dict[int, int]:
        """Files per score decile; boundaries are the distribution's quantiles."""
        totals = sorted(self.quality_totals)
        n = len(totals)
        if not n:
            return {}
        edges = [totals[min(n - 1, (d * n) // QUALITY_DECILES)] for d in range(1, QUALITY_DECILES)]
        counts: dict[int, int] = {d: 0 for d in range(QUALITY_DECILES)}
        for value in totals:
            decile = 0
            for edge in edges:
                if value > edge:
                    decile += 1
                else:
                    break
            counts[decile] += 1
        return counts

    def to_json(self) -> dict[str, Any]:
        return {
            "total_files": self.total_files,
            "language": self.language_proportions(),
            "module_category": self.category_proportions(),
            "size_bucket": {label: self.size_counts.get(label, 0)
                            for _, label in SIZE_BUCKETS} |
                           {SIZE_BUCKET_OVERFLOW: self.size_counts.get(SIZE_BUCKET_OVERFLOW, 0)},
            "quality_decile": {str(d): c for d, c in self.quality_decile_counts().items()},
        }

    def render_table(self) -> str:
        lines = [f"files: {self.total_files}", "", "language:"]
        for lang, prop in sorted(self.language_proportions().items(), key=lambda kv: -kv[1]):
            lines.append(f"  {lang:<16} {prop * 100:6.1f}%")
        lines.append("")
        lines.append("module category:")
        for cat, prop in self.category_proportions().items():
            lines.append(f"  {cat:<16} {prop * 100:6.1f}%")
        lines.append("")
        lines.append("size (lines):")
        for _, label in SIZE_BUCKETS:
            lines.append(f"  {label:<16} {self.size_counts.get(label, 0)}")
        lines.append(f"  {SIZE_BUCKET_OVERFLOW:<16} {self.size_counts.get(SIZE_BUCKET_OVERFLOW, 0)}")
        deciles = self.quality_decile_counts()
        if deciles:
            lines.append("")
            lines.append("quality decile (0 best):")
            for d in range(QUALITY_DECILES):
                lines.append(f"  {d:<16} {deciles.get(d, 0)}")
        return "\n".join(lines)


def build_portrait(
    records: Iterable[FileRecord],
    quality_totals: Mapping[int, float] | None = None,
) -> PortraitReport:
    """Single-pass portrait; quality deciles only when reports are supplied."""
    report = PortraitReport()
    for record in records:
        total = quality_totals.get(record.id) if quality_totals else None
        report.add(record, total)
    return report


def write_portrait(path: str, report: PortraitReport) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_json(), f, ensure_ascii=False, indent=2)
        f.write("\n")


def export_csv(report: PortraitReport, dimension: str) -> str:
    """CSV text for one dimension: language, module_category, or size_bucket."""
    data = report.to_json()
    if dimension not in ("language", "module_category", "size_bucket", "quality_decile"):
        raise ValueError(f"unknown dimension: {dimension}")
    rows = data[dimension]
    out = [f"{dimension},value"]
    for key, value in rows.items():
        out.append(f"{key},{value}")
    return "\n".join(out) + "\n"
