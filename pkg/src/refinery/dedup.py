"""Three-granularity deduplication: exact digests, near-duplicate SimHash
fingerprints, and segment-level SimHash after code/comment separation.

Every pass is keep-first by scan id and deterministic. Near-duplicate
candidate search uses banding over the 64-bit fingerprint with enough bands
that any pair within the threshold's hamming budget shares at least one
exact band, so banding never loses a pair relative to brute force; an exact
hamming check then confirms candidates, so it never adds one either.
"""

from __future__ import annotations

import hashlib
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Iterable, Mapping

import numpy as np

from .hashing import hash64, mix64
from .ingest import with_content
from .langinfo import COMMENT_SYNTAX
from .records import FileRecord, Fingerprint
from .srcscan import classify_lines

logger = logging.getLogger(__name__)

FINGERPRINT_BITS = 64
DEFAULT_SHINGLE_K = 5
DEFAULT_NEAR_THRESHOLD = 0.95
DEFAULT_SEGMENT_THRESHOLD = 0.90
MAX_SEGMENT_LINES = 100
# Segments below this many shingle features are kept verbatim and excluded
# from the index: fingerprints of near-empty fragments are noise and would
# collide across unrelated files.
MIN_SEGMENT_FEATURES = 16

_TOKEN_RE = re.compile(r"[A-Za-z_]\w*|[0-9][0-9A-Za-z_.]*|[^\sA-Za-z0-9_]")


@dataclass(frozen=True)
class DedupDecision:
    id: int
    kept: bool
    duplicate_of: int | None
    granularity: str  # exact | near_file | segment
    score: float | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "kept": self.kept,
            "duplicate_of": self.duplicate_of,
            "granularity": self.granularity,
            "score": self.score,
        }


def exact_key(content: str) -> str:
    """128-bit MD5 digest (hex) of the UTF-8 content bytes."""
    return hashlib.md5(content.encode("utf-8")).hexdigest()


def tokenize(content: str) -> list[str]:
    """Split text at identifier/number/operator boundaries; whitespace dropped."""
    return _TOKEN_RE.findall(content)


@lru_cache(maxsize=1 << 20)
def _token_hash(token: str) -> int:
    return hash64(token)


def shingle_features(content: str, k: int = DEFAULT_SHINGLE_K) -> Counter[int]:
    """Multiset of token k-gram features, each represented by its stable
    64-bit hash; the weight is the occurrence count.

    Texts shorter than k tokens emit the whole token sequence as a single
    feature; token-free texts emit nothing.
    """
    if k < 1:
        raise ValueError("shingle size must be >= 1")
    tokens = tokenize(content)
    if not tokens:
        return Counter()
    hashes = [_token_hash(t) for t in tokens]
    if len(hashes) < k:
        return Counter((mix64(hashes),))
    return Counter(mix64(hashes[i : i + k]) for i in range(len(hashes) - k + 1))


def simhash(features: Mapping[Any, int]) -> int:
    """Classic 64-bit SimHash over a weighted feature multiset.

    Per bit position, feature hashes vote +weight/-weight; the output bit is
    1 iff the sum is positive. Feature keys that are ints are taken as
    already-hashed 64-bit features; str/bytes keys are hashed here. Empty
    input maps to 0.
    """
    if not features:
        return 0
    hashes = np.fromiter(
        (key if isinstance(key, int) else hash64(key) for key in features.keys()),
        dtype=np.uint64,
        count=len(features),
    )
    weights = np.fromiter(features.values(), dtype=np.int64, count=len(features))
    bits = np.unpackbits(
        hashes.astype("<u8").view(np.uint8).reshape(-1, 8), axis=1, bitorder="little"
    ).astype(np.int64)
    sums = ((bits * 2 - 1) * weights[:, None]).sum(axis=0)
    out_bits = (sums > 0).astype(np.uint8)
    return int.from_bytes(np.packbits(out_bits, bitorder="little").tobytes(), "little")


def fingerprint_content(content: str, k: int = DEFAULT_SHINGLE_K) -> int:
    return simhash(shingle_features(content, k))


def simhash_score(a: int, b: int) -> float:
    """Similarity in [0,1]: 1 minus normalized hamming distance over 64 bits."""
    return 1.0 - ((a ^ b) & ((1 << FINGERPRINT_BITS) - 1)).bit_count() / FINGERPRINT_BITS


def max_hamming_for(threshold: float, bits: int = FINGERPRINT_BITS) -> int:
    """Largest hamming distance whose score still reaches the threshold."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must be in (0, 1]")
    return math.floor((1.0 - threshold) * bits)


class SimhashIndex:
    """Banding index over 64-bit fingerprints for near-duplicate lookup.

    The band count is one more than the hamming budget, so by pigeonhole any
    fingerprint within budget matches at least one stored band exactly. At
    the default 0.95 threshold this is 4 bands of 16 bits.
    """

    def __init__(self, threshold: float, bits: int = FINGERPRINT_BITS):
        self.threshold = threshold
        self.bits = bits
        self.max_hamming = max_hamming_for(threshold, bits)
        bands = self.max_hamming + 1
        base, extra = divmod(bits, bands)
        widths = [base + 1] * extra + [base] * (bands - extra)
        self._bands: list[tuple[int, int]] = []  # (shift, mask)
        shift = 0
        for w in widths:
            self._bands.append((shift, (1 << w) - 1))
            shift += w
        self._buckets: dict[tuple[int, int], list[int]] = {}
        self._fingerprints: dict[int, int] = {}

    def _keys(self, fingerprint: int) -> Iterable[tuple[int, int]]:
        for band_idx, (shift, mask) in enumerate(self._bands):
            yield band_idx, (fingerprint >> shift) & mask

    def add(self, key: int, fingerprint: int) -> None:
        self._fingerprints[key] = fingerprint
        for band_idx, value in self._keys(fingerprint):
            self._buckets.setdefault((band_idx, value), []).append(key)

    def query(self, fingerprint: int) -> list[tuple[int, float]]:
        """All stored (key, score) whose score reaches the threshold, sorted by key."""
        candidates: set[int] = set()
        for band_idx, value in self._keys(fingerprint):
            candidates.update(self._buckets.get((band_idx, value), ()))
        hits: list[tuple[int, float]] = []
        for key in candidates:
            score = simhash_score(fingerprint, self._fingerprints[key])
            if score >= self.threshold:
                hits.append((key, score))
        hits.sort()
        return hits


def _ensure_fingerprint(record: FileRecord) -> Fingerprint:
    if record.fingerprints is None:
        record.fingerprints = Fingerprint()
    return record.fingerprints


def dedup_pass(
    records: Iterable[FileRecord],
    mode: str,
    threshold: float = DEFAULT_NEAR_THRESHOLD,
    shingle_k: int = DEFAULT_SHINGLE_K,
) -> tuple[list[FileRecord], list[DedupDecision]]:
    """Keep-first deduplication at file granularity.

    exact mode keeps the first record per content digest. near_file mode
    drops a record iff some earlier kept record's fingerprint scores at or
    above the threshold; duplicate_of names the smallest matching survivor.
    One decision is emitted per input record.
    """
    if mode not in ("exact", "near_file"):
        raise ValueError(f"unknown dedup mode: {mode}")
    kept: list[FileRecord] = []
    decisions: list[DedupDecision] = []
    if mode == "exact":
        first_by_digest: dict[str, int] = {}
        for record in records:
            digest = exact_key(record.content)
            _ensure_fingerprint(record).exact = digest
            original = first_by_digest.get(digest)
            if original is None:
                first_by_digest[digest] = record.id
                kept.append(record)
                decisions.append(DedupDecision(record.id, True, None, "exact"))
            else:
                decisions.append(DedupDecision(record.id, False, original, "exact"))
        return kept, decisions

    index = SimhashIndex(threshold)
    for record in records:
        fp = fingerprint_content(record.content, shingle_k)
        _ensure_fingerprint(record).simhash = fp
        hits = index.query(fp)
        if hits:
            dup_of, score = hits[0]
            decisions.append(DedupDecision(record.id, False, dup_of, "near_file", score))
        else:
            index.add(record.id, fp)
            kept.append(record)
            decisions.append(DedupDecision(record.id, True, None, "near_file"))
    return kept, decisions


@dataclass
class Segment:
    kind: str  # 'code' | 'comment'
    lines: list[str]

    @property
    def text(self) -> str:
        return "\n".join(self.lines)


def _pack_code_lines(lines: list[str], max_lines: int) -> list[Segment]:
    segments: list[Segment] = []
    buf: list[str] = []
    for line in lines:
        buf.append(line)
        if len(buf) >= max_lines:
            cut = len(buf)
            for i in range(len(buf) - 1, 0, -1):
                if not buf[i].strip():
                    cut = i + 1
                    break
            segments.append(Segment("code", buf[:cut]))
            buf = buf[cut:]
    if buf:
        segments.append(Segment("code", buf))
    return segments


def split_segments(record: FileRecord, max_lines: int = MAX_SEGMENT_LINES) -> list[Segment]:
    """Ordered code/comment segments whose lines reassemble the file exactly.

    Comment segments are maximal runs of contiguous comment lines (a blank
    line breaks the run); code is chunked to at most ``max_lines`` lines,
    breaking at blank lines where possible. Blank lines glue to the
    surrounding segment so no line is lost. Unsupported languages yield the
    whole file as one code segment.
    """
    text = record.content
    if not text:
        return []
    lines = text.split("\n")
    if text.endswith("\n"):
        lines.pop()
    if record.language not in COMMENT_SYNTAX:
        logger.debug("segment_split: no comment syntax for %s, whole-file segment",
                      record.language)
        return [Segment("code", lines)]

    kinds = classify_lines(text, record.language)
    regions: list[Segment] = []
    pending: list[str] = []
    for line, kind in zip(lines, kinds):
        if kind == "blank":
            pending.append(line)
        elif kind == "comment":
            if regions and regions[-1].kind == "comment" and not pending:
                regions[-1].lines.append(line)
            else:
                regions.append(Segment("comment", pending + [line]))
                pending = []
        else:
            if regions and regions[-1].kind == "code":
                regions[-1].lines.extend(pending + [line])
            else:
                regions.append(Segment("code", pending + [line]))
            pending = []
    if pending:
        if regions:
            regions[-1].lines.extend(pending)
        else:
            regions.append(Segment("code", pending))

    segments: list[Segment] = []
    for region in regions:
        if region.kind == "comment":
            segments.append(region)
        else:
            segments.extend(_pack_code_lines(region.lines, max_lines))
    return segments


def segment_split(record: FileRecord) -> tuple[list[str], list[str]]:
    """Code and comment segment texts, each list in document order."""
    code: list[str] = []
    comments: list[str] = []
    for segment in split_segments(record):
        if segment.kind == "comment":
            comments.append(segment.text)
        else:
            code.append(segment.text)
    return code, comments


def dedup_segments(
    records: Iterable[FileRecord],
    threshold: float = DEFAULT_SEGMENT_THRESHOLD,
    shingle_k: int = DEFAULT_SHINGLE_K,
    min_features: int = MIN_SEGMENT_FEATURES,
) -> tuple[list[FileRecord], list[DedupDecision]]:
    """Remove segments near-duplicating any earlier kept segment.

    Files are rewritten from their surviving segments (stats recomputed);
    a file whose every segment is removed is dropped, with duplicate_of
    naming the file owning the first matched segment. One decision per file.
    Fragments with fewer than ``min_features`` shingles pass through
    untouched.
    """
    index = SimhashIndex(threshold)
    owner_of_segment: dict[int, int] = {}
    next_segment_key = 0
    kept: list[FileRecord] = []
    decisions: list[DedupDecision] = []
    for record in records:
        segments = split_segments(record)
        if not segments:
            kept.append(record)
            decisions.append(DedupDecision(record.id, True, None, "segment"))
            continue
        survivors: list[Segment] = []
        removed = 0
        first_match: tuple[int, float] | None = None
        for segment in segments:
            features = shingle_features(segment.text, shingle_k)
            if sum(features.values()) < min_features:
                survivors.append(segment)
                continue
            fp = simhash(features)
            hits = index.query(fp)
            if hits:
                removed += 1
                if first_match is None:
                    seg_key, score = hits[0]
                    first_match = (owner_of_segment[seg_key], score)
            else:
                index.add(next_segment_key, fp)
                owner_of_segment[next_segment_key] = record.id
                next_segment_key += 1
                survivors.append(segment)
        if not survivors:
            dup_of, score = first_match if first_match else (None, None)
            decisions.append(DedupDecision(record.id, False, dup_of, "segment", score))
            continue
        if removed:
            new_lines: list[str] = []
            for segment in survivors:
                new_lines.extend(segment.lines)
            content = "\n".join(new_lines)
            if record.content.endswith("\n"):
                content += "\n"
            rewritten = with_content(record, content)
            rewritten.fingerprints = record.fingerprints
            kept.append(rewritten)
            score = first_match[1] if first_match else None
            decisions.append(DedupDecision(record.id, True, None, "segment", score))
        else:
            kept.append(record)
            decisions.append(DedupDecision(record.id, True, None, "segment"))
    return kept, decisions
