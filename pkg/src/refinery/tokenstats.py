"""Byte-level BPE training, encoding, and compression-rate reporting.

The base alphabet is the 256 byte values, so encoding is total and
decode(encode(x)) == x for any text with no out-of-vocabulary escape hatch
needed. Training iteratively merges the most frequent adjacent pair inside
whitespace/word/punctuation chunks, with lexicographic tie-breaking for
determinism. The compression rate of an encoding is tokens per character,
lower is better.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .records import FileRecord

logger = logging.getLogger(__name__)

DEFAULT_SPECIAL_TOKENS = ("<|im_start|>", "<|im_end|>")
ALPHABET_SIZE = 256

# Pair statistics never cross these chunk boundaries: runs of whitespace,
# word characters, or punctuation.
_CHUNK_RE = re.compile(r"\s+|\w+|[^\w\s]+")


def _byte_to_unicode() -> dict[int, str]:
    """Readable printable stand-ins for all 256 bytes (GPT-2 convention)."""
    printable = list(range(ord("!"), ord("~") + 1)) \
        + list(range(0xA1, 0xAD)) + list(range(0xAE, 0x100))
    mapping = {b: chr(b) for b in printable}
    shift = 0
    for b in range(256):
        if b not in mapping:
            mapping[b] = chr(256 + shift)
            shift += 1
    return mapping


_BYTE_TO_UNICODE = _byte_to_unicode()
_UNICODE_TO_BYTE = {c: b for b, c in _BYTE_TO_UNICODE.items()}


def render_token(token: bytes) -> str:
    return "".join(_BYTE_TO_UNICODE[b] for b in token)


def unrender_token(text: str) -> bytes:
    return bytes(_UNICODE_TO_BYTE[c] for c in text)


@dataclass
class BpeVocab:
    merges: list[tuple[bytes, bytes]] = field(default_factory=list)
    special_tokens: list[str] = field(default_factory=lambda: list(DEFAULT_SPECIAL_TOKENS))
    token_bytes: dict[int, bytes] = field(default_factory=dict, init=False)  # id -> bytes
    token_to_id: dict[bytes, int] = field(default_factory=dict, init=False)
    special_ids: dict[str, int] = field(default_factory=dict, init=False)
    merge_ranks: dict[tuple[int, int], int] = field(default_factory=dict, init=False)
    _merge_new_id: dict[tuple[int, int], int] = field(default_factory=dict, init=False)
    _encode_cache: dict[bytes, tuple[int, ...]] = field(default_factory=dict, init=False,
                                                        repr=False)

    def __post_init__(self) -> None:
        self._rebuild()

    def _rebuild(self) -> None:
        self.token_bytes = {i: bytes([i]) for i in range(ALPHABET_SIZE)}
        self.token_to_id = {bytes([i]): i for i in range(ALPHABET_SIZE)}
        self.merge_ranks = {}
        self._merge_new_id = {}
        next_id = ALPHABET_SIZE
        for rank, (left, right) in enumerate(self.merges):
            merged = left + right
            pair = (self.token_to_id[left], self.token_to_id[right])
            self.token_bytes[next_id] = merged
            self.token_to_id[merged] = next_id
            self.merge_ranks[pair] = rank
            self._merge_new_id[pair] = next_id
            next_id += 1
        self.special_ids = {}
        for tok in self.special_tokens:
            self.special_ids[tok] = next_id
            next_id += 1
        self._special_re = (
            re.compile("(" + "|".join(re.escape(t) for t in self.special_tokens) + ")")
            if self.special_tokens else None
        )
        self._encode_cache = {}

    @property
    def size(self) -> int:
        return len(self.token_bytes) + len(self.special_ids)

    def save(self, directory: str | Path) -> None:
        """Write merges.txt (one pair per line) and vocab.json (token -> id)."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "merges.txt", "w", encoding="utf-8") as f:
            for left, right in self.merges:
                f.write(f"{render_token(left)} {render_token(right)}\n")
        token_map: dict[str, int] = {render_token(b): i for i, b in self.token_bytes.items()}
        token_map.update(self.special_ids)
        with open(directory / "vocab.json", "w", encoding="utf-8") as f:
            json.dump({"tokens": token_map, "special_tokens": self.special_tokens},
                      f, ensure_ascii=False, indent=1)
            f.write("\n")

    @classmethod
    def load(cls, directory: str | Path) -> "BpeVocab":
        directory = Path(directory)
        with open(directory / "vocab.json", "r", encoding="utf-8") as f:
            meta = json.load(f)
        merges: list[tuple[bytes, bytes]] = []
        with open(directory / "merges.txt", "r", encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                left, right = line.split(" ")
                merges.append((unrender_token(left), unrender_token(right)))
        return cls(merges=merges, special_tokens=list(meta["special_tokens"]))


def train_bpe(
    corpus: Iterable[str],
    vocab_size: int,
    special_tokens: Iterable[str] = DEFAULT_SPECIAL_TOKENS,
) -> BpeVocab:
    """Train byte-level BPE until vocab_size is reached or no pair repeats.

    The most frequent adjacent pair merges each step; ties break toward the
    lexicographically smallest (left bytes, right bytes) pair. Special tokens
    reserve ids and are never produced by merges.
    """
    specials = list(special_tokens)
    num_merges = vocab_size - ALPHABET_SIZE - len(specials)
    if num_merges < 1:
        raise ValueError(
            f"vocab_size {vocab_size} must exceed alphabet ({ALPHABET_SIZE}) "
            f"+ special tokens ({len(specials)})"
        )

    words: Counter[tuple[int, ...]] = Counter()
    for text in corpus:
        for chunk in _CHUNK_RE.findall(text):
            words[tuple(chunk.encode("utf-8"))] += 1

    token_bytes: dict[int, bytes] = {i: bytes([i]) for i in range(ALPHABET_SIZE)}
    special_bytes = {t.encode("utf-8") for t in specials}
    merges: list[tuple[bytes, bytes]] = []

    pair_counts: Counter[tuple[int, int]] = Counter()
    pair_words: dict[tuple[int, int], set[tuple[int, ...]]] = {}
    for word, freq in words.items():
        for pair in zip(word, word[1:]):
            pair_counts[pair] += freq
            pair_words.setdefault(pair, set()).add(word)

    def merge_word(word: tuple[int, ...], pair: tuple[int, int], new_id: int) -> tuple[int, ...]:
        out: list[int] = []
        i = 0
        while i < len(word):
            if i + 1 < len(word) and word[i] == pair[0] and word[i + 1] == pair[1]:
                out.append(new_id)
                i += 2
            else:
                out.append(word[i])
                i += 1
        return tuple(out)

    next_id = ALPHABET_SIZE
    while next_id - ALPHABET_SIZE < num_merges:
        best: tuple[int, int] | None = None
        best_count = 1  # require a repeated pair
        best_key: tuple[bytes, bytes] | None = None
        for pair, count in pair_counts.items():
            if count < best_count:
                continue
            key = (token_bytes[pair[0]], token_bytes[pair[1]])
            if count > best_count or (best_key is not None and key < best_key):
                best, best_count, best_key = pair, count, key
        if best is None:
            break
        merged_bytes = best_key[0] + best_key[1]
        if merged_bytes in special_bytes:
            # Reserved literal; never mint it as a merge. Drop the pair from
            # contention and pick again for the same slot.
            del pair_counts[best]
            pair_words.pop(best, None)
            continue
        token_bytes[next_id] = merged_bytes
        merges.append(best_key)

        affected = pair_words.pop(best, set())
        pair_counts.pop(best, None)
        for word in affected:
            freq = words.pop(word, 0)
            if freq == 0:
                continue
            for pair in zip(word, word[1:]):
                pair_counts[pair] -= freq
                if pair_counts[pair] <= 0:
                    del pair_counts[pair]
                ws = pair_words.get(pair)
                if ws is not None:
                    ws.discard(word)
                    if not ws:
                        pair_words.pop(pair, None)
            new_word = merge_word(word, best, next_id)
            words[new_word] += freq
            for pair in zip(new_word, new_word[1:]):
                pair_counts[pair] += freq
                pair_words.setdefault(pair, set()).add(new_word)
        next_id += 1

    return BpeVocab(merges=merges, special_tokens=specials)


def _encode_chunk(vocab: BpeVocab, chunk: bytes) -> tuple[int, ...]:
    cached = vocab._encode_cache.get(chunk)
    if cached is not None:
        return cached
    ids = list(chunk)
    ranks = vocab.merge_ranks
    while len(ids) >= 2:
        best_rank = None
        best_pair = None
        for pair in zip(ids, ids[1:]):
            rank = ranks.get(pair)
            if rank is not None and (best_rank is None or rank < best_rank):
                best_rank = rank
                best_pair = pair
        if best_pair is None:
            break
        new_id = vocab._merge_new_id[best_pair]
        out: list[int] = []
        i = 0
        while i < len(ids):
            if i + 1 < len(ids) and ids[i] == best_pair[0] and ids[i + 1] == best_pair[1]:
                out.append(new_id)
                i += 2
            else:
                out.append(ids[i])
                i += 1
        ids = out
    result = tuple(ids)
    if len(vocab._encode_cache) < (1 << 20):
        vocab._encode_cache[chunk] = result
    return result


def encode(text: str, vocab: BpeVocab) -> list[int]:
    """Apply merges greedily by priority over the byte-level segmentation.

    Special tokens are matched first as atomic units and always encode to
    their single reserved id.
    """
    ids: list[int] = []
    pieces = vocab._special_re.split(text) if vocab._special_re else [text]
    for piece in pieces:
        if not piece:
            continue
        special_id = vocab.special_ids.get(piece)
        if special_id is not None:
            ids.append(special_id)
            continue
        for chunk in _CHUNK_RE.findall(piece):
            ids.extend(_encode_chunk(vocab, chunk.encode("utf-8")))
    return ids


def decode(ids: Iterable[int], vocab: BpeVocab) -> str:
    """Inverse of encode; total over valid ids."""
    specials_by_id = {i: t for t, i in vocab.special_ids.items()}
    parts: list[bytes] = []
    for token_id in ids:
        data = vocab.token_bytes.get(token_id)
        if data is not None:
            parts.append(data)
            continue
        literal = specials_by_id.get(token_id)
        if literal is None:
            raise ValueError(f"unknown token id: {token_id}")
        parts.append(literal.encode("utf-8"))
    return b"".join(parts).decode("utf-8", errors="replace")


def compression_rate(token_count: int, char_count: int) -> float:
    """Tokens per character; the lower the better."""
    if char_count <= 0:
        raise ValueError("char_count must be positive")
    return token_count / char_count


@dataclass
class CompressionRow:
    characters: int
    tokens: int

    @property
    def c_rate(self) -> float:
        return compression_rate(self.tokens, self.characters)


@dataclass
class CompressionReport:
    rows: dict[str, CompressionRow] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            bucket: {"characters": row.characters, "tokens": row.tokens,
                     "c_rate": row.c_rate}
            for bucket, row in sorted(self.rows.items())
        }

    def render_table(self) -> str:
        header = ("type", "#characters", "#tokens", "c-rate")
        body = [
            (bucket, str(row.characters), str(row.tokens), f"{row.c_rate:.4f}")
            for bucket, row in sorted(self.rows.items())
        ]
        table = [header] + body
        widths = [max(len(r[i]) for r in table) for i in range(4)]
        return "\n".join(
            "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
            for row in table
        )


def corpus_compression_report(
    records: Iterable[FileRecord],
    vocab: BpeVocab,
    buckets: Mapping[int, str],
) -> CompressionReport:
    """Character and token totals per corpus-type bucket; empty buckets omitted.

    Characters are Unicode scalar values; bucket rates are Σtokens/Σchars,
    never a mean of per-file rates.
    """
    totals: dict[str, CompressionRow] = {}
    for record in records:
        bucket = buckets.get(record.id)
        if bucket is None:
            logger.debug("compression report: record %d has no bucket, skipped", record.id)
            continue
        row = totals.setdefault(bucket, CompressionRow(0, 0))
        row.characters += len(record.content)
        row.tokens += len(encode(record.content, vocab))
    return CompressionReport(rows={b: r for b, r in totals.items() if r.characters > 0})
