from __future__ import annotations

import random
from collections import Counter

import pytest

from refinery.dedup import (DEFAULT_NEAR_THRESHOLD, DEFAULT_SEGMENT_THRESHOLD,
                            SimhashIndex, dedup_pass, dedup_segments, exact_key,
                            fingerprint_content, max_hamming_for, segment_split,
                            shingle_features, simhash, simhash_score, split_segments,
                            tokenize)
from refinery.hashing import hash64
from tests.conftest import make_record
from tests.md5_reference import md5_hex


class TestExactKey:
    def test_empty_string_against_reference(self):
        assert exact_key("") == md5_hex(b"") == "d41d8cd98f00b204e9800998ecf8427e"

    def test_fixtures_against_reference(self):
        for text in ("hello world\n", "def f():\n    pass\n", "中文注释 mixed ascii"):
            assert exact_key(text) == md5_hex(text.encode("utf-8"))

    def test_identical_contents_identical_digests(self):
        assert exact_key("same") == exact_key("same")

    def test_single_space_difference(self):
        a, b = "x = 1\n", "x =  1\n"
        assert exact_key(a) == md5_hex(a.encode())
        assert exact_key(b) == md5_hex(b.encode())
        assert exact_key(a) != exact_key(b)


class TestShingleFeatures:
    def test_short_text_single_feature(self):
        features = shingle_features("a b c d", k=5)  # 4 tokens
        assert sum(features.values()) == 1

    def test_window_count(self):
        text = " ".join(f"t{i}" for i in range(20))  # 20 distinct tokens
        features = shingle_features(text, k=5)
        assert sum(features.values()) == 20 - 4  # n - k + 1 sliding windows

    def test_tokenizer_boundaries(self):
        assert tokenize("foo_bar+1.5e3") == ["foo_bar", "+", "1.5e3"]
        assert tokenize("a&&b") == ["a", "&", "&", "b"]
        assert tokenize("   \n\t") == []

    def test_permuted_duplicate_lines_change_only_boundary_shingles(self):
        base = ["alpha beta gamma delta epsilon", "one two three four five",
                "alpha beta gamma delta epsilon"]
        permuted = [base[1], base[0], base[2]]
        f_base = shingle_features("\n".join(base), k=5)
        f_perm = shingle_features("\n".join(permuted), k=5)
        # Same multiset size; differences confined to window-crossing shingles.
        assert sum(f_base.values()) == sum(f_perm.values())
        shared = f_base & f_perm
        changed = sum((f_base - f_perm).values())
        assert changed > 0
        assert sum(shared.values()) > changed  # interior shingles agree

    def test_empty_input(self):
        assert shingle_features("") == Counter()
        with pytest.raises(ValueError):
            shingle_features("abc", k=0)


class TestSimhash:
    def test_single_feature_equals_hash64(self):
        assert simhash({"f": 1}) == hash64("f")
        assert simhash(Counter({"xyz": 1})) == hash64("xyz")

    def test_order_free(self):
        items = [(f"feat{i}", i + 1) for i in range(30)]
        forward = simhash(dict(items))
        backward = simhash(dict(reversed(items)))
        assert forward == backward

    def test_empty_maps_to_zero(self):
        assert simhash(Counter()) == 0

    def test_int_keys_used_directly(self):
        assert simhash({hash64("f"): 1}) == simhash({"f": 1})

    def test_near_identical_documents_score_high(self):
        # 1000-token fixture with a realistic identifier vocabulary; one token
        # edited. Frozen seed; score verified by direct computation.
        tokens = _thousand_tokens(seed=1)
        edited = list(tokens)
        edited[500] = "MUTATED"
        a = fingerprint_content(" ".join(tokens))
        b = fingerprint_content(" ".join(edited))
        assert simhash_score(a, b) >= 0.95


class TestSimhashScore:
    def test_identity(self):
        assert simhash_score(12345, 12345) == 1.0

    def test_bitwise_not(self):
        a = 0x0123456789ABCDEF
        assert simhash_score(a, ~a & ((1 << 64) - 1)) == 0.0

    def test_three_bit_difference(self):
        a = 0
        b = 0b10100001
        assert simhash_score(a, b) == 1 - 3 / 64 == 0.953125

    def test_symmetry(self):
        rng = random.Random(0)
        for _ in range(50):
            a = rng.getrandbits(64)
            b = rng.getrandbits(64)
            assert simhash_score(a, b) == simhash_score(b, a)
            assert simhash_score(a, a) == 1.0


class TestBanding:
    def test_band_layout_at_default_threshold(self):
        index = SimhashIndex(0.95)
        assert index.max_hamming == 3
        assert len(index._bands) == 4
        assert all(mask == (1 << 16) - 1 for _, mask in index._bands)

    def test_max_hamming_values(self):
        assert max_hamming_for(1.0) == 0
        assert max_hamming_for(0.95) == 3
        assert max_hamming_for(0.90) == 6
        assert max_hamming_for(0.953125) == 3

    @pytest.mark.parametrize("threshold", [0.95, 0.90])
    def test_no_recall_loss_vs_exhaustive(self, threshold):
        """Every within-budget pair is found through the band buckets."""
        rng = random.Random(7)
        index = SimhashIndex(threshold)
        stored: list[tuple[int, int]] = []
        for key in range(300):
            fp = rng.getrandbits(64)
            index.add(key, fp)
            stored.append((key, fp))
        for _ in range(300):
            base_key = rng.randrange(len(stored))
            fp = stored[base_key][1]
            flips = rng.sample(range(64), rng.randint(0, 10))
            probe = fp
            for bit in flips:
                probe ^= 1 << bit
            expected = sorted(k for k, stored_fp in stored
                              if simhash_score(probe, stored_fp) >= threshold)
            found = sorted(k for k, _ in index.query(probe))
            assert found == expected


def _thousand_tokens(seed: int) -> list[str]:
    rng = random.Random(seed)
    vocab = [f"name{i}" for i in range(200)] + ["def", "return", "if", "for",
                                                "(", ")", ":", "="]
    return [vocab[rng.randrange(len(vocab))] for _ in range(1000)]


def corpus(contents: list[str], language: str = "python") -> list:
    return [make_record(c, rid=i, path=f"f{i}.py", language=language)
            for i, c in enumerate(contents)]


class TestDedupPass:
    def test_exact_keep_first(self):
        records = corpus(["same\n", "same\n", "same\n"])
        kept, decisions = dedup_pass(records, "exact")
        assert [r.id for r in kept] == [0]
        dropped = {d.id: d for d in decisions if not d.kept}
        assert dropped[1].duplicate_of == 0 and dropped[2].duplicate_of == 0
        assert all(d.granularity == "exact" for d in decisions)

    def test_unique_stream_unchanged(self):
        records = corpus([f"unique {i}\n" for i in range(10)])
        kept, _ = dedup_pass(records, "exact")
        assert [r.id for r in kept] == list(range(10))

    def test_idempotence(self):
        records = corpus(["a\n", "a\n", "b\n", "c\n", "b\n"])
        once, _ = dedup_pass(records, "exact")
        twice, _ = dedup_pass(once, "exact")
        assert [r.id for r in twice] == [r.id for r in once]

    def test_near_duplicate_dropped(self):
        tokens = _thousand_tokens(seed=3)
        edited = list(tokens)
        edited[100] = "changed"
        records = corpus([" ".join(tokens), " ".join(edited), "different text entirely\n"])
        kept, decisions = dedup_pass(records, "near_file", threshold=0.95)
        assert [r.id for r in kept] == [0, 2]
        drop = next(d for d in decisions if not d.kept)
        assert drop.id == 1 and drop.duplicate_of == 0
        assert drop.score is not None and drop.score >= 0.95

    def test_near_idempotence_and_decisions_complete(self):
        records = corpus([f"text number {i} with words\n" for i in range(8)])
        kept, decisions = dedup_pass(records, "near_file")
        assert len(decisions) == len(records)
        again, _ = dedup_pass(kept, "near_file")
        assert [r.id for r in again] == [r.id for r in kept]

    def test_output_subset_of_input(self):
        records = corpus(["x\n"] * 4 + ["y\n"] * 3)
        kept, _ = dedup_pass(records, "exact")
        input_ids = {r.id for r in records}
        assert all(r.id in input_ids for r in kept)
        assert len(kept) <= len(records)

    def test_fingerprints_filled(self):
        records = corpus(["alpha beta\n", "gamma delta\n"])
        dedup_pass(records, "exact")
        assert all(r.fingerprints.exact for r in records)
        dedup_pass(records, "near_file")
        assert all(r.fingerprints.simhash is not None for r in records)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            dedup_pass([], "fuzzy")


PY_MIXED = '''\
# License header line one
# license continues here

def first(x):
    return x + 1

"""
Block comment one describing the module internals
in a couple of lines.
"""

def second(y):
    return y * 2

"""
Block comment two, different from the first.
"""
'''


class TestSegmentSplit:
    def test_only_comments(self):
        record = make_record("# a\n# b\n\n# c\n", language="python")
        code, comments = segment_split(record)
        assert code == []
        assert len(comments) == 2  # blank line breaks the comment run

    def test_no_comments(self):
        record = make_record("x = 1\ny = 2\n", language="python")
        code, comments = segment_split(record)
        assert comments == []
        assert len(code) == 1

    def test_two_block_comments_and_reassembly(self):
        record = make_record(PY_MIXED, language="python")
        segments = split_segments(record)
        comment_segments = [s for s in segments if s.kind == "comment"]
        assert len(comment_segments) == 3  # line-comment header + two blocks
        blocks = [s for s in comment_segments if '"""' in s.text]
        assert len(blocks) == 2
        reassembled: list[str] = []
        for segment in segments:
            reassembled.extend(segment.lines)
        assert "\n".join(reassembled) + "\n" == PY_MIXED

    def test_code_chunking_at_blank_lines(self):
        paragraphs = []
        for p in range(10):
            paragraphs.append("\n".join(f"stmt_{p}_{i} = {i}" for i in range(30)))
        record = make_record("\n\n".join(paragraphs) + "\n", language="python")
        code, _ = segment_split(record)
        assert all(len(c.split("\n")) <= 100 for c in code)
        assert len(code) > 1

    def test_unsupported_language_single_segment(self):
        record = make_record("whatever content\n", language="other")
        code, comments = segment_split(record)
        assert comments == [] and len(code) == 1

    def test_empty_file(self):
        record = make_record("", language="python")
        assert segment_split(record) == ([], [])


HEADER = "\n".join(f"// license line {i} all rights reserved forever" for i in range(200))


def file_with_header(body_seed: int) -> str:
    rng = random.Random(body_seed)
    body = "\n".join(
        f"int value_{body_seed}_{i} = {rng.randrange(10_000)};" for i in range(30)
    )
    return f"{HEADER}\n\nint main_{body_seed}() {{\n{body}\nreturn 0;\n}}\n"


class TestDedupSegments:
    def test_no_repeats_content_identical(self):
        records = corpus(["def a():\n    return 1\n", "def b():\n    return 2\n"])
        kept, _ = dedup_segments(records)
        assert [r.content for r in kept] == [r.content for r in records]

    def test_shared_header_survives_once(self):
        records = [make_record(file_with_header(i), rid=i, path=f"f{i}.c", language="c")
                   for i in range(5)]
        kept, decisions = dedup_segments(records)
        assert len(kept) == 5  # files survive, header does not
        header_hits = sum(1 for r in kept if "license line 7" in r.content)
        assert header_hits == 1
        assert kept[0].content != records[0].content or all(
            "license line 7" not in r.content for r in kept[1:])
        rewritten = [d for d in decisions if d.kept and d.score is not None]
        assert len(rewritten) == 4

    def test_file_of_only_seen_segments_dropped(self):
        records = [
            make_record(HEADER + "\n\nint x = 1;\n", rid=0, path="a.c", language="c"),
            make_record(HEADER + "\n", rid=1, path="b.c", language="c"),
        ]
        kept, decisions = dedup_segments(records)
        assert [r.id for r in kept] == [0]
        drop = next(d for d in decisions if not d.kept)
        assert drop.id == 1 and drop.duplicate_of == 0
        assert drop.score is not None and drop.score >= DEFAULT_SEGMENT_THRESHOLD

    def test_stats_recomputed_on_rewrite(self):
        records = [make_record(file_with_header(i), rid=i, path=f"f{i}.c", language="c")
                   for i in range(2)]
        kept, _ = dedup_segments(records)
        for r in kept:
            assert r.byte_size == len(r.content.encode("utf-8"))

    def test_determinism(self):
        def build():
            return [make_record(file_with_header(i), rid=i, path=f"f{i}.c", language="c")
                    for i in range(4)]

        kept1, dec1 = dedup_segments(build())
        kept2, dec2 = dedup_segments(build())
        assert [r.content for r in kept1] == [r.content for r in kept2]
        assert dec1 == dec2
