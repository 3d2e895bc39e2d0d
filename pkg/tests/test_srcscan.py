from __future__ import annotations

from refinery.records import FileRecord, TextStats, read_records, write_records
from refinery.srcscan import (classify_lines, line_starts, mask_strings_and_comments,
                              offset_to_line)
from tests.conftest import make_record


class TestClassifyLines:
    def test_python_kinds(self):
        text = "# comment\n\nx = 1\n'''\ndoc block\n'''\ny = 2  # trailing\n"
        assert classify_lines(text, "python") == [
            "comment", "blank", "code", "comment", "comment", "comment", "code"]

    def test_c_block_comment_spans_lines(self):
        text = "/* one\n   two */\nint x;\n"
        assert classify_lines(text, "c") == ["comment", "comment", "code"]

    def test_unsupported_language_all_code(self):
        assert classify_lines("a\n\nb\n", "other") == ["code", "blank", "code"]

    def test_html_comments(self):
        text = "<!-- note\nstill note -->\n<div>x</div>\n"
        assert classify_lines(text, "html") == ["comment", "comment", "code"]


class TestMasking:
    def test_strings_blanked_offsets_stable(self):
        text = 'call("if (x) { bad }");\nreal();\n'
        masked = mask_strings_and_comments(text, "c")
        assert len(masked.masked) == len(text)
        assert "if (x)" not in masked.masked
        assert "real();" in masked.masked
        assert masked.string_count == 1

    def test_comment_containing_quote(self):
        text = "// it's commented\nint x = 1;\n"
        masked = mask_strings_and_comments(text, "c")
        assert masked.string_count == 0
        assert "int x = 1;" in masked.masked

    def test_string_containing_comment_marker(self):
        text = 's = "no // comment here"\nt = 1\n'
        masked = mask_strings_and_comments(text, "python")
        assert masked.string_count == 1
        assert "t = 1" in masked.masked

    def test_newlines_preserved_in_masked_regions(self):
        text = '"""doc\nspans\nlines"""\nx = 1\n'
        masked = mask_strings_and_comments(text, "python")
        assert masked.masked.count("\n") == text.count("\n")

    def test_unsupported_language_untouched(self):
        text = "anything at all\n"
        assert mask_strings_and_comments(text, "other").masked == text


def test_line_starts_and_offset_lookup():
    text = "ab\ncde\n\nf"
    starts = line_starts(text)
    assert starts == [0, 3, 7, 8]
    assert offset_to_line(starts, 0) == 0
    assert offset_to_line(starts, 4) == 1
    assert offset_to_line(starts, 7) == 2
    assert offset_to_line(starts, 8) == 3


def test_record_jsonl_round_trip(tmp_path):
    records = [make_record("x = 1\n", rid=3, path="a/b.py", repo="demo"),
               make_record("中文内容\n", rid=4, path="c.md", language="markdown")]
    path = tmp_path / "records.jsonl"
    assert write_records(path, records) == 2
    loaded = list(read_records(path))
    assert loaded == records
    assert isinstance(loaded[0].stats, TextStats)
