from __future__ import annotations

import pytest

from refinery.ingest import compute_text_stats
from refinery.langinfo import detect_language
from refinery.records import FileRecord


def make_record(
    content: str,
    rid: int = 0,
    path: str = "src/file.py",
    repo: str = "repo",
    language: str | None = None,
) -> FileRecord:
    return FileRecord(
        id=rid,
        repo=repo,
        path=path,
        language=language if language is not None else detect_language(path, content),
        content=content,
        byte_size=len(content.encode("utf-8")),
        stats=compute_text_stats(content),
    )


@pytest.fixture
def record_factory():
    return make_record
