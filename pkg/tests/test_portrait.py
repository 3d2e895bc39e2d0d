from __future__ import annotations

import random

import pytest

from refinery.portrait import (PortraitReport, build_portrait, classify_module,
                               export_csv, size_bucket)
from tests.conftest import make_record


class TestClassifyModule:
    def test_test_segment(self):
        assert classify_module("src/test/java/FooTest.java") == "test"

    def test_dal_segment(self):
        assert classify_module("app/dal/UserDao.java") == "dal"

    def test_no_keyword(self):
        assert classify_module("src/main/Util.java") == "other"

    def test_priority_test_over_model(self):
        assert classify_module("model/test/Thing.java") == "test"

    def test_facade_and_model(self):
        assert classify_module("core/facade/Api.java") == "facade"
        assert classify_module("core/model/User.java") == "model"
        assert classify_module("core/models/user.py") == "model"

    def test_filename_conventions(self):
        assert classify_module("pkg/FooTest.java") == "test"
        assert classify_module("pkg/FooTests.java") == "test"
        assert classify_module("pkg/test_foo.py") == "test"
        assert classify_module("pkg/foo_test.go") == "test"

    def test_case_insensitive_segments(self):
        assert classify_module("src/TEST/x.java") == "test"


def test_size_buckets():
    assert size_bucket(1) == "<=50"
    assert size_bucket(50) == "<=50"
    assert size_bucket(51) == "<=200"
    assert size_bucket(200) == "<=200"
    assert size_bucket(1000) == "<=1000"
    assert size_bucket(1001) == ">1000"


def small_corpus(n_java: int, n_python: int) -> list:
    records = []
    for i in range(n_java):
        records.append(make_record("class A {}\n", rid=i, path=f"j/{i}.java",
                                   language="java"))
    for i in range(n_python):
        records.append(make_record("x = 1\n", rid=n_java + i, path=f"p/{i}.py",
                                   language="python"))
    return records


class TestBuildPortrait:
    def test_empty_corpus(self):
        report = build_portrait([])
        assert report.total_files == 0
        assert report.language_proportions() == {}
        assert report.quality_decile_counts() == {}

    def test_java_share_fixture(self):
        # 407 of 1000 files are java: proportion must land on 0.407.
        report = build_portrait(small_corpus(407, 593))
        assert report.language_proportions()["java"] == pytest.approx(0.407, abs=1e-3)

    def test_module_category_share(self):
        records = [make_record("x\n", rid=i, path=f"test/{i}.py", language="python")
                   for i in range(10)]
        records += [make_record("x\n", rid=10 + i, path=f"lib/{i}.py", language="python")
                    for i in range(90)]
        report = build_portrait(records)
        assert report.category_proportions()["test"] == pytest.approx(0.10)

    def test_each_record_in_exactly_one_bucket_per_dimension(self):
        report = build_portrait(small_corpus(30, 20))
        assert sum(report.language_counts.values()) == report.total_files
        assert sum(report.category_counts.values()) == report.total_files
        assert sum(report.size_counts.values()) == report.total_files

    def test_proportions_sum_to_one(self):
        report = build_portrait(small_corpus(13, 29))
        assert sum(report.language_proportions().values()) == pytest.approx(1.0, abs=1e-9)
        assert sum(report.category_proportions().values()) == pytest.approx(1.0, abs=1e-9)

    def test_quality_deciles_only_with_reports(self):
        records = small_corpus(4, 4)
        no_quality = build_portrait(records)
        assert no_quality.quality_decile_counts() == {}
        totals = {r.id: float(i) for i, r in enumerate(records)}
        with_quality = build_portrait(records, totals)
        deciles = with_quality.quality_decile_counts()
        assert sum(deciles.values()) == len(records)


class TestMergeLaw:
    def test_merge_equals_whole_on_random_splits(self):
        rng = random.Random(11)
        records = []
        for i in range(200):
            language = rng.choice(["java", "python", "go", "html"])
            path = rng.choice(["src", "test", "dal", "facade", "model", "lib"])
            body = "x = 1\n" * rng.randint(1, 1200)
            records.append(make_record(body, rid=i, path=f"{path}/f{i}.x",
                                       language=language))
        totals = {r.id: rng.uniform(0, 100) for r in records}
        for split_seed in range(5):
            split_rng = random.Random(split_seed)
            left, right = [], []
            for record in records:
                (left if split_rng.random() < 0.5 else right).append(record)
            merged = build_portrait(left, totals).merge(build_portrait(right, totals))
            whole = build_portrait(records, totals)
            assert merged.to_json() == whole.to_json()

    def test_merge_operator(self):
        a = build_portrait(small_corpus(3, 0))
        b = build_portrait(small_corpus(0, 5))
        assert (a | b).total_files == 8

    def test_merge_identity_on_empty(self):
        report = build_portrait(small_corpus(2, 2))
        merged = report.merge(PortraitReport())
        assert merged.to_json() == report.to_json()


def test_csv_export():
    report = build_portrait(small_corpus(2, 2))
    csv_text = export_csv(report, "language")
    assert csv_text.startswith("language,value\n")
    assert "java,0.5" in csv_text
    with pytest.raises(ValueError):
        export_csv(report, "nonsense")


def test_render_table_smoke():
    report = build_portrait(small_corpus(5, 5), {i: float(i) for i in range(10)})
    table = report.render_table()
    assert "language" in table and "module category" in table and "quality decile" in table
