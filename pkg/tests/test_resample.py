from __future__ import annotations

import pytest

from refinery.records import DropReason
from refinery.resample import (LanguageDistribution, ResamplePolicy,
                               compute_distribution, keep_decision,
                               render_distribution_table, resample)
from tests.conftest import make_record


def records_for(spec: list[tuple[str, str, int]]) -> list:
    """spec rows: (language, path, content bytes)."""
    out = []
    for i, (language, path, nbytes) in enumerate(spec):
        out.append(make_record("a" * nbytes, rid=i, path=path, language=language))
    return out


class TestComputeDistribution:
    def test_empty_corpus(self):
        dist = compute_distribution([])
        assert dist.total_files == 0
        assert dist.total_bytes == 0
        assert dist.per_language == {}

    def test_even_split_by_bytes(self):
        spec = [("java", f"a{i}.java", 100) for i in range(50)]
        spec += [("python", f"b{i}.py", 100) for i in range(50)]
        dist = compute_distribution(records_for(spec))
        assert dist.total_files == 100
        assert dist.per_language["java"].proportion == pytest.approx(0.5)
        assert dist.per_language["python"].proportion == pytest.approx(0.5)

    def test_proportions_sum_to_one(self):
        spec = [("java", "a.java", 123), ("python", "b.py", 456), ("go", "c.go", 78)]
        dist = compute_distribution(records_for(spec))
        assert sum(s.proportion for s in dist.per_language.values()) == pytest.approx(1.0, abs=1e-9)

    def test_rendering_descends_with_others_tail(self):
        spec = [("java", f"j{i}.java", 140) for i in range(100)]
        spec += [("python", f"p{i}.py", 123) for i in range(100)]
        spec += [("zig", "z.zig", 9)]  # tiny tail bucket
        table = render_distribution_table(compute_distribution(records_for(spec)))
        lines = table.split("\n")
        assert lines[1].startswith("java")
        assert lines[2].startswith("python")
        assert lines[-1].startswith("others")


class TestResample:
    def test_niche_language_fully_removed(self):
        # One language at 0.05% of bytes, below the 0.1% floor.
        spec = [("java", f"j{i}.java", 1999) for i in range(1000)]
        spec += [("zig", "z.zig", 1000)]
        records = records_for(spec)
        dist = compute_distribution(records)
        assert dist.per_language["zig"].proportion < 0.001
        drops: list[tuple[int, DropReason]] = []
        kept = list(resample(records, dist, ResamplePolicy(downsample={}), drops))
        assert all(r.language != "zig" for r in kept)
        assert (1000, DropReason.NICHE_LANGUAGE) in drops

    def test_identity_policy(self):
        records = records_for([("java", "a.java", 10), ("html", "b.html", 10)])
        dist = compute_distribution(records)
        policy = ResamplePolicy(min_proportion=0.0, downsample={"html": 1.0})
        assert list(resample(records, dist, policy)) == records

    def test_downsample_statistics_and_determinism(self):
        records = records_for([("html", f"h{i}.html", 50) for i in range(10_000)])
        dist = compute_distribution(records)
        policy = ResamplePolicy(downsample={"html": 0.5}, seed=42)
        kept_runs = [sum(1 for _ in resample(records, dist, policy)) for _ in range(3)]
        assert kept_runs[0] == kept_runs[1] == kept_runs[2]
        assert 4700 <= kept_runs[0] <= 5300

    def test_different_seeds_differ(self):
        records = records_for([("html", f"h{i}.html", 50) for i in range(2000)])
        dist = compute_distribution(records)
        kept_a = {r.id for r in resample(records, dist, ResamplePolicy(downsample={"html": 0.5}, seed=1))}
        kept_b = {r.id for r in resample(records, dist, ResamplePolicy(downsample={"html": 0.5}, seed=2))}
        assert kept_a != kept_b

    def test_order_preserved_and_subset(self):
        spec = [("java", f"a{i}.java", 60) for i in range(100)]
        spec += [("json", f"d{i}.json", 60) for i in range(100)]
        records = records_for(spec)
        dist = compute_distribution(records)
        kept = list(resample(records, dist, ResamplePolicy(downsample={"json": 0.3}, seed=9)))
        ids = [r.id for r in kept]
        assert ids == sorted(ids)
        assert set(ids) <= {r.id for r in records}

    def test_no_language_below_floor_survives(self):
        spec = [("java", f"a{i}.java", 2000) for i in range(500)]
        spec += [("lua", "tiny.lua", 300), ("zig", "t.zig", 400)]
        records = records_for(spec)
        dist = compute_distribution(records)
        kept = list(resample(records, dist, ResamplePolicy(downsample={})))
        surviving = {r.language for r in kept}
        for language in surviving:
            assert dist.per_language[language].proportion >= 0.001

    def test_keep_decision_rate_one_short_circuits(self):
        policy = ResamplePolicy()
        assert all(keep_decision(policy, i, 1.0) for i in range(100))

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            ResamplePolicy(downsample={"html": 0.0}).validate()
        with pytest.raises(ValueError):
            ResamplePolicy(min_proportion=1.0).validate()
