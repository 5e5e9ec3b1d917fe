"""JSONL IO, sampling, splitting, and reverse-pair construction."""

from __future__ import annotations

import json
import math
from fractions import Fraction

import numpy as np
import pytest

from rewrite_again.corpus import (
    AlignedPair,
    ReversePair,
    TextRecord,
    build_reverse_pairs,
    load_aligned,
    load_jsonl,
    load_reverse_pairs,
    sample_public_corpus,
    save_aligned,
    save_jsonl,
    save_reverse_pairs,
    split_dataset,
)
from rewrite_again.errors import DataValidationError, InvalidArgumentError


def records(n, prefix="r"):
    return [
        TextRecord(id=f"{prefix}{i:03d}", text=f"text number {i}", attributes={"k": i % 3})
        for i in range(n)
    ]


class TestJsonlRoundTrip:
    def test_records(self, tmp_path):
        original = records(3)
        path = save_jsonl(original, tmp_path / "data.jsonl")
        assert load_jsonl(path) == original

    def test_malformed_line_names_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "a", "text": "ok"}\n{oops\n')
        with pytest.raises(DataValidationError, match="line 2"):
            load_jsonl(path)

    def test_duplicate_id_names_id(self, tmp_path):
        path = tmp_path / "dup.jsonl"
        path.write_text('{"id": "a", "text": "x"}\n{"id": "a", "text": "y"}\n')
        with pytest.raises(DataValidationError, match="'a'"):
            load_jsonl(path)

    def test_empty_text_rejected(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text('{"id": "a", "text": "   "}\n')
        with pytest.raises(DataValidationError, match="empty"):
            load_jsonl(path)

    def test_attributes_must_be_object(self, tmp_path):
        path = tmp_path / "attrs.jsonl"
        path.write_text('{"id": "a", "text": "x", "attributes": [1]}\n')
        with pytest.raises(DataValidationError, match="attributes"):
            load_jsonl(path)


class TestAlignedIO:
    def pair(self, i, error=None):
        return AlignedPair(
            id=f"p{i}",
            original=f"orig {i}",
            rewritten=f"rewr {i}",
            mechanism="dp-prompt",
            epsilon=137.5,
            granularity="word_level",
            tokens_generated=i,
            error=error,
        )

    def test_round_trip_with_error_marker(self, tmp_path):
        pairs = [self.pair(0), self.pair(1, error="Boom: no")]
        path = save_aligned(pairs, tmp_path / "aligned.jsonl")
        assert load_aligned(path) == pairs

    def test_field_order_is_fixed(self, tmp_path):
        path = save_aligned([self.pair(2)], tmp_path / "aligned.jsonl")
        keys = list(json.loads(path.read_text().splitlines()[0]).keys())
        assert keys == [
            "id", "original", "rewritten", "mechanism",
            "epsilon", "granularity", "tokens_generated",
        ]

    def test_validates_epsilon_and_granularity(self, tmp_path):
        path = tmp_path / "aligned.jsonl"
        row = self.pair(0).to_json_dict()
        row["epsilon"] = -3
        path.write_text(json.dumps(row) + "\n")
        with pytest.raises(DataValidationError, match="epsilon"):
            load_aligned(path)
        row = self.pair(0).to_json_dict()
        row["granularity"] = "sentence_level"
        path.write_text(json.dumps(row) + "\n")
        with pytest.raises(DataValidationError, match="granularity"):
            load_aligned(path)

    def test_reverse_pairs_round_trip(self, tmp_path):
        pairs = [ReversePair(id="a", source="s", target="t")]
        path = save_reverse_pairs(pairs, tmp_path / "rev.jsonl")
        assert load_reverse_pairs(path) == pairs


class TestSampling:
    def test_same_seed_same_sample(self):
        pool = records(50)
        assert sample_public_corpus(pool, 10, seed=3) == sample_public_corpus(pool, 10, seed=3)

    def test_different_seeds_differ(self):
        pool = records(50)
        a = sample_public_corpus(pool, 10, seed=3)
        b = sample_public_corpus(pool, 10, seed=4)
        assert {r.id for r in a} != {r.id for r in b}

    def test_full_sample_is_id_preserving(self):
        pool = records(20)
        out = sample_public_corpus(pool, 20, seed=1)
        assert {r.id for r in out} == {r.id for r in pool}

    def test_oversample_rejected(self):
        with pytest.raises(InvalidArgumentError):
            sample_public_corpus(records(5), 6, seed=1)

    def test_without_replacement(self):
        out = sample_public_corpus(records(30), 15, seed=9)
        ids = [r.id for r in out]
        assert len(set(ids)) == len(ids) == 15


class TestSplit:
    def test_default_is_90_10_seed_42(self):
        split = split_dataset(records(100))
        assert split.ratio == 0.9 and split.seed == 42
        assert len(split.train) == 90 and len(split.validation) == 10

    def test_floor_rule_fraction_oracle(self):
        # oracle: exact rational floor, immune to float products like 0.7*10=6.999...
        gen = np.random.default_rng(77)
        ratios = ["0.9", "0.7", "0.5", "0.25", "0.6"]
        for _ in range(200):
            n = int(gen.integers(2, 400))
            ratio = ratios[int(gen.integers(0, len(ratios)))]
            expected = math.floor(Fraction(ratio) * n)
            if expected == 0 or expected == n:
                continue
            split = split_dataset(records(n), ratio=float(ratio), seed=int(gen.integers(0, 999)))
            assert len(split.train) == expected
            assert len(split.validation) == n - expected

    def test_partition_property(self):
        recs = records(123)
        split = split_dataset(recs, ratio=0.7, seed=5)
        train_ids, val_ids = split.train_ids, split.validation_ids
        assert train_ids.isdisjoint(val_ids)
        assert train_ids | val_ids == {r.id for r in recs}

    def test_reference_count_29490(self):
        split = split_dataset(records(29490), ratio=0.9, seed=42)
        assert len(split.train) == 26541
        assert len(split.validation) == 2949

    def test_same_seed_same_partition(self):
        recs = records(60)
        a = split_dataset(recs, ratio=0.9, seed=42)
        b = split_dataset(recs, ratio=0.9, seed=42)
        assert a.train_ids == b.train_ids

    def test_rejects_degenerate_inputs(self):
        with pytest.raises(InvalidArgumentError):
            split_dataset(records(1))
        with pytest.raises(InvalidArgumentError):
            split_dataset(records(10), ratio=1.0)
        with pytest.raises(InvalidArgumentError):
            split_dataset(records(3), ratio=0.01)


class TestReversePairs:
    def aligned(self, i, rewritten=None, error=None):
        return AlignedPair(
            id=f"a{i}",
            original=f"orig {i}",
            rewritten=f"rewr {i}" if rewritten is None else rewritten,
            mechanism="dp-prompt",
            epsilon=206.0,
            granularity="word_level",
            tokens_generated=2,
            error=error,
        )

    def test_definition(self):
        pairs, skipped = build_reverse_pairs(
            [AlignedPair("x", "a", "b", "dp-prompt", 206.0, "word_level", 1)]
        )
        assert skipped == 0
        assert pairs == [ReversePair(id="x", source="b", target="a")]

    def test_count_preserved(self):
        pairs, skipped = build_reverse_pairs([self.aligned(i) for i in range(100)])
        assert len(pairs) == 100 and skipped == 0

    def test_error_and_empty_skipped(self):
        aligned = [self.aligned(0), self.aligned(1, error="failed"), self.aligned(2, rewritten="  ")]
        pairs, skipped = build_reverse_pairs(aligned)
        assert [p.id for p in pairs] == ["a0"]
        assert skipped == 2

    def test_bijective_join(self):
        aligned = [self.aligned(i) for i in range(50)]
        pairs, _ = build_reverse_pairs(aligned)
        by_id = {a.id: a for a in aligned}
        assert len(pairs) == len({p.id for p in pairs})
        for p in pairs:
            assert p.source == by_id[p.id].rewritten
            assert p.target == by_id[p.id].original
