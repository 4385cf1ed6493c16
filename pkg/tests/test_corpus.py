"""Corpus tests: ingestion, pair generation, splits, JSONL, synthesis."""

import json
from collections import Counter

import pytest

from conftest import elf_bytes, pe_bytes

from binsbom.binscan import DEFAULT_VERSION_PATTERN, filter_version_strings, ExtractedString
from binsbom.corpus import (
    LabeledPair,
    SplitMode,
    SplitSpec,
    VersionStringRecord,
    ingest_package,
    load_jsonl,
    load_pairs_jsonl,
    load_records_jsonl,
    make_pairs,
    save_jsonl,
    split_random,
    split_zero_shot,
    synth_corpus,
)
from binsbom.errors import (
    InsufficientClasses,
    InsufficientProducts,
    MalformedLine,
    MetadataMismatch,
)


def _record(product, version_string, version="1.0"):
    return VersionStringRecord(product, f"{product}-{version}", version, version_string)


class TestRecordInvariants:
    def test_version_must_be_substring_of_package(self):
        with pytest.raises(ValueError):
            VersionStringRecord("zlib", "zlib-1.2.13", "9.9", "1.2.13")

    def test_product_must_be_normalized(self):
        with pytest.raises(ValueError):
            VersionStringRecord("Zlib", "Zlib-1.0", "1.0", "x 1.0")
        with pytest.raises(ValueError):
            VersionStringRecord("", "-1.0", "1.0", "x 1.0")

    def test_pair_label_domain(self):
        with pytest.raises(ValueError):
            LabeledPair("zlib", "zlib 1.0", 2)


class TestIngestPackage:
    def test_records_from_candidates(self):
        files = [("usr/lib/libz.so", elf_bytes(b"1.2.13\x00inflate 1.2.13\x00junk\x00"))]
        records = ingest_package(files, "zlib", "zlib-1.2.13", "1.2.13")
        assert [r.version_string for r in records] == ["1.2.13", "inflate 1.2.13"]
        assert all(r.product == "zlib" and r.version == "1.2.13" for r in records)

    def test_no_candidates(self):
        files = [("a.bin", elf_bytes(b"no versions here\x00"))]
        assert ingest_package(files, "zlib", "zlib-1.2.13", "1.2.13") == []

    def test_metadata_mismatch(self):
        with pytest.raises(MetadataMismatch):
            ingest_package([], "zlib", "zlib-1.2.13", "9.9")

    def test_duplicates_collapse(self):
        payload = elf_bytes(b"1.2.13\x00")
        files = [("a", payload), ("b", payload)]
        records = ingest_package(files, "zlib", "zlib-1.2.13", "1.2.13")
        assert len(records) == 1

    def test_product_is_normalized(self):
        files = [("a", elf_bytes(b"1.2.13\x00"))]
        records = ingest_package(files, "  ZLib ", "zlib-1.2.13", "1.2.13")
        assert records[0].product == "zlib"

    def test_unknown_format_files_are_skipped(self):
        files = [("a", b"1.2.13\x00not elf or pe")]
        assert ingest_package(files, "zlib", "zlib-1.2.13", "1.2.13") == []

    def test_pe_files_are_ingested(self):
        files = [("z.dll", pe_bytes(b"\x00zlib1.dll 1.2.13\x00"))]
        records = ingest_package(files, "zlib", "zlib-1.2.13", "1.2.13")
        assert [r.version_string for r in records] == ["zlib1.dll 1.2.13"]


class TestMakePairs:
    def test_single_record_no_negatives(self):
        pairs = make_pairs([_record("zlib", "zlib 1.0")], negatives_per_positive=0)
        assert pairs == [LabeledPair("zlib", "zlib 1.0", 1)]

    def test_two_products_one_negative_each(self):
        records = [_record("aaa", "aaa 1.0"), _record("bbb", "bbb 2.0")]
        pairs = make_pairs(records, negatives_per_positive=1, seed=0)
        assert pairs == [
            LabeledPair("aaa", "aaa 1.0", 1),
            LabeledPair("bbb", "aaa 1.0", 0),
            LabeledPair("bbb", "bbb 2.0", 1),
            LabeledPair("aaa", "bbb 2.0", 0),
        ]

    def test_deterministic_for_fixed_seed(self):
        records = synth_corpus(25, 400, seed=5)
        assert len(records) == 10_000
        a = make_pairs(records, 2, seed=99)
        b = make_pairs(records, 2, seed=99)
        assert a == b

    def test_insufficient_products(self):
        with pytest.raises(InsufficientProducts):
            make_pairs([_record("only", "only 1.0")], negatives_per_positive=1)

    def test_counts_and_no_self_negatives(self):
        records = synth_corpus(6, 10, seed=3)
        pairs = make_pairs(records, negatives_per_positive=2, seed=7)
        by_label = Counter(p.label for p in pairs)
        assert by_label[1] == len(records)
        assert by_label[0] == 2 * len(records)
        truth = {r.version_string: r.product for r in records}
        for p in pairs:
            if p.label == 0:
                assert p.product != truth[p.version_string]

    def test_negatives_capped_at_available_products(self):
        records = [_record("aaa", "aaa 1.0"), _record("bbb", "bbb 2.0")]
        pairs = make_pairs(records, negatives_per_positive=5, seed=0)
        assert Counter(p.label for p in pairs)[0] == 2  # one other product each

    def test_negatives_without_replacement(self):
        records = [_record(p, f"{p} 1.0") for p in ("aaa", "bbb", "ccc", "ddd")]
        pairs = make_pairs(records, negatives_per_positive=3, seed=1)
        for record in records:
            negs = [p.product for p in pairs if p.label == 0 and p.version_string == record.version_string]
            assert len(negs) == 3 == len(set(negs))


class TestSplitRandom:
    def test_eighty_twenty(self):
        pairs = make_pairs(synth_corpus(5, 1, seed=1), 1, seed=1)  # 10 pairs
        train, test = split_random(pairs, SplitSpec(mode=SplitMode.RANDOM, seed=4))
        assert len(train) == 8 and len(test) == 2

    def test_empty(self):
        assert split_random([], SplitSpec(mode=SplitMode.RANDOM)) == ([], [])

    def test_deterministic(self):
        pairs = make_pairs(synth_corpus(8, 10, seed=2), 1, seed=2)
        spec = SplitSpec(mode=SplitMode.RANDOM, seed=123)
        assert split_random(pairs, spec) == split_random(pairs, spec)

    def test_multiset_union_preserved(self):
        pairs = make_pairs(synth_corpus(8, 10, seed=2), 1, seed=2)
        train, test = split_random(pairs, SplitSpec(mode=SplitMode.RANDOM, seed=9))
        assert Counter(train) + Counter(test) == Counter(pairs)

    def test_mode_guard(self):
        with pytest.raises(ValueError):
            split_random([], SplitSpec(mode=SplitMode.ZERO_SHOT))


class TestSplitZeroShot:
    def _ladder_corpus(self):
        # 25 products sized 100 down to 76
        records = []
        for i in range(25):
            product = f"prod{i:02d}"
            for j in range(100 - i):
                records.append(VersionStringRecord(
                    product, f"{product}-1.{j}", f"1.{j}", f"{product} 1.{j}"
                ))
        return records

    def test_largest_classes_fill_train(self):
        records = self._ladder_corpus()
        spec = SplitSpec(mode=SplitMode.ZERO_SHOT, k_classes=20, n_per_class=50, seed=0)
        train, test = split_zero_shot(records, spec, negatives_per_positive=0, seed=0)
        assert len(train) == 20 * 50
        # the 5 smallest products (76..80 records) all land on the test side
        assert len(test) == 76 + 77 + 78 + 79 + 80
        train_products = {p.product for p in train}
        assert train_products == {f"prod{i:02d}" for i in range(20)}

    def test_disjoint_products_both_labels(self):
        records = self._ladder_corpus()
        spec = SplitSpec(mode=SplitMode.ZERO_SHOT, k_classes=20, n_per_class=50, seed=1)
        train, test = split_zero_shot(records, spec, negatives_per_positive=1, seed=1)
        assert {p.product for p in train} & {p.product for p in test} == set()

    def test_insufficient_classes(self):
        records = self._ladder_corpus()
        with pytest.raises(InsufficientClasses):
            split_zero_shot(records, SplitSpec(mode=SplitMode.ZERO_SHOT, k_classes=25), 0, 0)

    def test_small_classes_contribute_all_samples(self):
        records = [_record("aaa", f"aaa 1.{i}") for i in range(3)]
        records += [_record("bbb", f"bbb 1.{i}") for i in range(2)]
        records += [_record("ccc", "ccc 1.0")]
        spec = SplitSpec(mode=SplitMode.ZERO_SHOT, k_classes=2, n_per_class=100, seed=0)
        train, test = split_zero_shot(records, spec, negatives_per_positive=0, seed=0)
        assert len(train) == 5  # 3 from aaa + 2 from bbb, fewer than n_per_class
        assert [p.product for p in test] == ["ccc"]

    def test_tie_break_by_product_name(self):
        records = [_record(p, f"{p} 1.{i}") for p in ("bb", "aa", "cc") for i in range(4)]
        spec = SplitSpec(mode=SplitMode.ZERO_SHOT, k_classes=2, n_per_class=4, seed=0)
        train, _ = split_zero_shot(records, spec, negatives_per_positive=0, seed=0)
        assert {p.product for p in train} == {"aa", "bb"}  # name breaks the size tie

    def test_full_scale_instance_draws_eighty_thousand(self):
        records = synth_corpus(21, 4_100, seed=6)
        spec = SplitSpec(mode=SplitMode.ZERO_SHOT, k_classes=20, n_per_class=4_000, seed=2)
        train, test = split_zero_shot(records, spec, negatives_per_positive=0, seed=2)
        assert len(train) == 80_000
        assert len(test) == 4_100


class TestJsonl:
    def test_round_trip_records(self, tmp_path):
        records = synth_corpus(10, 100, seed=8)
        path = tmp_path / "records.jsonl"
        save_jsonl(records, str(path))
        assert load_records_jsonl(str(path)) == records

    def test_round_trip_pairs(self, tmp_path):
        pairs = make_pairs(synth_corpus(6, 20, seed=9), 1, seed=9)
        path = tmp_path / "pairs.jsonl"
        save_jsonl(pairs, str(path))
        assert load_pairs_jsonl(str(path)) == pairs

    def test_truncated_line_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        good = json.dumps({"product": "a", "package": "a-1.0", "version": "1.0",
                           "version_string": "a 1.0"})
        path.write_text(good + "\n" + good[: len(good) // 2] + "\n")
        with pytest.raises(MalformedLine) as exc:
            load_jsonl(str(path))
        assert exc.value.line_no == 2

    def test_unknown_shape_rejected(self, tmp_path):
        path = tmp_path / "odd.jsonl"
        path.write_text('{"something": "else"}\n')
        with pytest.raises(MalformedLine):
            load_jsonl(str(path))

    def test_invariant_violations_surface_as_malformed(self, tmp_path):
        path = tmp_path / "bad2.jsonl"
        path.write_text(json.dumps({
            "product": "a", "package": "a-1.0", "version": "2.0", "version_string": "a",
        }) + "\n")
        with pytest.raises(MalformedLine):
            load_jsonl(str(path))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert load_jsonl(str(path)) == []

    def test_mixed_shapes_rejected_by_typed_loaders(self, tmp_path):
        path = tmp_path / "mixed.jsonl"
        save_jsonl([_record("aaa", "aaa 1.0"), LabeledPair("aaa", "aaa 1.0", 1)], str(path))
        with pytest.raises(ValueError):
            load_records_jsonl(str(path))
        with pytest.raises(ValueError):
            load_pairs_jsonl(str(path))


class TestSynthCorpus:
    def test_cardinality(self):
        records = synth_corpus(30, 200, seed=1)
        assert len(records) == 6_000
        assert len({r.product for r in records}) == 30

    def test_every_string_matches_default_pattern(self):
        records = synth_corpus(30, 200, seed=1)
        strings = [ExtractedString(i, r.version_string) for i, r in enumerate(records)]
        assert len(filter_version_strings(strings, DEFAULT_VERSION_PATTERN)) == len(strings)

    def test_deterministic(self):
        assert synth_corpus(12, 50, seed=77) == synth_corpus(12, 50, seed=77)

    def test_stem_embedded_in_version_string(self):
        for record in synth_corpus(10, 30, seed=4):
            assert record.product in record.version_string
            assert record.version in record.package

    def test_validation(self):
        with pytest.raises(ValueError):
            synth_corpus(1, 10)
        with pytest.raises(ValueError):
            synth_corpus(5, 0)
