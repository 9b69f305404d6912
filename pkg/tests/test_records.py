from __future__ import annotations

import json

import pytest

from stepsift.records import (
    Claim,
    FilterReason,
    FilterVerdict,
    Label,
    RationaleCandidate,
    Split,
    VerificationStep,
    dump_record,
    read_jsonl,
    write_jsonl,
)


class TestLabel:
    def test_parse_normalizes(self):
        assert Label.parse(" Real ") is Label.REAL
        assert Label.parse("FAKE") is Label.FAKE

    def test_parse_rejects_other_values(self):
        with pytest.raises(ValueError):
            Label.parse("unsure")


class TestClaim:
    def test_string_enums_coerce(self):
        claim = Claim(id="c1", text="something happened", label="fake", split="eval")
        assert claim.label is Label.FAKE
        assert claim.split is Split.EVAL

    def test_round_trip(self):
        claim = Claim(id="c1", text="something happened", label="real", source="feed")
        assert Claim.from_record(claim.to_record()) == claim

    def test_record_key_order_is_fixed(self):
        record = Claim(id="c1", text="t", label="real").to_record()
        assert list(record) == ["id", "text", "label", "source", "split"]

    def test_validation(self):
        with pytest.raises(ValueError):
            Claim(id="", text="t", label="real")
        with pytest.raises(ValueError):
            Claim(id="c1", text="   ", label="real")


class TestVerificationStep:
    def test_span_must_be_ordered(self):
        with pytest.raises(ValueError):
            VerificationStep(index=0, text="x", span=(5, 5))
        with pytest.raises(ValueError):
            VerificationStep(index=0, text="x", span=(-1, 3))

    def test_blank_text_rejected(self):
        with pytest.raises(ValueError):
            VerificationStep(index=0, text="  ", span=(0, 2))


class TestRationaleCandidate:
    def test_span_mismatch_rejected(self):
        step = VerificationStep(index=0, text="right", span=(0, 5))
        with pytest.raises(ValueError, match="span does not match"):
            RationaleCandidate(
                claim_id="c1",
                generator="g",
                raw_text="wrong text entirely",
                steps=(step,),
                predicted_label=Label.REAL,
                token_count=3,
                truncated=False,
                candidate_index=1,
            )

    def test_candidate_index_starts_at_one(self):
        with pytest.raises(ValueError):
            RationaleCandidate(
                claim_id="c1",
                generator="g",
                raw_text="text",
                steps=(),
                predicted_label=None,
                token_count=1,
                truncated=False,
                candidate_index=0,
            )

    def test_record_carries_the_essentials(self):
        candidate = RationaleCandidate(
            claim_id="c1",
            generator="g",
            raw_text="the text",
            steps=(),
            predicted_label=None,
            token_count=2,
            truncated=True,
            candidate_index=2,
        )
        record = candidate.to_record()
        assert record["predicted_label"] is None
        assert record["truncated"] is True
        assert record["candidate_index"] == 2


class TestFilterVerdict:
    def test_keep_must_agree_with_reason(self):
        FilterVerdict(keep=True, reason=FilterReason.OK)
        FilterVerdict(keep=False, reason=FilterReason.WRONG_LABEL)
        with pytest.raises(ValueError):
            FilterVerdict(keep=True, reason=FilterReason.WRONG_LABEL)
        with pytest.raises(ValueError):
            FilterVerdict(keep=False, reason=FilterReason.OK)

    def test_detail_only_present_when_set(self):
        bare = FilterVerdict(keep=False, reason=FilterReason.BAD_CHARACTERS)
        assert "detail" not in bare.to_record("c1", 1)
        detailed = FilterVerdict(
            keep=False, reason=FilterReason.OVER_TOKEN_LIMIT, detail="truncated"
        )
        assert detailed.to_record("c1", 1)["detail"] == "truncated"


class TestJsonl:
    def test_dump_record_is_compact_and_utf8(self):
        line = dump_record({"text": "café", "n": 1})
        assert "café" in line
        assert "\n" not in line

    def test_dump_record_rejects_nan(self):
        with pytest.raises(ValueError):
            dump_record({"x": float("nan")})

    def test_write_then_read_round_trip(self, tmp_path):
        path = tmp_path / "records.jsonl"
        rows = [{"a": 1}, {"b": [1, 2]}]
        assert write_jsonl(path, rows) == 2
        parsed = [obj for _line, obj in read_jsonl(path)]
        assert parsed == rows

    def test_write_replaces_not_appends(self, tmp_path):
        path = tmp_path / "records.jsonl"
        write_jsonl(path, [{"v": 1}] * 5)
        write_jsonl(path, [{"v": 2}])
        assert len(list(read_jsonl(path))) == 1

    def test_no_temp_file_left_behind(self, tmp_path):
        path = tmp_path / "records.jsonl"
        write_jsonl(path, [{"v": 1}])

        def exploding():
            yield {"v": 1}
            raise RuntimeError("mid-write failure")

        with pytest.raises(RuntimeError):
            write_jsonl(path, exploding())
        assert [p.name for p in tmp_path.iterdir()] == ["records.jsonl"]
        # The original content survived the failed rewrite.
        assert [obj for _n, obj in read_jsonl(path)] == [{"v": 1}]

    def test_read_reports_bad_lines_without_aborting(self, tmp_path):
        path = tmp_path / "records.jsonl"
        path.write_text('{"ok": 1}\nnot json\n\n{"ok": 2}\n', encoding="utf-8")
        results = list(read_jsonl(path))
        assert [n for n, _ in results] == [1, 2, 4]
        assert isinstance(results[1][1], json.JSONDecodeError)
        assert results[2][1] == {"ok": 2}
