"""Core record types shared across the pipeline, plus JSONL helpers.

Every on-disk artifact is JSON Lines: one JSON object per line, UTF-8,
no BOM. Record types know how to serialize themselves (``to_record``)
with a fixed key order so that repeated saves of the same data are
byte-identical.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator


class Label(str, Enum):
    """Gold or predicted veracity class of a claim."""

    REAL = "real"
    FAKE = "fake"

    @classmethod
    def parse(cls, value: str) -> "Label":
        return cls(value.strip().lower())


class Split(str, Enum):
    """Which partition of the corpus a claim belongs to."""

    TRAIN = "train"
    EVAL = "eval"


@dataclass(frozen=True)
class Claim:
    """A single social-media claim with its gold label."""

    id: str
    text: str
    label: Label
    source: str = ""
    split: Split = Split.TRAIN

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("claim id must be non-empty")
        if not self.text.strip():
            raise ValueError(f"claim {self.id!r}: text must be non-empty")
        if not isinstance(self.label, Label):
            object.__setattr__(self, "label", Label.parse(self.label))
        if not isinstance(self.split, Split):
            object.__setattr__(self, "split", Split(self.split))

    def to_record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "text": self.text,
            "label": self.label.value,
            "source": self.source,
            "split": self.split.value,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "Claim":
        return cls(
            id=str(record["id"]),
            text=str(record["text"]),
            label=Label.parse(str(record["label"])),
            source=str(record.get("source", "")),
            split=Split(str(record.get("split", "train"))),
        )


@dataclass(frozen=True)
class VerificationStep:
    """One verification step of a rationale.

    ``span`` is the (start, end) character offsets into the candidate's
    ``raw_text`` such that ``raw_text[start:end] == text``.
    """

    index: int
    text: str
    span: tuple[int, int]

    def __post_init__(self) -> None:
        start, end = self.span
        if self.index < 0:
            raise ValueError("step index must be >= 0")
        if not (0 <= start < end):
            raise ValueError(f"step {self.index}: bad span {self.span}")
        if not self.text.strip():
            raise ValueError(f"step {self.index}: text must be non-empty")


@dataclass(frozen=True)
class RationaleCandidate:
    """A generated rationale for one claim, segmented into steps."""

    claim_id: str
    generator: str
    raw_text: str
    steps: tuple[VerificationStep, ...]
    predicted_label: Label | None
    token_count: int
    truncated: bool
    candidate_index: int

    def __post_init__(self) -> None:
        if self.candidate_index < 1:
            raise ValueError("candidate_index starts at 1")
        if self.token_count < 0:
            raise ValueError("token_count must be >= 0")
        for step in self.steps:
            start, end = step.span
            if self.raw_text[start:end] != step.text:
                raise ValueError(
                    f"candidate {self.claim_id}/{self.candidate_index}: "
                    f"step {step.index} span does not match raw_text"
                )

    def step_texts(self) -> tuple[str, ...]:
        return tuple(step.text for step in self.steps)

    def to_record(self) -> dict[str, Any]:
        return {
            "claim_id": self.claim_id,
            "generator": self.generator,
            "raw_text": self.raw_text,
            "predicted_label": self.predicted_label.value if self.predicted_label else None,
            "candidate_index": self.candidate_index,
            "truncated": self.truncated,
        }


class FilterReason(str, Enum):
    """Why a candidate was kept or discarded by the heuristic filters."""

    OK = "ok"
    WRONG_LABEL = "wrong_label"
    NO_BOXED_ANSWER = "no_boxed_answer"
    OVER_TOKEN_LIMIT = "over_token_limit"
    BAD_CHARACTERS = "bad_characters"
    DEGENERATE_REPETITION = "degenerate_repetition"


@dataclass(frozen=True)
class FilterVerdict:
    """Outcome of the heuristic filters for a single candidate.

    ``detail`` carries the specific trigger when a rule can fire for
    more than one reason (e.g. over_token_limit via count vs. truncation).
    """

    keep: bool
    reason: FilterReason
    detail: str | None = None

    def __post_init__(self) -> None:
        if self.keep != (self.reason is FilterReason.OK):
            raise ValueError("keep must be True exactly when reason is 'ok'")

    def to_record(self, claim_id: str, candidate_index: int) -> dict[str, Any]:
        record: dict[str, Any] = {
            "claim_id": claim_id,
            "candidate_index": candidate_index,
            "keep": self.keep,
            "reason": self.reason.value,
        }
        if self.detail is not None:
            record["detail"] = self.detail
        return record


# ---------------------------------------------------------------------------
# JSONL i/o


def dump_record(record: dict[str, Any]) -> str:
    """Serialize one record to a single deterministic JSON line."""
    return json.dumps(record, ensure_ascii=False, allow_nan=False)


def write_jsonl(path: str | Path, records: Iterable[dict[str, Any]]) -> int:
    """Write records to ``path`` atomically (temp file + rename).

    Returns the number of records written. The target is only replaced
    once the full file has been written, so a crash cannot leave a
    truncated artifact behind.
    """
    path = Path(path)
    count = 0
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            for record in records:
                handle.write(dump_record(record) + "\n")
                count += 1
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise
    return count


def read_jsonl(path: str | Path) -> Iterator[tuple[int, Any]]:
    """Yield (line_number, parsed_object) pairs, skipping blank lines.

    Lines that are not valid JSON are yielded as (line_number, JSONDecodeError)
    so callers can collect rejects instead of aborting.
    """
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                yield line_number, json.loads(line)
            except json.JSONDecodeError as exc:
                yield line_number, exc
