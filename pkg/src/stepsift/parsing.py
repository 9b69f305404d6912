"""Turning raw rationale text into structured verification steps.

Segmentation is by necessity heuristic; the rules here are fixed and
documented so the same text always yields the same steps:

1. If any line starts with a numbered-item marker ("1.", "2)",
   "Step 3:"), split on those markers.
2. Otherwise, if any line is a markdown header, split on headers.
3. Otherwise split on blank-line paragraphs.

A trailing final-answer or conclusion block (the one holding the
``\\boxed{...}`` verdict) is excluded from the steps, and steps shorter
than a minimum character count are merged into their neighbor. Text
with no detectable structure becomes a single step.
"""

from __future__ import annotations

import re
import unicodedata
from typing import Any, Callable

from .records import (
    FilterReason,
    FilterVerdict,
    Claim,
    Label,
    RationaleCandidate,
    VerificationStep,
)

DEFAULT_MIN_STEP_CHARS = 10
DEFAULT_TOKEN_LIMIT = 4096
DEFAULT_REPETITION_WINDOW = 20
DEFAULT_REPETITION_COUNT = 3
DEFAULT_BAD_CHAR_THRESHOLD = 0.005

BOXED_RE = re.compile(r"\\boxed\{([^{}]*)\}")
NUMBER_MARKER_RE = re.compile(
    r"^[ \t]{0,3}(?:\d{1,3}[.)][ \t]+|step[ \t]+\d{1,3}[ \t]*[:.)][ \t]*)",
    re.IGNORECASE | re.MULTILINE,
)
HEADER_MARKER_RE = re.compile(r"^#{1,6}[ \t]+\S", re.MULTILINE)
PARAGRAPH_SEP_RE = re.compile(r"(?:[ \t]*\r?\n){2,}")
CONCLUSION_LINE_RE = re.compile(
    r"^\W{0,3}(?:final answer|final verdict|answer|verdict|conclusion|"
    r"overall|in summary|summary|therefore|thus|so)\b",
    re.IGNORECASE,
)


def whitespace_tokens(text: str) -> list[str]:
    return text.split()


def count_tokens(text: str, token_counter: Callable[[str], list[str]] | None = None) -> int:
    """Token count under the pipeline's token convention (whitespace by default)."""
    counter = token_counter or whitespace_tokens
    return len(counter(text))


def extract_prediction(raw_text: str) -> Label | None:
    """Read the predicted label from the last well-formed boxed verdict.

    Only ``\\boxed{...}`` whose content, lowercased and trimmed, is exactly
    "real" or "fake" counts; the last such expression wins. Absence is a
    value (None), not an error.
    """
    prediction: Label | None = None
    for match in BOXED_RE.finditer(raw_text):
        content = match.group(1).strip().lower()
        if content in ("real", "fake"):
            prediction = Label(content)
    return prediction


def _last_valid_boxed(raw_text: str) -> re.Match[str] | None:
    last = None
    for match in BOXED_RE.finditer(raw_text):
        if match.group(1).strip().lower() in ("real", "fake"):
            last = match
    return last


def _answer_block_start(raw_text: str) -> int:
    """Start offset of the trailing final-answer block, or len(raw_text).

    The block begins at the start of the line holding the last boxed
    verdict when that line is answer-like (blank lead-in, a conclusion
    marker, or a short lead-in), and extends upward over any contiguous
    preceding conclusion-marker or blank lines. When the verdict sits at
    the end of a substantive step line, only the boxed expression itself
    is cut so the step survives.
    """
    match = _last_valid_boxed(raw_text)
    if match is None:
        return len(raw_text)
    line_start = raw_text.rfind("\n", 0, match.start()) + 1
    lead_in = raw_text[line_start : match.start()].strip()
    if lead_in and not CONCLUSION_LINE_RE.match(lead_in) and len(lead_in) > 30:
        return match.start()
    cut = line_start
    while cut > 0:
        prev_start = raw_text.rfind("\n", 0, cut - 1) + 1
        prev_line = raw_text[prev_start : cut - 1].strip()
        if prev_line and not CONCLUSION_LINE_RE.match(prev_line):
            break
        cut = prev_start
    return cut


def _trim_span(raw_text: str, start: int, end: int) -> tuple[int, int]:
    chunk = raw_text[start:end]
    stripped = chunk.strip()
    if not stripped:
        return start, start
    left = len(chunk) - len(chunk.lstrip())
    right = len(chunk) - len(chunk.rstrip())
    return start + left, end - right


def _block_spans(body: str) -> list[tuple[int, int]]:
    for marker_re in (NUMBER_MARKER_RE, HEADER_MARKER_RE):
        starts = [match.start() for match in marker_re.finditer(body)]
        if starts:
            if body[: starts[0]].strip():
                starts.insert(0, 0)
            ends = starts[1:] + [len(body)]
            return list(zip(starts, ends))
    spans: list[tuple[int, int]] = []
    cursor = 0
    for sep in PARAGRAPH_SEP_RE.finditer(body):
        spans.append((cursor, sep.start()))
        cursor = sep.end()
    spans.append((cursor, len(body)))
    return spans


def segment_steps(raw_text: str, min_step_chars: int = DEFAULT_MIN_STEP_CHARS) -> list[VerificationStep]:
    """Split rationale text into ordered, non-overlapping verification steps.

    Each returned step satisfies ``raw_text[span[0]:span[1]] == text``,
    spans are strictly increasing, and every text is non-empty after
    trimming. Empty input yields an empty list.
    """
    if not raw_text.strip():
        return []
    body_end = _answer_block_start(raw_text)
    body = raw_text[:body_end]
    if not body.strip():
        return []

    trimmed: list[tuple[int, int]] = []
    for start, end in _block_spans(body):
        t_start, t_end = _trim_span(raw_text, start, end)
        if t_end > t_start:
            trimmed.append((t_start, t_end))

    merged: list[tuple[int, int]] = []
    carry: tuple[int, int] | None = None
    for start, end in trimmed:
        if carry is not None:
            start = carry[0]
            start, end = _trim_span(raw_text, start, end)
            carry = None
        if end - start < min_step_chars:
            if merged:
                prev_start, _ = merged.pop()
                merged.append(_trim_span(raw_text, prev_start, end))
            else:
                carry = (start, end)
            continue
        merged.append((start, end))
    if carry is not None:
        if merged:
            prev_start, _ = merged.pop()
            merged.append(_trim_span(raw_text, prev_start, carry[1]))
        else:
            merged.append(carry)

    return [
        VerificationStep(index=i, text=raw_text[start:end], span=(start, end))
        for i, (start, end) in enumerate(merged)
    ]


def _is_suspicious_char(char: str) -> bool:
    if char in ("\n", "\r", "\t"):
        return False
    if char == "\ufffd":
        return True
    return unicodedata.category(char) in ("Cc", "Cf", "Co", "Cs", "Cn")


def detect_degenerate(
    raw_text: str,
    repetition_window: int = DEFAULT_REPETITION_WINDOW,
    repetition_count: int = DEFAULT_REPETITION_COUNT,
    bad_char_threshold: float = DEFAULT_BAD_CHAR_THRESHOLD,
) -> set[str]:
    """Detect degenerate text, returning any of {"bad_characters", "repetition"}.

    bad_characters: the proportion of control/replacement characters
    exceeds the threshold (strictly). repetition: some window of
    ``repetition_window`` consecutive tokens repeats at least
    ``repetition_count`` times back to back.
    """
    flags: set[str] = set()
    if raw_text:
        suspicious = sum(1 for char in raw_text if _is_suspicious_char(char))
        if suspicious / len(raw_text) > bad_char_threshold:
            flags.add("bad_characters")
    tokens = raw_text.split()
    window = repetition_window
    needed = window * repetition_count
    if len(tokens) >= needed:
        for start in range(len(tokens) - needed + 1):
            base = tokens[start : start + window]
            if all(
                tokens[start + rep * window : start + (rep + 1) * window] == base
                for rep in range(1, repetition_count)
            ):
                flags.add("repetition")
                break
    return flags


def apply_heuristic_filters(
    candidate: RationaleCandidate,
    claim: Claim,
    token_limit: int = DEFAULT_TOKEN_LIMIT,
) -> FilterVerdict:
    """Run the five discard rules in fixed order, reporting the first hit.

    Order: wrong label, missing boxed answer, over the token limit (or
    truncated mid-generation), suspicious characters, degenerate
    repetition. A candidate is kept only when every rule passes, which
    guarantees every kept candidate predicts the claim's gold label.
    """
    if candidate.claim_id != claim.id:
        raise ValueError(
            f"candidate belongs to claim {candidate.claim_id!r}, not {claim.id!r}"
        )
    if candidate.predicted_label is not None and candidate.predicted_label != claim.label:
        return FilterVerdict(keep=False, reason=FilterReason.WRONG_LABEL)
    if candidate.predicted_label is None:
        return FilterVerdict(keep=False, reason=FilterReason.NO_BOXED_ANSWER)
    if candidate.token_count > token_limit or candidate.truncated:
        triggers = []
        if candidate.token_count > token_limit:
            triggers.append("token_count")
        if candidate.truncated:
            triggers.append("truncated")
        return FilterVerdict(
            keep=False, reason=FilterReason.OVER_TOKEN_LIMIT, detail=",".join(triggers)
        )
    degenerate = detect_degenerate(candidate.raw_text)
    if "bad_characters" in degenerate:
        return FilterVerdict(keep=False, reason=FilterReason.BAD_CHARACTERS)
    if "repetition" in degenerate:
        return FilterVerdict(keep=False, reason=FilterReason.DEGENERATE_REPETITION)
    return FilterVerdict(keep=True, reason=FilterReason.OK)


def parse_generation(
    claim_id: str,
    generator: str,
    raw_text: str,
    candidate_index: int,
    truncated: bool = False,
    min_step_chars: int = DEFAULT_MIN_STEP_CHARS,
    token_counter: Callable[[str], list[str]] | None = None,
) -> RationaleCandidate:
    """Build a structured candidate from freshly generated rationale text."""
    return RationaleCandidate(
        claim_id=claim_id,
        generator=generator,
        raw_text=raw_text,
        steps=tuple(segment_steps(raw_text, min_step_chars=min_step_chars)),
        predicted_label=extract_prediction(raw_text),
        token_count=count_tokens(raw_text, token_counter),
        truncated=truncated,
        candidate_index=candidate_index,
    )


def candidate_from_record(record: dict[str, Any]) -> RationaleCandidate:
    """Rebuild a candidate from its on-disk record (steps re-derived)."""
    return parse_generation(
        claim_id=str(record["claim_id"]),
        generator=str(record["generator"]),
        raw_text=str(record["raw_text"]),
        candidate_index=int(record["candidate_index"]),
        truncated=bool(record.get("truncated", False)),
    )
