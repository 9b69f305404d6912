"""Claim corpus loading, validation, near-duplicate removal, and saving.

Loading is strict about identity (a duplicate claim id is a hard error
naming both lines) but forgiving about individual bad records: every
line that fails validation is collected into a rejects report instead
of being silently dropped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Iterator

from .records import Claim, RationaleCandidate, read_jsonl, write_jsonl

CLAIM_SCHEMA = "claim"
DEFAULT_DEDUP_PREFIX_TOKENS = 100


class CorpusError(Exception):
    """Base error for corpus loading and saving."""


class DuplicateIdError(CorpusError):
    """Two claims in one file share an id."""


@dataclass(frozen=True)
class ClaimCorpus:
    """An ordered collection of claims with unique ids."""

    claims: tuple[Claim, ...]
    provenance: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for claim in self.claims:
            if claim.id in seen:
                raise DuplicateIdError(f"duplicate claim id {claim.id!r}")
            seen.add(claim.id)

    def __len__(self) -> int:
        return len(self.claims)

    def __iter__(self) -> Iterator[Claim]:
        return iter(self.claims)

    @cached_property
    def _by_id(self) -> dict[str, Claim]:
        return {claim.id: claim for claim in self.claims}

    def get(self, claim_id: str) -> Claim:
        return self._by_id[claim_id]

    def __contains__(self, claim_id: str) -> bool:
        return claim_id in self._by_id


def _validate_claim_record(record: Any) -> Claim:
    if not isinstance(record, dict):
        raise ValueError("record is not a JSON object")
    for name in ("id", "text", "label"):
        if name not in record:
            raise ValueError(f"missing field: {name}")
    if not str(record["text"]).strip():
        raise ValueError("empty text")
    label = str(record["label"]).strip().lower()
    if label not in ("real", "fake"):
        raise ValueError(f"invalid label: {record['label']!r}")
    split = str(record.get("split", "train"))
    if split not in ("train", "eval"):
        raise ValueError(f"invalid split: {split!r}")
    return Claim.from_record(record)


def load_claims(
    path: str | Path,
    schema: str = CLAIM_SCHEMA,
) -> tuple[ClaimCorpus, list[dict[str, Any]]]:
    """Load a claim file, returning (corpus, rejects).

    Each reject entry carries the original record's fields (when the line
    parsed at all) plus ``reason`` and ``line``. A duplicate id raises
    DuplicateIdError naming both offending lines; everything else is a
    reject, never an abort.
    """
    if schema != CLAIM_SCHEMA:
        raise CorpusError(f"unknown record schema: {schema!r}")
    path = Path(path)
    claims: list[Claim] = []
    rejects: list[dict[str, Any]] = []
    first_line_by_id: dict[str, int] = {}
    try:
        entries = list(read_jsonl(path))
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc
    for line_number, parsed in entries:
        if isinstance(parsed, json.JSONDecodeError):
            rejects.append({"reason": "malformed_json", "line": line_number})
            continue
        try:
            claim = _validate_claim_record(parsed)
        except ValueError as exc:
            reject = dict(parsed) if isinstance(parsed, dict) else {}
            reject["reason"] = str(exc)
            reject["line"] = line_number
            rejects.append(reject)
            continue
        if claim.id in first_line_by_id:
            raise DuplicateIdError(
                f"duplicate claim id {claim.id!r} "
                f"(lines {first_line_by_id[claim.id]} and {line_number})"
            )
        first_line_by_id[claim.id] = line_number
        claims.append(claim)
    return ClaimCorpus(tuple(claims), provenance=(str(path),)), rejects


def dedup_claims(
    corpus: ClaimCorpus,
    prefix_tokens: int = DEFAULT_DEDUP_PREFIX_TOKENS,
    case_sensitive: bool = True,
) -> ClaimCorpus:
    """Drop near-duplicate claims by whitespace-token prefix matching.

    Two claims collide when their first min(len_a, len_b, prefix_tokens)
    tokens are identical, so a short claim also suppresses any longer
    claim it is a prefix of. The first occurrence wins and input order
    is preserved, which makes the operation idempotent.
    """
    if prefix_tokens < 1:
        raise ValueError("prefix_tokens must be >= 1")
    # Token trie; the None key marks where a kept claim's prefix ends.
    root: dict[Any, Any] = {}
    kept: list[Claim] = []
    for claim in corpus:
        tokens = claim.text.split()[:prefix_tokens]
        if not case_sensitive:
            tokens = [token.lower() for token in tokens]
        node = root
        duplicate = False
        fell_off = False
        for token in tokens:
            if None in node:
                duplicate = True
                break
            child = node.get(token)
            if child is None:
                fell_off = True
                break
            node = child
        else:
            # Consumed every token while staying on a kept claim's path.
            duplicate = True
        if duplicate and not fell_off:
            continue
        node = root
        for token in tokens:
            node = node.setdefault(token, {})
        node[None] = True
        kept.append(claim)
    return ClaimCorpus(tuple(kept), provenance=corpus.provenance)


def save_records(records: Iterable[Any], path: str | Path) -> int:
    """Write records (dataclasses with to_record, or plain dicts) as JSONL.

    The write is atomic: the target file either keeps its previous
    content or holds the complete new content.
    """
    path = Path(path)

    def as_dict(obj: Any) -> dict[str, Any]:
        if hasattr(obj, "to_record"):
            return obj.to_record()
        if isinstance(obj, dict):
            return obj
        raise CorpusError(f"cannot serialize record of type {type(obj).__name__}")

    try:
        return write_jsonl(path, (as_dict(record) for record in records))
    except OSError as exc:
        raise CorpusError(f"cannot write {path}: {exc}") from exc


def save_claims(corpus: ClaimCorpus, path: str | Path) -> int:
    return save_records(corpus.claims, path)


def load_candidates(path: str | Path) -> list[RationaleCandidate]:
    """Load rationale candidates, re-deriving steps and predictions.

    Steps, the predicted label, and the token count are functions of
    ``raw_text``, so they are recomputed on load rather than trusted
    from the file; only the truncation flag is carried through because
    it cannot be recovered from the text.
    """
    from .parsing import candidate_from_record

    path = Path(path)
    candidates: list[RationaleCandidate] = []
    try:
        entries = list(read_jsonl(path))
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc
    for line_number, parsed in entries:
        if isinstance(parsed, json.JSONDecodeError) or not isinstance(parsed, dict):
            raise CorpusError(f"{path}:{line_number}: malformed candidate record")
        try:
            candidates.append(candidate_from_record(parsed))
        except (KeyError, ValueError) as exc:
            raise CorpusError(f"{path}:{line_number}: {exc}") from exc
    return candidates
