"""Combining attribution scores, selecting the final set, and exporting SFT data.

Selection is deterministic end to end: records are ranked by combined
score descending with ties broken by (claim id, candidate index)
ascending, a per-claim cap and a global budget are applied greedily,
and the final output is re-sorted by claim id so the export order never
depends on float noise between equal runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Sequence

from . import prompts
from .corpus import save_records
from .parsing import BOXED_RE
from .records import Claim, Label, RationaleCandidate

RAW_MODE = "raw"
ZSCORE_MODE = "zscore"
NORMALIZATION_MODES = (RAW_MODE, ZSCORE_MODE)

RATIONALE_MODE = "rationale"
LABEL_ONLY_MODE = "label_only"
EXPORT_MODES = (RATIONALE_MODE, LABEL_ONLY_MODE)


@dataclass(frozen=True)
class CuratedRecord:
    """One candidate with its attribution scores and combined rank score."""

    claim: Claim
    candidate: RationaleCandidate
    phi_s: float
    phi_m: float
    combined: float

    def to_record(self) -> dict[str, Any]:
        return {
            "claim_id": self.claim.id,
            "candidate_index": self.candidate.candidate_index,
            "generator": self.candidate.generator,
            "phi_s": self.phi_s,
            "phi_m": self.phi_m,
            "combined": self.combined,
        }


def combined_score(phi_s: float, phi_m: float) -> float:
    """Plain average of the self and mutual scores."""
    if not (math.isfinite(phi_s) and math.isfinite(phi_m)):
        raise ValueError(f"scores must be finite, got phi_s={phi_s}, phi_m={phi_m}")
    return (phi_s + phi_m) / 2.0


def _standardize(values: Sequence[float]) -> list[float]:
    n = len(values)
    if max(values) == min(values):
        # Exact check: float rounding can leave a constant column with a
        # tiny nonzero variance, which would blow up to z-scores of +-1.
        return [0.0] * n
    mean = sum(values) / n
    variance = sum((v - mean) ** 2 for v in values) / n
    std = math.sqrt(variance)
    return [(v - mean) / std for v in values]


def score_records(
    records: Sequence[CuratedRecord],
    mode: str = RAW_MODE,
) -> list[CuratedRecord]:
    """Fill in each record's combined score under the chosen mode.

    ``raw`` averages phi_s and phi_m as-is. ``zscore`` standardizes each
    column over the whole batch first (population std; a constant column
    standardizes to zeros), which rebalances the two scores when their
    scales differ. zscore is a corpus-level operation, so it lives here
    rather than in the pairwise helper.
    """
    if mode not in NORMALIZATION_MODES:
        raise ValueError(f"unknown normalization mode: {mode!r}")
    if not records:
        return []
    if mode == RAW_MODE:
        return [
            replace(record, combined=combined_score(record.phi_s, record.phi_m))
            for record in records
        ]
    z_s = _standardize([record.phi_s for record in records])
    z_m = _standardize([record.phi_m for record in records])
    return [
        replace(record, combined=(zs + zm) / 2.0)
        for record, zs, zm in zip(records, z_s, z_m)
    ]


def select_curated(
    records: Sequence[CuratedRecord],
    budget: int,
    per_claim_cap: int = 1,
) -> list[CuratedRecord]:
    """Pick the top records under a global budget and a per-claim cap.

    Returns at most ``budget`` records, at most ``per_claim_cap`` per
    claim, sorted by (claim id, candidate index) for stable output.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if per_claim_cap < 1:
        raise ValueError("per_claim_cap must be >= 1")
    ranked = sorted(
        records,
        key=lambda r: (-r.combined, r.claim.id, r.candidate.candidate_index),
    )
    selected: list[CuratedRecord] = []
    taken_per_claim: dict[str, int] = {}
    for record in ranked:
        if len(selected) >= budget:
            break
        taken = taken_per_claim.get(record.claim.id, 0)
        if taken >= per_claim_cap:
            continue
        taken_per_claim[record.claim.id] = taken + 1
        selected.append(record)
    selected.sort(key=lambda r: (r.claim.id, r.candidate.candidate_index))
    return selected


def _rationale_response(record: CuratedRecord) -> str:
    """Candidate text, guaranteed to end with its boxed verdict."""
    text = record.candidate.raw_text.rstrip()
    label = record.claim.label.value
    last = None
    for match in BOXED_RE.finditer(text):
        last = match
    if last is not None and last.end() == len(text) and (
        last.group(1).strip().lower() == label
    ):
        return text
    return f"{text}\n\nFinal Answer: \\boxed{{{label}}}"


def export_sft(
    records: Sequence[CuratedRecord],
    mode: str,
    path: str | Path,
) -> int:
    """Write curated records as prompt/response training pairs.

    ``rationale`` mode exports the full step-by-step text ending in the
    boxed verdict; ``label_only`` exports just the verdict sentence.
    An empty record list writes an empty file (a vacuous run is still a
    successful run). Output is byte-deterministic given record order.
    """
    if mode not in EXPORT_MODES:
        raise ValueError(f"unknown export mode: {mode!r}")
    rows: list[dict[str, Any]] = []
    for record in records:
        if mode == RATIONALE_MODE:
            response = _rationale_response(record)
        else:
            response = prompts.LABEL_ONLY_RESPONSE_TEMPLATE.format(
                label=Label(record.claim.label).value
            )
        rows.append(
            {
                "prompt": prompts.render_sft_prompt(record.claim.text),
                "response": response,
                "meta": {
                    "claim_id": record.claim.id,
                    "generator": record.candidate.generator,
                    "combined": record.combined,
                },
            }
        )
    return save_records(rows, path)
