"""Counterfactual attribution of a rationale's own verification steps.

Each step's contribution is measured by deletion: score the predicted
label with the full rationale, then with that one step removed, and
take the difference. A positive delta means the step supported the
prediction; a negative delta means the prediction was more confident
without it.

From the per-step deltas the module derives:

- a necessity score: the mean delta (floored at zero) discounted by the
  fraction of steps whose delta falls below a threshold, so rationales
  padded with unnecessary steps score low;
- a sufficiency gap: how much better (or worse) the top-scoring steps
  alone explain the prediction than the full rationale does;
- the smallest top-step prefix whose score stays within a relative
  tolerance of the full rationale's score, or a flag that no prefix
  qualifies;
- a combined per-candidate self score: necessity scaled by one minus
  the sufficiency gap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

from .backends.base import ScoringBackend, ScoringRequest
from .records import Claim, RationaleCandidate

DEFAULT_DELTA_THRESHOLD = 0.0
DEFAULT_TOP_STEPS = 3
DEFAULT_SUFFICIENCY_TOLERANCE = 0.01


@dataclass(frozen=True)
class AttributionProfile:
    """Everything the pipeline records about one candidate's attribution."""

    claim_id: str
    candidate_index: int
    logp_full: float
    deltas: tuple[float, ...]
    s_nec: float
    unnecessary_ratio: float
    s_suf: float
    phi_s: float
    kappa_min: int | None
    kappa_insufficient: bool

    def to_record(self) -> dict[str, Any]:
        return {
            "claim_id": self.claim_id,
            "candidate_index": self.candidate_index,
            "logp_full": self.logp_full,
            "deltas": list(self.deltas),
            "s_nec": self.s_nec,
            "unnecessary_ratio": self.unnecessary_ratio,
            "s_suf": self.s_suf,
            "phi_s": self.phi_s,
            "kappa_min": self.kappa_min,
            "kappa_insufficient": self.kappa_insufficient,
        }


def _require_scorable(candidate: RationaleCandidate) -> None:
    if not candidate.steps:
        raise ValueError(
            f"candidate {candidate.claim_id}/{candidate.candidate_index} has no steps"
        )
    if candidate.predicted_label is None:
        raise ValueError(
            f"candidate {candidate.claim_id}/{candidate.candidate_index} has no prediction"
        )


def _score_subset(
    claim: Claim,
    candidate: RationaleCandidate,
    scorer: ScoringBackend,
    step_indices: Sequence[int],
) -> float:
    texts = tuple(candidate.steps[i].text for i in step_indices)
    assert candidate.predicted_label is not None
    return scorer.score(ScoringRequest(claim.text, texts, candidate.predicted_label))


def step_deltas(
    claim: Claim,
    candidate: RationaleCandidate,
    scorer: ScoringBackend,
) -> tuple[float, list[float]]:
    """Score the full rationale and each leave-one-out ablation.

    Returns (full-rationale log-probability, per-step deltas), where
    delta[l] = full score minus the score with step l removed. Costs
    exactly L + 1 scorer calls for L steps, before any caching.
    """
    _require_scorable(candidate)
    indices = list(range(len(candidate.steps)))
    logp_full = _score_subset(claim, candidate, scorer, indices)
    deltas = [
        logp_full - _score_subset(claim, candidate, scorer, indices[:l] + indices[l + 1 :])
        for l in indices
    ]
    return logp_full, deltas


def necessity_score(
    deltas: Sequence[float],
    zeta: float = DEFAULT_DELTA_THRESHOLD,
) -> tuple[float, float]:
    """Mean-delta necessity discounted by the unnecessary-step ratio.

    A step counts as unnecessary when its delta is strictly below
    ``zeta``. Returns (score, ratio); the score is max(0, mean delta)
    scaled by (1 - ratio), so it is 0 whenever every step is
    unnecessary and never negative.
    """
    if not deltas:
        raise ValueError("deltas must be non-empty")
    ratio = sum(1 for delta in deltas if delta < zeta) / len(deltas)
    mean = sum(deltas) / len(deltas)
    return max(0.0, mean) * (1.0 - ratio), ratio


def top_step_indices(deltas: Sequence[float], kappa: int) -> list[int]:
    """Indices of the kappa highest-delta steps, in original order.

    Ranking ties break toward the lower step index; the selected
    indices are returned sorted ascending so the subset reads in the
    rationale's own order.
    """
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    ranked = sorted(range(len(deltas)), key=lambda l: (-deltas[l], l))
    return sorted(ranked[: min(kappa, len(deltas))])


def sufficiency_score(
    claim: Claim,
    candidate: RationaleCandidate,
    deltas: Sequence[float],
    scorer: ScoringBackend,
    kappa: int = DEFAULT_TOP_STEPS,
) -> float:
    """Score gap between the top-kappa steps alone and the full rationale.

    Positive values mean the strongest steps alone explain the
    prediction better than the full rationale; the value is left
    unclamped. When kappa >= L the subset is the full rationale and the
    gap is exactly 0.
    """
    _require_scorable(candidate)
    if len(deltas) != len(candidate.steps):
        raise ValueError("deltas length must match the candidate's step count")
    logp_full = _score_subset(claim, candidate, scorer, range(len(candidate.steps)))
    subset = top_step_indices(deltas, kappa)
    return _score_subset(claim, candidate, scorer, subset) - logp_full


def minimal_sufficient_kappa(
    claim: Claim,
    candidate: RationaleCandidate,
    deltas: Sequence[float],
    scorer: ScoringBackend,
    epsilon: float = DEFAULT_SUFFICIENCY_TOLERANCE,
) -> tuple[int | None, bool]:
    """Smallest top-step prefix that nearly recovers the full score.

    Checks kappa = 1..L in order and returns the first kappa whose
    top-step subset scores at least (1 - epsilon) times the full
    rationale's log-probability (an inclusive bound; both sides are
    <= 0, so the threshold sits closer to zero than the full score).
    When no prefix qualifies, returns (None, True); downstream treats
    that case as "needs all L steps".
    """
    _require_scorable(candidate)
    if len(deltas) != len(candidate.steps):
        raise ValueError("deltas length must match the candidate's step count")
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"epsilon out of range: {epsilon}")
    logp_full = _score_subset(claim, candidate, scorer, range(len(candidate.steps)))
    threshold = (1.0 - epsilon) * logp_full
    for kappa in range(1, len(candidate.steps) + 1):
        subset = top_step_indices(deltas, kappa)
        if _score_subset(claim, candidate, scorer, subset) >= threshold:
            return kappa, False
    return None, True


def self_score(s_nec: float, s_suf: float, clamp_sufficiency: bool = False) -> float:
    """Combine necessity and the sufficiency gap into one self score.

    The gap enters as (1 - s_suf) without clamping by default, so a
    rationale whose best steps vastly outperform the whole (a large
    positive gap) is discounted, and one whose steps are jointly needed
    is not. ``clamp_sufficiency`` restricts the gap to [0, 1] first for
    callers that want a bounded variant.
    """
    if clamp_sufficiency:
        s_suf = min(max(s_suf, 0.0), 1.0)
    return s_nec * (1.0 - s_suf)


def attribute_candidate(
    claim: Claim,
    candidate: RationaleCandidate,
    scorer: ScoringBackend,
    zeta: float = DEFAULT_DELTA_THRESHOLD,
    kappa: int = DEFAULT_TOP_STEPS,
    epsilon: float = DEFAULT_SUFFICIENCY_TOLERANCE,
    clamp_sufficiency: bool = False,
) -> AttributionProfile:
    """Run the full attribution battery for one candidate."""
    logp_full, deltas = step_deltas(claim, candidate, scorer)
    s_nec, ratio = necessity_score(deltas, zeta=zeta)
    s_suf = sufficiency_score(claim, candidate, deltas, scorer, kappa=kappa)
    kappa_min, insufficient = minimal_sufficient_kappa(
        claim, candidate, deltas, scorer, epsilon=epsilon
    )
    return AttributionProfile(
        claim_id=claim.id,
        candidate_index=candidate.candidate_index,
        logp_full=logp_full,
        deltas=tuple(deltas),
        s_nec=s_nec,
        unnecessary_ratio=ratio,
        s_suf=s_suf,
        phi_s=self_score(s_nec, s_suf, clamp_sufficiency=clamp_sufficiency),
        kappa_min=kappa_min,
        kappa_insufficient=insufficient,
    )
