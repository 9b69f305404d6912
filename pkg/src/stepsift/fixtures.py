"""Synthetic planted corpora with analytically known quality structure.

Each claim gets one "good" candidate (a few steps that all support the
gold label) and two "bad" candidates (padded with steps that undermine
it), wired to a logistic scoring oracle whose weights are emitted
alongside. Supporting steps get positive weight magnitude for real
claims and the mirrored negative weight for fake claims, so "supports
the gold label" means the same thing under both labels and the good
candidate provably outranks the bad ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .corpus import save_records
from .parsing import parse_generation
from .records import Claim, Label, RationaleCandidate

GOOD_GENERATOR = "gen-good"
BAD_GENERATOR = "gen-pad"

_GOOD_STEP = (
    "Verify the primary source record and confirm the quoted figure "
    "matches the official archive entry ref{tag}."
)
_PAD_STEP = (
    "Speculate loosely about hidden motives and echo unsourced rumor "
    "chatter from reposts tag{tag}."
)


@dataclass
class PlantedCorpus:
    """A generated fixture plus the oracle weights that score it."""

    claims: list[Claim]
    candidates: list[RationaleCandidate]
    weights: dict[str, float]
    bias: float
    claims_path: Path | None = None
    candidates_path: Path | None = None
    weights_path: Path | None = None

    def good_keys(self) -> set[tuple[str, int]]:
        return {
            (c.claim_id, c.candidate_index)
            for c in self.candidates
            if c.generator == GOOD_GENERATOR
        }


def _claim_text(index: int, label: Label) -> str:
    topic = [
        "city council approved the transit budget",
        "health agency recalled a snack batch",
        "utility reported a planned outage window",
        "museum extended its weekend hours",
        "school district updated its lunch menu",
    ][index % 5]
    flavor = "according to the posted minutes" if label is Label.REAL else (
        "according to a viral screenshot"
    )
    return f"Report {index}: the {topic} this week, {flavor}, case {index}."


def _render_candidate(step_bodies: list[str], label: Label) -> str:
    lines = [f"{i + 1}. {body}" for i, body in enumerate(step_bodies)]
    lines.append(f"Final Answer: \\boxed{{{label.value}}}")
    return "\n".join(lines)


def make_planted_corpus(
    out_dir: str | Path | None = None,
    n_claims: int = 50,
    good_steps: int = 3,
    bad_steps: int = 12,
    bad_undermining: int = 8,
    support_weight: float = 1.0,
    undermine_weight: float = 0.5,
) -> PlantedCorpus:
    """Build the planted fixture; write JSONL + weights when out_dir is set.

    Per claim: candidate 1 is good (``good_steps`` supporting steps of
    magnitude ``support_weight``); candidates 2 and 3 are bad
    (``bad_steps`` steps of which ``bad_undermining`` undermine the
    label with magnitude ``undermine_weight`` and the rest support it).
    """
    if bad_undermining > bad_steps:
        raise ValueError("bad_undermining cannot exceed bad_steps")
    claims: list[Claim] = []
    candidates: list[RationaleCandidate] = []
    weights: dict[str, float] = {}
    for i in range(n_claims):
        label = Label.REAL if i % 2 == 0 else Label.FAKE
        sign = 1.0 if label is Label.REAL else -1.0
        claim = Claim(id=f"c{i:04d}", text=_claim_text(i, label), label=label)
        claims.append(claim)

        plans: list[tuple[str, list[tuple[str, float]]]] = []
        good_plan = [
            (_GOOD_STEP.format(tag=f"{i}x1s{l}"), sign * support_weight)
            for l in range(good_steps)
        ]
        plans.append((GOOD_GENERATOR, good_plan))
        for k in (2, 3):
            bad_plan = []
            for l in range(bad_steps):
                if l < bad_undermining:
                    bad_plan.append(
                        (_PAD_STEP.format(tag=f"{i}x{k}s{l}"), -sign * undermine_weight)
                    )
                else:
                    bad_plan.append(
                        (_GOOD_STEP.format(tag=f"{i}x{k}s{l}"), sign * support_weight)
                    )
            plans.append((BAD_GENERATOR, bad_plan))

        for candidate_index, (generator, plan) in enumerate(plans, start=1):
            raw_text = _render_candidate([body for body, _ in plan], label)
            candidate = parse_generation(
                claim_id=claim.id,
                generator=generator,
                raw_text=raw_text,
                candidate_index=candidate_index,
            )
            if len(candidate.steps) != len(plan):
                raise AssertionError(
                    f"fixture segmentation drift: {len(candidate.steps)} != {len(plan)}"
                )
            for step, (_body, weight) in zip(candidate.steps, plan):
                weights[step.text] = weight
            candidates.append(candidate)

    fixture = PlantedCorpus(claims=claims, candidates=candidates, weights=weights, bias=0.0)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        fixture.claims_path = out_dir / "claims.jsonl"
        fixture.candidates_path = out_dir / "candidates.jsonl"
        fixture.weights_path = out_dir / "weights.json"
        save_records(claims, fixture.claims_path)
        save_records(candidates, fixture.candidates_path)
        with open(fixture.weights_path, "w", encoding="utf-8") as handle:
            json.dump(
                {"bias": fixture.bias, "weights": weights},
                handle,
                ensure_ascii=False,
                indent=2,
                sort_keys=True,
            )
            handle.write("\n")
    return fixture
