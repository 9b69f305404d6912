"""Cross-candidate attribution through shared verification perspectives.

All candidates for one claim are pooled: their steps are embedded and
clustered into a small set of "perspectives" (recurring kinds of
checks). Each perspective's value is then measured counterfactually per
candidate by deleting every step assigned to that perspective at once
and scoring the candidate's predicted label without them.

The per-perspective importance aggregates those deltas through a
smooth penalty: each delta contributes -ln(1 + e^(-delta)) / K, where K
is the number of candidates for the claim. The importance is therefore
always <= 0; deltas near zero cost about ln 2 each, strongly positive
deltas cost almost nothing, and strongly negative deltas cost their own
magnitude. A candidate's mutual score is the sum of the importances of
the distinct perspectives it touches, so candidates that lean on
low-value perspectives are penalized once per perspective, not once
per step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .backends.base import EmbeddingBackend, ScoringBackend, ScoringRequest
from .clustering import kmeans
from .records import Claim, RationaleCandidate

DEFAULT_PERSPECTIVES = 8


def softplus(x: float) -> float:
    """Numerically stable ln(1 + e^x), finite even for |x| ~ 700."""
    return float(np.logaddexp(0.0, x))


@dataclass(frozen=True)
class PerspectiveModel:
    """A fitted clustering of one claim's step embeddings.

    ``assignment`` maps (candidate_index, step_index) to a perspective
    id in 0..M-1. Centroids are stored unit-normalized (direction only);
    the assignment itself is what downstream scoring consumes.
    """

    M: int
    seed: int
    centroids: tuple[tuple[float, ...], ...]
    assignment: dict[tuple[int, int], int]

    def perspectives_of(self, candidate_index: int) -> set[int]:
        return {
            perspective
            for (cand, _step), perspective in self.assignment.items()
            if cand == candidate_index
        }

    def steps_in_perspective(self, candidate_index: int, perspective: int) -> list[int]:
        return sorted(
            step
            for (cand, step), assigned in self.assignment.items()
            if cand == candidate_index and assigned == perspective
        )

    def to_record(self) -> dict[str, Any]:
        return {
            "M": self.M,
            "seed": self.seed,
            "centroids": [list(center) for center in self.centroids],
            "assignment": [
                {"candidate_index": cand, "step_index": step, "perspective": perspective}
                for (cand, step), perspective in sorted(self.assignment.items())
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), ensure_ascii=False)

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "PerspectiveModel":
        assignment = {
            (int(entry["candidate_index"]), int(entry["step_index"])): int(entry["perspective"])
            for entry in record["assignment"]
        }
        return cls(
            M=int(record["M"]),
            seed=int(record["seed"]),
            centroids=tuple(tuple(float(x) for x in center) for center in record["centroids"]),
            assignment=assignment,
        )


@dataclass(frozen=True)
class PerspectiveImportance:
    """Per-perspective importance for one claim's candidate pool."""

    per_perspective: dict[int, float]
    occurrence: dict[int, int]
    candidate_count: int


def cluster_perspectives(
    step_embeddings: Mapping[int, Sequence[np.ndarray]],
    M: int = DEFAULT_PERSPECTIVES,
    seed: int = 0,
) -> PerspectiveModel:
    """Cluster the pooled step embeddings of one claim's candidates.

    ``step_embeddings`` maps candidate_index to that candidate's step
    vectors in step order. Requires at least M steps in total. The
    result is a pure function of (embeddings, M, seed).
    """
    keys: list[tuple[int, int]] = []
    vectors: list[np.ndarray] = []
    for candidate_index in sorted(step_embeddings):
        for step_index, vector in enumerate(step_embeddings[candidate_index]):
            keys.append((candidate_index, step_index))
            vectors.append(np.asarray(vector, dtype=np.float64))
    if not keys:
        raise ValueError("no step embeddings to cluster")
    if M < 1 or M > len(keys):
        raise ValueError(f"M must be in 1..{len(keys)}, got {M}")
    points = np.stack(vectors)
    centroids, labels = kmeans(points, M, seed=seed)
    norms = np.linalg.norm(centroids, axis=1, keepdims=True)
    safe = np.where(norms > 1e-12, norms, 1.0)
    unit_centroids = centroids / safe
    return PerspectiveModel(
        M=M,
        seed=seed,
        centroids=tuple(tuple(float(x) for x in row) for row in unit_centroids),
        assignment={key: int(label) for key, label in zip(keys, labels)},
    )


def perspective_delta(
    claim: Claim,
    candidate: RationaleCandidate,
    perspective: int,
    model: PerspectiveModel,
    scorer: ScoringBackend,
) -> float:
    """Score drop from deleting every step of one perspective at once.

    Remaining steps keep their original order. Only meaningful when the
    candidate actually uses the perspective; asking about an untouched
    perspective is an error rather than a silent zero.
    """
    if candidate.predicted_label is None:
        raise ValueError("candidate has no prediction to score")
    removed = set(model.steps_in_perspective(candidate.candidate_index, perspective))
    if not removed:
        raise ValueError(
            f"candidate {candidate.candidate_index} has no steps in perspective {perspective}"
        )
    all_texts = candidate.step_texts()
    kept = tuple(text for index, text in enumerate(all_texts) if index not in removed)
    full = scorer.score(ScoringRequest(claim.text, all_texts, candidate.predicted_label))
    without = scorer.score(ScoringRequest(claim.text, kept, candidate.predicted_label))
    return full - without


def perspective_importance(
    deltas: Mapping[tuple[int, int], float],
    candidate_count: int,
    M: int,
) -> PerspectiveImportance:
    """Aggregate per-(perspective, candidate) deltas into importances.

    ``deltas`` is keyed by (perspective, candidate_index). Perspective
    importance is -(1/K) * sum over its deltas of ln(1 + e^(-delta)),
    always <= 0 and exactly 0 for perspectives no candidate uses.
    """
    if candidate_count < 1:
        raise ValueError("candidate_count must be >= 1")
    per_perspective = {m: 0.0 for m in range(M)}
    occurrence = {m: 0 for m in range(M)}
    for (perspective, _candidate), delta in sorted(deltas.items()):
        if not 0 <= perspective < M:
            raise ValueError(f"perspective id out of range: {perspective}")
        per_perspective[perspective] -= softplus(-delta) / candidate_count
        occurrence[perspective] += 1
    return PerspectiveImportance(
        per_perspective=per_perspective,
        occurrence=occurrence,
        candidate_count=candidate_count,
    )


def mutual_score(
    candidate: RationaleCandidate,
    model: PerspectiveModel,
    importance: PerspectiveImportance,
    normalize_by_count: bool = False,
) -> float:
    """Sum the importances of the distinct perspectives a candidate uses.

    Set semantics: a perspective counts once no matter how many steps
    land in it. ``normalize_by_count`` divides by the number of distinct
    perspectives instead (an averaged variant, off by default).
    """
    perspectives = model.perspectives_of(candidate.candidate_index)
    if not perspectives:
        return 0.0
    total = sum(importance.per_perspective[m] for m in sorted(perspectives))
    if normalize_by_count:
        return total / len(perspectives)
    return total


@dataclass(frozen=True)
class ClaimPerspectiveResult:
    """Mutual-attribution output for one claim's candidate pool."""

    claim_id: str
    model: PerspectiveModel
    importance: PerspectiveImportance
    deltas: dict[tuple[int, int], float]
    phi_m: dict[int, float]

    def to_record(self) -> dict[str, Any]:
        model_record = self.model.to_record()
        return {
            "claim_id": self.claim_id,
            "M": self.model.M,
            "seed": self.model.seed,
            "assignment": model_record["assignment"],
            "phi": {
                str(m): self.importance.per_perspective[m]
                for m in sorted(self.importance.per_perspective)
            },
            "phi_m": {str(k): self.phi_m[k] for k in sorted(self.phi_m)},
        }


def score_claim_candidates(
    claim: Claim,
    candidates: Sequence[RationaleCandidate],
    scorer: ScoringBackend,
    embedder: EmbeddingBackend,
    M: int = DEFAULT_PERSPECTIVES,
    seed: int = 0,
    normalize_by_count: bool = False,
    model: PerspectiveModel | None = None,
) -> ClaimPerspectiveResult:
    """Run the full mutual-attribution pass for one claim.

    Requests M perspectives but never more than the pooled step count.
    Pass a prebuilt ``model`` to reuse an externally fitted clustering
    (e.g. a corpus-global one); it must cover all candidates' steps.
    """
    scorable = [c for c in candidates if c.steps and c.predicted_label is not None]
    if not scorable:
        raise ValueError(f"claim {claim.id!r} has no scorable candidates")
    if model is None:
        embeddings = {
            candidate.candidate_index: embedder.embed(list(candidate.step_texts()))
            for candidate in scorable
        }
        total_steps = sum(len(v) for v in embeddings.values())
        model = cluster_perspectives(embeddings, M=min(M, total_steps), seed=seed)
    deltas: dict[tuple[int, int], float] = {}
    for candidate in scorable:
        for perspective in sorted(model.perspectives_of(candidate.candidate_index)):
            deltas[(perspective, candidate.candidate_index)] = perspective_delta(
                claim, candidate, perspective, model, scorer
            )
    importance = perspective_importance(deltas, candidate_count=len(scorable), M=model.M)
    phi_m = {
        candidate.candidate_index: mutual_score(
            candidate, model, importance, normalize_by_count=normalize_by_count
        )
        for candidate in scorable
    }
    return ClaimPerspectiveResult(
        claim_id=claim.id,
        model=model,
        importance=importance,
        deltas=deltas,
        phi_m=phi_m,
    )
