"""stepsift: curation of step-by-step misinformation-detection rationales.

The package scores each verification step of a generated rationale by
counterfactual deletion, clusters steps across candidates into shared
perspectives, combines the resulting necessity/sufficiency and
perspective-value signals into one ranking score, and exports the
selected rationales as supervised fine-tuning data.
"""

from .records import (
    Claim,
    FilterReason,
    FilterVerdict,
    Label,
    RationaleCandidate,
    Split,
    VerificationStep,
)
from .corpus import ClaimCorpus, DuplicateIdError, dedup_claims, load_candidates, load_claims, save_records
from .parsing import (
    apply_heuristic_filters,
    count_tokens,
    detect_degenerate,
    extract_prediction,
    parse_generation,
    segment_steps,
)
from .backends import (
    GenerationConfig,
    HashedBagOfWordsEmbedder,
    OpenAICompatClient,
    RemoteEmbedder,
    RemoteLogProbScorer,
    ScoringRequest,
    SyntheticLogisticOracle,
)
from .self_attribution import (
    AttributionProfile,
    attribute_candidate,
    minimal_sufficient_kappa,
    necessity_score,
    self_score,
    step_deltas,
    sufficiency_score,
)
from .mutual_attribution import (
    PerspectiveImportance,
    PerspectiveModel,
    cluster_perspectives,
    mutual_score,
    perspective_delta,
    perspective_importance,
    score_claim_candidates,
)
from .curation import CuratedRecord, combined_score, export_sft, score_records, select_curated
from .pipeline import PipelineConfig, PipelineStageError, run_pipeline
from .analytics import detection_metrics, judge_scores

__version__ = "0.1.0"

__all__ = [
    "AttributionProfile",
    "Claim",
    "ClaimCorpus",
    "CuratedRecord",
    "DuplicateIdError",
    "FilterReason",
    "FilterVerdict",
    "GenerationConfig",
    "HashedBagOfWordsEmbedder",
    "Label",
    "OpenAICompatClient",
    "PerspectiveImportance",
    "PerspectiveModel",
    "PipelineConfig",
    "PipelineStageError",
    "RationaleCandidate",
    "RemoteEmbedder",
    "RemoteLogProbScorer",
    "ScoringRequest",
    "Split",
    "SyntheticLogisticOracle",
    "VerificationStep",
    "apply_heuristic_filters",
    "attribute_candidate",
    "cluster_perspectives",
    "combined_score",
    "count_tokens",
    "dedup_claims",
    "detect_degenerate",
    "detection_metrics",
    "export_sft",
    "extract_prediction",
    "judge_scores",
    "load_candidates",
    "load_claims",
    "minimal_sufficient_kappa",
    "mutual_score",
    "necessity_score",
    "parse_generation",
    "perspective_delta",
    "perspective_importance",
    "run_pipeline",
    "save_records",
    "score_claim_candidates",
    "score_records",
    "segment_steps",
    "select_curated",
    "self_score",
    "step_deltas",
    "sufficiency_score",
]
