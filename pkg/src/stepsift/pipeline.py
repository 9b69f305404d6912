"""End-to-end pipeline: load, dedup, (optionally generate), filter,
attribute, cluster, curate, export.

Every stage writes its report before the next stage runs, so a failure
surfaces the stage name while leaving the partial reports on disk for
inspection. The summary is free of timestamps and absolute paths;
running the same config twice produces byte-identical outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .analytics import write_summary_json
from .backends.base import EmbeddingBackend, GenerationConfig, ScoringBackend
from .backends.remote import OpenAICompatClient, RemoteEmbedder, RemoteLogProbScorer, generate_for_corpus
from .backends.synthetic import HashedBagOfWordsEmbedder, SyntheticLogisticOracle
from .clustering import kmeans
from .corpus import ClaimCorpus, dedup_claims, load_candidates, load_claims, save_records
from .curation import (
    EXPORT_MODES,
    NORMALIZATION_MODES,
    RATIONALE_MODE,
    RAW_MODE,
    CuratedRecord,
    export_sft,
    score_records,
    select_curated,
)
from .mutual_attribution import (
    ClaimPerspectiveResult,
    PerspectiveModel,
    score_claim_candidates,
)
from .parsing import DEFAULT_MIN_STEP_CHARS, DEFAULT_TOKEN_LIMIT, apply_heuristic_filters
from .records import Claim, RationaleCandidate
from .self_attribution import (
    DEFAULT_DELTA_THRESHOLD,
    DEFAULT_SUFFICIENCY_TOLERANCE,
    DEFAULT_TOP_STEPS,
    AttributionProfile,
    attribute_candidate,
)

CLAIM_SCOPE = "claim"
GLOBAL_SCOPE = "global"

REPORT_FILES = {
    "rejects": "rejects.jsonl",
    "generation_failures": "generation_failures.jsonl",
    "candidates": "candidates.jsonl",
    "filter_report": "filter_report.jsonl",
    "attribution": "attribution.jsonl",
    "perspectives": "perspectives.jsonl",
    "curated": "curated.jsonl",
    "sft": "sft.jsonl",
    "summary": "summary.json",
}


class PipelineStageError(Exception):
    """A stage failed; carries the stage name for exit diagnostics."""

    def __init__(self, stage: str, cause: BaseException) -> None:
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    """Full configuration of one pipeline run, loadable from one JSON file."""

    claims_path: str
    output_dir: str
    candidates_path: str | None = None
    scoring: dict[str, Any] = field(default_factory=dict)
    embedding: dict[str, Any] = field(default_factory=lambda: {"kind": "hashed"})
    generation: dict[str, Any] | None = None
    dedup: bool = True
    dedup_prefix_tokens: int = 100
    dedup_case_sensitive: bool = True
    token_limit: int = DEFAULT_TOKEN_LIMIT
    min_step_chars: int = DEFAULT_MIN_STEP_CHARS
    zeta: float = DEFAULT_DELTA_THRESHOLD
    kappa: int = DEFAULT_TOP_STEPS
    epsilon: float = DEFAULT_SUFFICIENCY_TOLERANCE
    clusters: int = 8
    seed: int = 0
    budget: int = 1000
    per_claim_cap: int = 1
    normalization_mode: str = RAW_MODE
    export_mode: str = RATIONALE_MODE
    clamp_sufficiency: bool = False
    normalize_mutual_by_count: bool = False
    cluster_scope: str = CLAIM_SCOPE

    def __post_init__(self) -> None:
        if self.candidates_path is None and self.generation is None:
            raise ValueError("config needs candidates_path or a generation section")
        if self.normalization_mode not in NORMALIZATION_MODES:
            raise ValueError(f"unknown normalization_mode: {self.normalization_mode!r}")
        if self.export_mode not in EXPORT_MODES:
            raise ValueError(f"unknown export_mode: {self.export_mode!r}")
        if self.cluster_scope not in (CLAIM_SCOPE, GLOBAL_SCOPE):
            raise ValueError(f"unknown cluster_scope: {self.cluster_scope!r}")
        if self.budget < 1 or self.per_claim_cap < 1:
            raise ValueError("budget and per_claim_cap must be >= 1")
        if self.clusters < 1:
            raise ValueError("clusters must be >= 1")
        if self.kappa < 1:
            raise ValueError("kappa must be >= 1")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon out of range: {self.epsilon}")

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "PipelineConfig":
        data = dict(raw)
        if "M" in data and "clusters" not in data:
            data["clusters"] = data.pop("M")
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))


def build_scorer(spec: Mapping[str, Any]) -> ScoringBackend:
    """Construct a scoring backend from its config section."""
    kind = spec.get("kind", "synthetic")
    if kind == "synthetic":
        weights = dict(spec.get("weights", {}))
        bias = float(spec.get("bias", 0.0))
        weights_path = spec.get("weights_path")
        if weights_path:
            with open(weights_path, "r", encoding="utf-8") as handle:
                stored = json.load(handle)
            weights.update(stored.get("weights", {}))
            bias = float(stored.get("bias", bias))
        return SyntheticLogisticOracle(weights, bias=bias)
    if kind == "remote":
        client = OpenAICompatClient(
            base_url=spec["base_url"],
            api_key_env=spec.get("api_key_env", "STEPSIFT_API_KEY"),
            timeout=float(spec.get("timeout", 120.0)),
            retry_budget=int(spec.get("retry_budget", 2)),
            retry_backoff=float(spec.get("retry_backoff", 0.5)),
            max_in_flight=int(spec.get("max_in_flight", 4)),
        )
        return RemoteLogProbScorer(client, model=spec["model"])
    raise ValueError(f"unknown scoring backend kind: {kind!r}")


def build_embedder(spec: Mapping[str, Any]) -> EmbeddingBackend:
    kind = spec.get("kind", "hashed")
    if kind == "hashed":
        return HashedBagOfWordsEmbedder(dim=int(spec.get("dim", 64)))
    if kind == "remote":
        client = OpenAICompatClient(
            base_url=spec["base_url"],
            api_key_env=spec.get("api_key_env", "STEPSIFT_API_KEY"),
            timeout=float(spec.get("timeout", 120.0)),
            retry_budget=int(spec.get("retry_budget", 2)),
            retry_backoff=float(spec.get("retry_backoff", 0.5)),
        )
        return RemoteEmbedder(client, model=spec["model"])
    raise ValueError(f"unknown embedding backend kind: {kind!r}")


def _generation_configs(section: Mapping[str, Any]) -> list[GenerationConfig]:
    configs = []
    for entry in section.get("models", []):
        configs.append(
            GenerationConfig(
                model=entry["model"],
                temperature=float(entry.get("temperature", section.get("temperature", 0.6))),
                max_tokens=int(entry.get("max_tokens", section.get("max_tokens", 32768))),
                candidates_per_model=int(entry.get("candidates_per_model", 1)),
            )
        )
    if not configs:
        raise ValueError("generation section lists no models")
    return configs


def _fit_global_models(
    grouped: Mapping[str, list[RationaleCandidate]],
    claims: Mapping[str, Claim],
    embedder: EmbeddingBackend,
    clusters: int,
    seed: int,
) -> dict[str, PerspectiveModel]:
    """One clustering over every claim's steps, sliced back per claim."""
    keys: list[tuple[str, int, int]] = []
    vectors: list[np.ndarray] = []
    for claim_id in sorted(grouped):
        for candidate in grouped[claim_id]:
            for step_index, vector in enumerate(embedder.embed(list(candidate.step_texts()))):
                keys.append((claim_id, candidate.candidate_index, step_index))
                vectors.append(np.asarray(vector, dtype=np.float64))
    if not keys:
        return {}
    M = min(clusters, len(keys))
    centroids, labels = kmeans(np.stack(vectors), M, seed=seed)
    norms = np.linalg.norm(centroids, axis=1, keepdims=True)
    unit = centroids / np.where(norms > 1e-12, norms, 1.0)
    centroid_rows = tuple(tuple(float(x) for x in row) for row in unit)
    models: dict[str, PerspectiveModel] = {}
    for claim_id in sorted(grouped):
        assignment = {
            (cand, step): int(label)
            for (cid, cand, step), label in zip(keys, labels)
            if cid == claim_id
        }
        models[claim_id] = PerspectiveModel(
            M=M, seed=seed, centroids=centroid_rows, assignment=assignment
        )
    return models


@dataclass
class PipelineResult:
    """Everything a run produced, for callers that want more than the summary."""

    summary: dict[str, Any]
    curated: list[CuratedRecord]
    profiles: list[AttributionProfile]
    perspective_results: list[ClaimPerspectiveResult]


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Run every stage under ``config``, writing all reports to output_dir."""
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    counts: dict[str, int] = {}

    def report_path(name: str) -> Path:
        return out_dir / REPORT_FILES[name]

    # Stage: load claims (rejects are data, not failures).
    try:
        corpus, rejects = load_claims(config.claims_path)
        save_records(rejects, report_path("rejects"))
    except Exception as exc:
        raise PipelineStageError("load", exc) from exc
    counts["claims_loaded"] = len(corpus)
    counts["claims_rejected"] = len(rejects)

    # Stage: near-duplicate removal.
    try:
        if config.dedup:
            corpus = dedup_claims(
                corpus,
                prefix_tokens=config.dedup_prefix_tokens,
                case_sensitive=config.dedup_case_sensitive,
            )
    except Exception as exc:
        raise PipelineStageError("dedup", exc) from exc
    counts["claims_after_dedup"] = len(corpus)

    # Stage: obtain candidates (from disk, or by sampling generators).
    try:
        if config.generation is not None:
            client = OpenAICompatClient(
                base_url=config.generation["base_url"],
                api_key_env=config.generation.get("api_key_env", "STEPSIFT_API_KEY"),
                timeout=float(config.generation.get("timeout", 300.0)),
                retry_budget=int(config.generation.get("retry_budget", 2)),
                retry_backoff=float(config.generation.get("retry_backoff", 0.5)),
            )
            candidates, failures = generate_for_corpus(
                corpus, _generation_configs(config.generation), client
            )
            save_records(failures, report_path("generation_failures"))
            save_records(candidates, report_path("candidates"))
            counts["generation_failures"] = len(failures)
        else:
            assert config.candidates_path is not None
            candidates = load_candidates(config.candidates_path)
    except PipelineStageError:
        raise
    except Exception as exc:
        raise PipelineStageError("candidates", exc) from exc
    matched = [c for c in candidates if c.claim_id in corpus]
    counts["candidates_total"] = len(candidates)
    counts["candidates_unmatched"] = len(candidates) - len(matched)

    # Stage: heuristic filtering.
    try:
        verdict_rows = []
        kept: list[RationaleCandidate] = []
        for candidate in matched:
            verdict = apply_heuristic_filters(
                candidate, corpus.get(candidate.claim_id), token_limit=config.token_limit
            )
            verdict_rows.append(verdict.to_record(candidate.claim_id, candidate.candidate_index))
            if verdict.keep:
                kept.append(candidate)
        save_records(verdict_rows, report_path("filter_report"))
    except Exception as exc:
        raise PipelineStageError("filter", exc) from exc
    scorable = [c for c in kept if c.steps]
    counts["candidates_kept"] = len(kept)
    counts["candidates_skipped_no_steps"] = len(kept) - len(scorable)

    scorer = build_scorer(config.scoring)
    embedder = build_embedder(config.embedding)

    # Stage: per-step counterfactual attribution.
    try:
        profiles: list[AttributionProfile] = []
        phi_s_by_key: dict[tuple[str, int], float] = {}
        for candidate in scorable:
            profile = attribute_candidate(
                corpus.get(candidate.claim_id),
                candidate,
                scorer,
                zeta=config.zeta,
                kappa=config.kappa,
                epsilon=config.epsilon,
                clamp_sufficiency=config.clamp_sufficiency,
            )
            profiles.append(profile)
            phi_s_by_key[(candidate.claim_id, candidate.candidate_index)] = profile.phi_s
        save_records(profiles, report_path("attribution"))
    except Exception as exc:
        raise PipelineStageError("self_attribution", exc) from exc
    counts["profiles"] = len(profiles)

    # Stage: perspective clustering + mutual attribution.
    try:
        grouped: dict[str, list[RationaleCandidate]] = {}
        for candidate in scorable:
            grouped.setdefault(candidate.claim_id, []).append(candidate)
        prebuilt: dict[str, PerspectiveModel] = {}
        if config.cluster_scope == GLOBAL_SCOPE:
            prebuilt = _fit_global_models(
                grouped, corpus._by_id, embedder, config.clusters, config.seed
            )
        perspective_results: list[ClaimPerspectiveResult] = []
        phi_m_by_key: dict[tuple[str, int], float] = {}
        for claim_id in sorted(grouped):
            result = score_claim_candidates(
                corpus.get(claim_id),
                grouped[claim_id],
                scorer,
                embedder,
                M=config.clusters,
                seed=config.seed,
                normalize_by_count=config.normalize_mutual_by_count,
                model=prebuilt.get(claim_id),
            )
            perspective_results.append(result)
            for candidate_index, phi_m in result.phi_m.items():
                phi_m_by_key[(claim_id, candidate_index)] = phi_m
        save_records(perspective_results, report_path("perspectives"))
    except Exception as exc:
        raise PipelineStageError("mutual_attribution", exc) from exc
    counts["claims_scored"] = len(perspective_results)

    # Stage: combine scores and select under budget.
    try:
        unscored = [
            CuratedRecord(
                claim=corpus.get(candidate.claim_id),
                candidate=candidate,
                phi_s=phi_s_by_key[(candidate.claim_id, candidate.candidate_index)],
                phi_m=phi_m_by_key[(candidate.claim_id, candidate.candidate_index)],
                combined=0.0,
            )
            for candidate in scorable
        ]
        curated_pool = score_records(unscored, mode=config.normalization_mode)
        selected = select_curated(
            curated_pool, budget=config.budget, per_claim_cap=config.per_claim_cap
        )
        save_records(selected, report_path("curated"))
    except Exception as exc:
        raise PipelineStageError("curate", exc) from exc
    counts["curated_selected"] = len(selected)

    # Stage: SFT export.
    try:
        counts["exported"] = export_sft(selected, config.export_mode, report_path("sft"))
    except Exception as exc:
        raise PipelineStageError("export", exc) from exc

    reports = {
        name: REPORT_FILES[name]
        for name in sorted(REPORT_FILES)
        if (out_dir / REPORT_FILES[name]).exists()
    }
    summary = {
        "stages": counts,
        "reports": reports,
        "settings": {
            "zeta": config.zeta,
            "kappa": config.kappa,
            "epsilon": config.epsilon,
            "clusters": config.clusters,
            "seed": config.seed,
            "budget": config.budget,
            "per_claim_cap": config.per_claim_cap,
            "normalization_mode": config.normalization_mode,
            "export_mode": config.export_mode,
            "cluster_scope": config.cluster_scope,
        },
    }
    try:
        write_summary_json(summary, report_path("summary"))
    except Exception as exc:
        raise PipelineStageError("summarize", exc) from exc
    return PipelineResult(
        summary=summary,
        curated=selected,
        profiles=profiles,
        perspective_results=perspective_results,
    )
