"""Command-line interface.

Subcommands mirror the pipeline stages (ingest, generate, filter,
attribute, cluster, curate, export) plus diagnostics (diagnose,
evaluate) and the all-in-one `run`. Backend settings are JSON:
either an inline object or a path to a JSON file, e.g.

    --scoring '{"kind": "synthetic", "weights_path": "weights.json"}'
    --scoring scoring.json
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from . import analytics, figures
from .analytics import AnalyticsError
from .backends.base import GenerationConfig
from .backends.remote import OpenAICompatClient, generate_for_corpus
from .corpus import (
    ClaimCorpus,
    CorpusError,
    dedup_claims,
    load_candidates,
    load_claims,
    save_claims,
    save_records,
)
from .curation import CuratedRecord, export_sft, score_records, select_curated
from .mutual_attribution import score_claim_candidates
from .parsing import apply_heuristic_filters
from .pipeline import (
    PipelineConfig,
    PipelineStageError,
    build_embedder,
    build_scorer,
    run_pipeline,
)
from .records import RationaleCandidate, read_jsonl
from .self_attribution import attribute_candidate


def _backend_spec(value: str) -> dict[str, Any]:
    text = value.strip()
    if text.startswith("{"):
        return json.loads(text)
    with open(text, "r", encoding="utf-8") as handle:
        return json.load(handle)


def _load_inputs(claims_path: str, candidates_path: str) -> tuple[ClaimCorpus, list[RationaleCandidate]]:
    corpus, _rejects = load_claims(claims_path)
    candidates = [c for c in load_candidates(candidates_path) if c.claim_id in corpus]
    return corpus, candidates


def _scorable(candidates: Sequence[RationaleCandidate]) -> list[RationaleCandidate]:
    return [c for c in candidates if c.steps and c.predicted_label is not None]


def _read_records(path: str) -> list[dict[str, Any]]:
    rows = []
    for line_number, parsed in read_jsonl(path):
        if not isinstance(parsed, dict):
            raise CorpusError(f"{path}:{line_number}: malformed record")
        rows.append(parsed)
    return rows


# ---------------------------------------------------------------------------
# Subcommand handlers


def _cmd_ingest(args: argparse.Namespace) -> int:
    corpus, rejects = load_claims(args.claims)
    if args.rejects:
        save_records(rejects, args.rejects)
    loaded = len(corpus)
    if not args.no_dedup:
        corpus = dedup_claims(
            corpus,
            prefix_tokens=args.prefix_tokens,
            case_sensitive=not args.case_insensitive,
        )
    save_claims(corpus, args.out)
    print(f"ingest: {loaded} loaded, {len(rejects)} rejected, {len(corpus)} kept")
    return 0


def _cmd_generate(args: argparse.Namespace) -> int:
    corpus, _ = load_claims(args.claims)
    client = OpenAICompatClient(
        base_url=args.base_url,
        api_key_env=args.api_key_env,
        retry_budget=args.retry_budget,
        retry_backoff=args.retry_backoff,
    )
    configs = [
        GenerationConfig(
            model=model,
            temperature=args.temperature,
            max_tokens=args.max_tokens,
            candidates_per_model=args.candidates_per_model,
        )
        for model in args.model
    ]
    candidates, failures = generate_for_corpus(corpus, configs, client)
    save_records(candidates, args.out)
    if args.failures:
        save_records(failures, args.failures)
    print(f"generate: {len(candidates)} candidates, {len(failures)} failures")
    return 0


def _cmd_filter(args: argparse.Namespace) -> int:
    corpus, candidates = _load_inputs(args.claims, args.candidates)
    rows = []
    kept = []
    for candidate in candidates:
        verdict = apply_heuristic_filters(
            candidate, corpus.get(candidate.claim_id), token_limit=args.token_limit
        )
        rows.append(verdict.to_record(candidate.claim_id, candidate.candidate_index))
        if verdict.keep:
            kept.append(candidate)
    save_records(rows, args.report)
    if args.kept:
        save_records(kept, args.kept)
    print(f"filter: {len(kept)} of {len(candidates)} kept")
    return 0


def _cmd_attribute(args: argparse.Namespace) -> int:
    corpus, candidates = _load_inputs(args.claims, args.candidates)
    scorer = build_scorer(_backend_spec(args.scoring))
    profiles = [
        attribute_candidate(
            corpus.get(candidate.claim_id),
            candidate,
            scorer,
            zeta=args.zeta,
            kappa=args.kappa,
            epsilon=args.epsilon,
            clamp_sufficiency=args.clamp_sufficiency,
        )
        for candidate in _scorable(candidates)
    ]
    save_records(profiles, args.out)
    print(f"attribute: {len(profiles)} profiles")
    return 0


def _cmd_cluster(args: argparse.Namespace) -> int:
    corpus, candidates = _load_inputs(args.claims, args.candidates)
    scorer = build_scorer(_backend_spec(args.scoring))
    embedder = build_embedder(_backend_spec(args.embedding))
    grouped: dict[str, list[RationaleCandidate]] = {}
    for candidate in _scorable(candidates):
        grouped.setdefault(candidate.claim_id, []).append(candidate)
    results = [
        score_claim_candidates(
            corpus.get(claim_id),
            grouped[claim_id],
            scorer,
            embedder,
            M=args.clusters,
            seed=args.seed,
            normalize_by_count=args.normalize_by_count,
        )
        for claim_id in sorted(grouped)
    ]
    save_records(results, args.out)
    print(f"cluster: {len(results)} claims scored")
    return 0


def _cmd_curate(args: argparse.Namespace) -> int:
    corpus, candidates = _load_inputs(args.claims, args.candidates)
    by_key = {(c.claim_id, c.candidate_index): c for c in candidates}
    phi_s = {
        (row["claim_id"], int(row["candidate_index"])): float(row["phi_s"])
        for row in _read_records(args.attribution)
    }
    phi_m: dict[tuple[str, int], float] = {}
    for row in _read_records(args.perspectives):
        for candidate_index, value in row["phi_m"].items():
            phi_m[(row["claim_id"], int(candidate_index))] = float(value)
    pool = []
    for key, candidate in sorted(by_key.items()):
        if key not in phi_s or key not in phi_m:
            continue
        pool.append(
            CuratedRecord(
                claim=corpus.get(candidate.claim_id),
                candidate=candidate,
                phi_s=phi_s[key],
                phi_m=phi_m[key],
                combined=0.0,
            )
        )
    scored = score_records(pool, mode=args.normalization)
    selected = select_curated(scored, budget=args.budget, per_claim_cap=args.per_claim_cap)
    save_records(selected, args.out)
    print(f"curate: {len(selected)} of {len(scored)} selected")
    return 0


def _cmd_export(args: argparse.Namespace) -> int:
    corpus, candidates = _load_inputs(args.claims, args.candidates)
    by_key = {(c.claim_id, c.candidate_index): c for c in candidates}
    records = []
    for row in _read_records(args.curated):
        key = (row["claim_id"], int(row["candidate_index"]))
        candidate = by_key.get(key)
        if candidate is None:
            raise CorpusError(f"curated row references unknown candidate {key}")
        records.append(
            CuratedRecord(
                claim=corpus.get(candidate.claim_id),
                candidate=candidate,
                phi_s=float(row.get("phi_s", 0.0)),
                phi_m=float(row.get("phi_m", 0.0)),
                combined=float(row.get("combined", 0.0)),
            )
        )
    count = export_sft(records, args.mode, args.out)
    print(f"export: {count} records ({args.mode})")
    return 0


def _cmd_diagnose(args: argparse.Namespace) -> int:
    corpus, candidates = _load_inputs(args.claims, args.candidates)
    scorer = build_scorer(_backend_spec(args.scoring))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scorable = _scorable(candidates)
    profiles = []
    correct_flags = []
    for candidate in scorable:
        claim = corpus.get(candidate.claim_id)
        profiles.append(
            attribute_candidate(
                claim,
                candidate,
                scorer,
                zeta=args.zeta,
                kappa=args.kappa,
                epsilon=args.epsilon,
            )
        )
        correct_flags.append(candidate.predicted_label == claim.label)

    distribution = analytics.delta_distribution(profiles, correct_flags, bins=args.bins)
    correct_profiles = [p for p, ok in zip(profiles, correct_flags) if ok]
    kappa_hist = analytics.kappa_histogram(correct_profiles or profiles)
    steps_hist = analytics.step_count_histogram(scorable)
    ratio_hist = analytics.unnecessary_ratio_histogram(correct_profiles or profiles)

    analytics.write_histogram_csv(distribution.correct, out_dir / "delta_correct.csv")
    analytics.write_histogram_csv(distribution.incorrect, out_dir / "delta_incorrect.csv")
    analytics.write_histogram_csv(kappa_hist, out_dir / "kappa_min.csv")
    analytics.write_histogram_csv(steps_hist, out_dir / "step_counts.csv")
    analytics.write_histogram_csv(ratio_hist, out_dir / "unnecessary_ratio.csv")
    summary = {
        "candidates_profiled": len(profiles),
        "negative_fraction_correct": distribution.negative_fraction_correct,
        "negative_fraction_incorrect": distribution.negative_fraction_incorrect,
        "token_consumption": analytics.token_consumption(scorable),
    }
    analytics.write_summary_json(summary, out_dir / "diagnose_summary.json")
    if not args.no_figures:
        figures.save_delta_distribution_figure(distribution, out_dir / "delta_distribution.png")
        figures.save_histogram_figure(
            kappa_hist, out_dir / "kappa_min.png", "Minimal sufficient prefix", "kappa"
        )
        figures.save_histogram_figure(
            steps_hist, out_dir / "step_counts.png", "Steps per candidate", "steps"
        )
        figures.save_histogram_figure(
            ratio_hist,
            out_dir / "unnecessary_ratio.png",
            "Unnecessary-step ratio",
            "ratio",
        )
    print(f"diagnose: {len(profiles)} candidates profiled -> {out_dir}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    corpus, candidates = _load_inputs(args.claims, args.candidates)
    pairs = [
        (corpus.get(candidate.claim_id).label, candidate.predicted_label)
        for candidate in candidates
    ]
    metrics = analytics.detection_metrics(pairs)
    analytics.write_summary_json(metrics.to_record(), args.out)
    line = (
        f"evaluate: accuracy {metrics.accuracy:.4f}, "
        f"F1 fake {metrics.f1_fake:.4f}, F1 real {metrics.f1_real:.4f}"
    )
    if args.judge_base_url and args.judge_model:
        client = OpenAICompatClient(
            base_url=args.judge_base_url, api_key_env=args.api_key_env
        )
        items = [
            (corpus.get(c.claim_id).text, corpus.get(c.claim_id).label, c.raw_text)
            for c in candidates
        ]
        report = analytics.judge_scores(items, client, args.judge_model)
        if args.judge_out:
            analytics.write_summary_json(report.to_record(), args.judge_out)
        line += (
            f"; judge means M {report.means['M']:.2f} "
            f"I {report.means['I']:.2f} R {report.means['R']:.2f}"
        )
    print(line)
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    config = PipelineConfig.from_file(args.config)
    result = run_pipeline(config)
    stages = result.summary["stages"]
    print(
        "run: "
        + ", ".join(f"{name}={value}" for name, value in stages.items())
    )
    return 0


# ---------------------------------------------------------------------------
# Parser wiring


def _add_scoring_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scoring", required=True, help="backend settings (inline JSON or file)")
    parser.add_argument("--zeta", type=float, default=0.0, help="delta threshold below which a step counts as unnecessary")
    parser.add_argument("--kappa", type=int, default=3, help="top steps kept for the sufficiency gap")
    parser.add_argument("--epsilon", type=float, default=0.01, help="relative tolerance for the minimal sufficient prefix")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stepsift",
        description="Curate step-by-step misinformation-detection rationales.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate, dedup, and save a claim corpus")
    p.add_argument("--claims", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rejects", default=None)
    p.add_argument("--no-dedup", action="store_true")
    p.add_argument("--prefix-tokens", type=int, default=100)
    p.add_argument("--case-insensitive", action="store_true")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("generate", help="sample rationale candidates from a server")
    p.add_argument("--claims", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--base-url", required=True)
    p.add_argument("--model", action="append", required=True)
    p.add_argument("--temperature", type=float, default=0.6)
    p.add_argument("--max-tokens", type=int, default=32768)
    p.add_argument("--candidates-per-model", type=int, default=1)
    p.add_argument("--retry-budget", type=int, default=2)
    p.add_argument("--retry-backoff", type=float, default=0.5)
    p.add_argument("--api-key-env", default="STEPSIFT_API_KEY")
    p.add_argument("--failures", default=None)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("filter", help="apply the heuristic discard rules")
    p.add_argument("--claims", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--kept", default=None)
    p.add_argument("--token-limit", type=int, default=4096)
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("attribute", help="score per-step counterfactual deltas")
    p.add_argument("--claims", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--out", required=True)
    _add_scoring_args(p)
    p.add_argument("--clamp-sufficiency", action="store_true")
    p.set_defaults(func=_cmd_attribute)

    p = sub.add_parser("cluster", help="cluster steps into perspectives and score them")
    p.add_argument("--claims", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scoring", required=True)
    p.add_argument("--embedding", default='{"kind": "hashed"}')
    p.add_argument("--clusters", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalize-by-count", action="store_true")
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("curate", help="combine scores and select under budget")
    p.add_argument("--claims", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--attribution", required=True)
    p.add_argument("--perspectives", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--per-claim-cap", type=int, default=1)
    p.add_argument("--normalization", choices=["raw", "zscore"], default="raw")
    p.set_defaults(func=_cmd_curate)

    p = sub.add_parser("export", help="write curated records as SFT pairs")
    p.add_argument("--claims", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--curated", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["rationale", "label_only"], default="rationale")
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("diagnose", help="emit distribution reports and figures")
    p.add_argument("--claims", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--out-dir", required=True)
    _add_scoring_args(p)
    p.add_argument("--bins", type=int, default=40)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("evaluate", help="detection metrics, optionally judge scores")
    p.add_argument("--claims", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--judge-base-url", default=None)
    p.add_argument("--judge-model", default=None)
    p.add_argument("--judge-out", default=None)
    p.add_argument("--api-key-env", default="STEPSIFT_API_KEY")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("run", help="run the full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PipelineStageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (AnalyticsError, CorpusError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
