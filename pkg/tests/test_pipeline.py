from __future__ import annotations

import json

import pytest

from stepsift.backends.remote import RemoteEmbedder, RemoteLogProbScorer
from stepsift.backends.synthetic import HashedBagOfWordsEmbedder, SyntheticLogisticOracle
from stepsift.fixtures import make_planted_corpus
from stepsift.pipeline import (
    PipelineConfig,
    PipelineStageError,
    build_embedder,
    build_scorer,
    run_pipeline,
)


@pytest.fixture(scope="module")
def planted(tmp_path_factory):
    return make_planted_corpus(tmp_path_factory.mktemp("planted"), n_claims=6)


def base_config(planted, out_dir, **overrides) -> PipelineConfig:
    raw = {
        "claims_path": str(planted.claims_path),
        "candidates_path": str(planted.candidates_path),
        "output_dir": str(out_dir),
        "scoring": {"kind": "synthetic", "weights_path": str(planted.weights_path)},
        "budget": 6,
    }
    raw.update(overrides)
    return PipelineConfig.from_dict(raw)


class TestPipelineConfig:
    def test_m_alias_maps_to_clusters(self, planted, tmp_path):
        config = base_config(planted, tmp_path, M=5)
        assert config.clusters == 5

    def test_unknown_keys_rejected(self, planted, tmp_path):
        with pytest.raises(ValueError, match="unknown config keys"):
            base_config(planted, tmp_path, surprise=1)

    def test_needs_a_candidate_source(self, tmp_path):
        with pytest.raises(ValueError, match="candidates_path or a generation"):
            PipelineConfig(claims_path="x", output_dir=str(tmp_path))

    @pytest.mark.parametrize(
        "overrides",
        [
            {"normalization_mode": "minmax"},
            {"export_mode": "parquet"},
            {"cluster_scope": "galaxy"},
            {"budget": 0},
            {"epsilon": 1.5},
        ],
    )
    def test_validation(self, planted, tmp_path, overrides):
        with pytest.raises(ValueError):
            base_config(planted, tmp_path, **overrides)

    def test_from_file(self, planted, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(
            json.dumps(
                {
                    "claims_path": str(planted.claims_path),
                    "candidates_path": str(planted.candidates_path),
                    "output_dir": str(tmp_path / "out"),
                }
            )
        )
        config = PipelineConfig.from_file(path)
        assert config.budget == 1000
        assert config.clusters == 8


class TestBackendFactories:
    def test_synthetic_scorer_merges_inline_and_file_weights(self, planted):
        scorer = build_scorer(
            {
                "kind": "synthetic",
                "weights": {"extra step": 2.0},
                "weights_path": str(planted.weights_path),
            }
        )
        assert isinstance(scorer, SyntheticLogisticOracle)
        assert scorer.step_weights["extra step"] == 2.0
        assert len(scorer.step_weights) == len(planted.weights) + 1

    def test_default_kinds(self):
        assert isinstance(build_scorer({"weights": {}}), SyntheticLogisticOracle)
        assert isinstance(build_embedder({}), HashedBagOfWordsEmbedder)

    def test_remote_kinds(self):
        scorer = build_scorer(
            {"kind": "remote", "base_url": "http://localhost:1", "model": "m"}
        )
        assert isinstance(scorer, RemoteLogProbScorer)
        embedder = build_embedder(
            {"kind": "remote", "base_url": "http://localhost:1", "model": "m"}
        )
        assert isinstance(embedder, RemoteEmbedder)

    def test_unknown_kinds_rejected(self):
        with pytest.raises(ValueError):
            build_scorer({"kind": "quantum"})
        with pytest.raises(ValueError):
            build_embedder({"kind": "quantum"})


class TestRunPipeline:
    def test_stage_counts_and_result(self, planted, tmp_path):
        result = run_pipeline(base_config(planted, tmp_path / "out"))
        stages = result.summary["stages"]
        assert stages["claims_loaded"] == 6
        assert stages["claims_after_dedup"] == 6
        assert stages["candidates_total"] == 18
        assert stages["candidates_kept"] == 18
        assert stages["profiles"] == 18
        assert stages["claims_scored"] == 6
        assert stages["curated_selected"] == 6
        assert stages["exported"] == 6
        assert len(result.curated) == 6
        assert len(result.profiles) == 18
        assert len(result.perspective_results) == 6

    def test_selects_only_planted_good_candidates(self, planted, tmp_path):
        result = run_pipeline(base_config(planted, tmp_path / "out"))
        picked = {(r.claim.id, r.candidate.candidate_index) for r in result.curated}
        assert picked == planted.good_keys()

    def test_summary_lists_only_written_reports(self, planted, tmp_path):
        out_dir = tmp_path / "out"
        result = run_pipeline(base_config(planted, out_dir))
        reports = result.summary["reports"]
        assert "generation_failures" not in reports
        for name in reports.values():
            assert (out_dir / name).exists()
            assert "/" not in name  # relative filenames only

    def test_global_cluster_scope(self, planted, tmp_path):
        result = run_pipeline(
            base_config(planted, tmp_path / "out", cluster_scope="global", clusters=4)
        )
        models = [r.model for r in result.perspective_results]
        assert all(model.M == 4 for model in models)
        # One shared clustering: every claim's model carries the same centroids.
        assert len({model.centroids for model in models}) == 1
        picked = {(r.claim.id, r.candidate.candidate_index) for r in result.curated}
        assert picked == planted.good_keys()

    def test_zscore_normalization_still_selects_good(self, planted, tmp_path):
        result = run_pipeline(
            base_config(planted, tmp_path / "out", normalization_mode="zscore")
        )
        picked = {(r.claim.id, r.candidate.candidate_index) for r in result.curated}
        assert picked == planted.good_keys()

    def test_stage_error_names_the_stage(self, planted, tmp_path):
        config = base_config(planted, tmp_path / "out", scoring={"weights": {}})
        with pytest.raises(PipelineStageError) as excinfo:
            run_pipeline(config)
        assert excinfo.value.stage == "self_attribution"
        assert "self_attribution" in str(excinfo.value)
        # Reports from the completed stages are still on disk.
        assert (tmp_path / "out" / "filter_report.jsonl").exists()

    def test_load_failure(self, planted, tmp_path):
        config = base_config(planted, tmp_path / "out")
        config.claims_path = str(tmp_path / "missing.jsonl")
        with pytest.raises(PipelineStageError) as excinfo:
            run_pipeline(config)
        assert excinfo.value.stage == "load"


class TestGenerationDrivenRun:
    COMPLETION = (
        "1. The archive entry matches the claimed figure exactly.\n"
        "2. Two independent outlets report the same event.\n"
        "Final Answer: \\boxed{real}"
    )
    STEP_WEIGHTS = {
        "1. The archive entry matches the claimed figure exactly.": 1.0,
        "2. Two independent outlets report the same event.": 0.5,
    }

    def test_generates_then_filters_then_curates(self, planted, tmp_path, mock_server):
        mock_server.completion_text = self.COMPLETION
        out_dir = tmp_path / "out"
        config = PipelineConfig.from_dict(
            {
                "claims_path": str(planted.claims_path),
                "output_dir": str(out_dir),
                "scoring": {"kind": "synthetic", "weights": self.STEP_WEIGHTS},
                "generation": {
                    "base_url": mock_server.base_url,
                    "models": [{"model": "gen-a"}],
                    "retry_backoff": 0,
                },
                "budget": 6,
            }
        )
        result = run_pipeline(config)
        stages = result.summary["stages"]
        assert stages["generation_failures"] == 0
        assert stages["candidates_total"] == 6
        # The canned completion says "real"; the three fake claims are
        # discarded by the wrong-label rule.
        assert stages["candidates_kept"] == 3
        assert stages["curated_selected"] == 3
        assert (out_dir / "generation_failures.jsonl").exists()
        assert (out_dir / "candidates.jsonl").exists()
        assert "generation_failures" in result.summary["reports"]
