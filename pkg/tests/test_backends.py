from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stepsift.backends.base import (
    GenerationConfig,
    MalformedResponseError,
    ScoringRequest,
    ServerStatusError,
)
from stepsift.backends.remote import (
    OpenAICompatClient,
    RemoteEmbedder,
    RemoteLogProbScorer,
    generate_for_corpus,
    generate_rationales,
)
from stepsift.backends.synthetic import (
    HashedBagOfWordsEmbedder,
    SyntheticLogisticOracle,
    log_sigmoid,
)
from stepsift.records import Claim, Label


def make_client(server, **kwargs) -> OpenAICompatClient:
    kwargs.setdefault("retry_backoff", 0.0)
    return OpenAICompatClient(server.base_url, **kwargs)


class TestScoringRequest:
    def test_coerces_list_and_string_label(self):
        request = ScoringRequest("claim", ["a", "b"], "fake")
        assert request.step_texts == ("a", "b")
        assert request.label is Label.FAKE


class TestSyntheticOracle:
    def test_log_sigmoid_worked_values(self):
        assert log_sigmoid(1.5) == pytest.approx(-0.2014132779827524, abs=1e-15)
        assert log_sigmoid(0.0) == pytest.approx(-math.log(2.0), abs=1e-15)

    def test_score_matches_closed_form(self):
        oracle = SyntheticLogisticOracle({"a": 1.0, "b": 0.5}, bias=0.0)
        real = oracle.score(ScoringRequest("claim", ("a", "b"), Label.REAL))
        fake = oracle.score(ScoringRequest("claim", ("a", "b"), Label.FAKE))
        assert real == pytest.approx(-0.2014132779827524, abs=1e-12)
        assert fake == pytest.approx(log_sigmoid(-1.5), abs=1e-12)

    @given(
        st.lists(st.floats(min_value=-5, max_value=5), min_size=0, max_size=6),
        st.floats(min_value=-5, max_value=5),
    )
    def test_label_probabilities_sum_to_one(self, weights, bias):
        names = [f"s{i}" for i in range(len(weights))]
        oracle = SyntheticLogisticOracle(dict(zip(names, weights)), bias=bias)
        real = oracle.score(ScoringRequest("claim", tuple(names), Label.REAL))
        fake = oracle.score(ScoringRequest("claim", tuple(names), Label.FAKE))
        assert real <= 0.0 and fake <= 0.0
        assert math.exp(real) + math.exp(fake) == pytest.approx(1.0, abs=1e-12)

    def test_unknown_step_text_is_an_error(self):
        oracle = SyntheticLogisticOracle({"known": 1.0})
        with pytest.raises(KeyError):
            oracle.score(ScoringRequest("claim", ("unknown",), Label.REAL))


class TestHashedEmbedder:
    def test_vectors_are_unit_norm(self):
        embedder = HashedBagOfWordsEmbedder(dim=16)
        for text in ["one token", "a much longer sentence with several words", ""]:
            assert np.linalg.norm(embedder.embed_one(text)) == pytest.approx(1.0, abs=1e-12)

    def test_order_and_case_insensitive(self):
        embedder = HashedBagOfWordsEmbedder(dim=32)
        a = embedder.embed_one("Source Check Passed")
        b = embedder.embed_one("passed source check")
        np.testing.assert_allclose(a, b, atol=0)

    def test_empty_text_maps_to_first_basis_vector(self):
        vector = HashedBagOfWordsEmbedder(dim=8).embed_one("   ")
        expected = np.zeros(8)
        expected[0] = 1.0
        np.testing.assert_array_equal(vector, expected)

    def test_stable_across_instances(self):
        a = HashedBagOfWordsEmbedder(dim=64).embed_one("claim verification step")
        b = HashedBagOfWordsEmbedder(dim=64).embed_one("claim verification step")
        np.testing.assert_array_equal(a, b)

    def test_rejects_zero_dim(self):
        with pytest.raises(ValueError):
            HashedBagOfWordsEmbedder(dim=0)


class TestRemoteScorer:
    def test_request_body_contract(self, mock_server):
        scorer = RemoteLogProbScorer(make_client(mock_server), model="scorer-1")
        scorer.score(ScoringRequest("the claim", ("step one",), Label.REAL))
        path, body = mock_server.requests[-1]
        assert path.endswith("/v1/chat/completions")
        assert body["model"] == "scorer-1"
        assert body["temperature"] == 0.0
        assert body["logprobs"] is True
        assert body["top_logprobs"] == 8
        assert "the claim" in body["messages"][0]["content"]
        assert "step one" in body["messages"][0]["content"]

    def test_score_sums_label_token_logprobs(self, mock_server):
        scorer = RemoteLogProbScorer(make_client(mock_server), model="m")
        value = scorer.score(ScoringRequest("c", ("s",), Label.REAL))
        assert value == pytest.approx(-0.3, abs=1e-12)

    def test_multi_token_label_spelling(self, mock_server):
        mock_server.logprob_content = [
            {"token": "re", "logprob": -0.1, "top_logprobs": []},
            {"token": "al", "logprob": -0.25, "top_logprobs": []},
        ]
        scorer = RemoteLogProbScorer(make_client(mock_server), model="m")
        value = scorer.score(ScoringRequest("c", ("s",), Label.REAL))
        assert value == pytest.approx(-0.35, abs=1e-12)

    def test_falls_back_to_top_logprobs_for_unselected_label(self, mock_server):
        # Server samples "real"; asking for fake must read the alternatives.
        scorer = RemoteLogProbScorer(make_client(mock_server), model="m")
        value = scorer.score(ScoringRequest("c", ("s",), Label.FAKE))
        assert value == pytest.approx(-1.35, abs=1e-12)

    def test_positive_logprob_is_clamped_to_zero(self, mock_server):
        mock_server.label_logprobs = {"real": 0.25, "fake": -1.0}
        scorer = RemoteLogProbScorer(make_client(mock_server), model="m")
        assert scorer.score(ScoringRequest("c", ("s",), Label.REAL)) == 0.0

    def test_missing_logprobs_is_malformed(self, mock_server):
        mock_server.scripted.append(
            {"choices": [{"message": {"content": "real"}, "finish_reason": "stop"}]}
        )
        scorer = RemoteLogProbScorer(make_client(mock_server), model="m")
        with pytest.raises(MalformedResponseError):
            scorer.score(ScoringRequest("c", ("s",), Label.REAL))

    def test_label_absent_everywhere_is_malformed(self, mock_server):
        mock_server.logprob_content = [
            {"token": "maybe", "logprob": -0.2, "top_logprobs": []}
        ]
        scorer = RemoteLogProbScorer(make_client(mock_server), model="m")
        with pytest.raises(MalformedResponseError):
            scorer.score(ScoringRequest("c", ("s",), Label.REAL))

    def test_identical_requests_hit_the_cache(self, mock_server):
        scorer = RemoteLogProbScorer(make_client(mock_server), model="m")
        request = ScoringRequest("c", ("s1", "s2"), Label.REAL)
        first = scorer.score(request)
        second = scorer.score(ScoringRequest("c", ("s1", "s2"), Label.REAL))
        assert first == second
        assert mock_server.hits("/v1/chat/completions") == 1

    def test_different_subsets_are_distinct_cache_entries(self, mock_server):
        scorer = RemoteLogProbScorer(make_client(mock_server), model="m")
        scorer.score(ScoringRequest("c", ("s1", "s2"), Label.REAL))
        scorer.score(ScoringRequest("c", ("s1",), Label.REAL))
        scorer.score(ScoringRequest("c", ("s1", "s2"), Label.FAKE))
        assert mock_server.hits("/v1/chat/completions") == 3

    def test_retries_a_500_and_succeeds(self, mock_server):
        mock_server.fail_next = 1
        scorer = RemoteLogProbScorer(make_client(mock_server, retry_budget=2), model="m")
        value = scorer.score(ScoringRequest("c", ("s",), Label.REAL))
        assert value == pytest.approx(-0.3, abs=1e-12)
        assert mock_server.hits("/v1/chat/completions") == 2

    def test_retry_budget_exhaustion_raises(self, mock_server):
        mock_server.fail_next = 5
        scorer = RemoteLogProbScorer(make_client(mock_server, retry_budget=1), model="m")
        with pytest.raises(ServerStatusError) as excinfo:
            scorer.score(ScoringRequest("c", ("s",), Label.REAL))
        assert excinfo.value.status >= 500
        assert excinfo.value.retryable
        assert mock_server.hits("/v1/chat/completions") == 2

    def test_4xx_is_not_retried(self, mock_server):
        mock_server.scripted.append((404, {"error": "bad route"}))
        scorer = RemoteLogProbScorer(make_client(mock_server, retry_budget=3), model="m")
        with pytest.raises(ServerStatusError) as excinfo:
            scorer.score(ScoringRequest("c", ("s",), Label.REAL))
        assert excinfo.value.status == 404
        assert not excinfo.value.retryable
        assert mock_server.hits("/v1/chat/completions") == 1

    def test_score_many_preserves_order(self, mock_server):
        mock_server.logprob_content = None
        scorer = RemoteLogProbScorer(make_client(mock_server, max_in_flight=3), model="m")
        batch = [
            ScoringRequest("c", (f"s{i}",), Label.REAL if i % 2 == 0 else Label.FAKE)
            for i in range(6)
        ]
        values = scorer.score_many(batch)
        expected = [scorer.score(request) for request in batch]  # cached now
        assert values == expected


class TestRemoteEmbedder:
    def test_vectors_are_normalized_client_side(self, mock_server):
        embedder = RemoteEmbedder(make_client(mock_server), model="emb")
        vectors = embedder.embed(["alpha", "beta"])
        for vector in vectors:
            assert np.linalg.norm(vector) == pytest.approx(1.0, abs=1e-12)

    def test_duplicates_sent_once_and_cached(self, mock_server):
        embedder = RemoteEmbedder(make_client(mock_server), model="emb")
        first = embedder.embed(["a", "b", "a"])
        assert mock_server.hits("/v1/embeddings") == 1
        _path, body = mock_server.requests[-1]
        assert body["input"] == ["a", "b"]
        np.testing.assert_array_equal(first[0], first[2])
        embedder.embed(["a"])
        assert mock_server.hits("/v1/embeddings") == 1

    def test_count_mismatch_is_malformed(self, mock_server):
        mock_server.scripted.append({"object": "list", "data": []})
        embedder = RemoteEmbedder(make_client(mock_server), model="emb")
        with pytest.raises(MalformedResponseError):
            embedder.embed(["something"])


class TestGeneration:
    def test_request_body_uses_generation_sampling(self, mock_server):
        claim = Claim(id="c1", text="the bridge reopened on monday", label="real")
        config = GenerationConfig(model="gen-1")
        mock_server.completion_text = (
            "1. The transit authority posted the reopening notice.\n"
            "2. Local reporters covered the first crossing.\n"
            "Final Answer: \\boxed{real}"
        )
        candidates = generate_rationales(claim, config, make_client(mock_server))
        _path, body = mock_server.requests[-1]
        assert body["model"] == "gen-1"
        assert body["temperature"] == 0.6
        assert body["max_tokens"] == 32768
        assert claim.text in body["messages"][0]["content"]
        assert len(candidates) == 1
        assert candidates[0].predicted_label is Label.REAL
        assert len(candidates[0].steps) == 2
        assert not candidates[0].truncated

    def test_length_finish_reason_marks_truncation(self, mock_server):
        mock_server.finish_reason = "length"
        claim = Claim(id="c1", text="t", label="fake")
        candidates = generate_rationales(
            claim, GenerationConfig(model="g"), make_client(mock_server)
        )
        assert candidates[0].truncated

    def test_candidate_indices_continue_across_models(self, mock_server):
        claim = Claim(id="c1", text="t", label="real")
        configs = [
            GenerationConfig(model="g1", candidates_per_model=2),
            GenerationConfig(model="g2", candidates_per_model=1),
        ]
        candidates, failures = generate_for_corpus([claim], configs, make_client(mock_server))
        assert failures == []
        assert [c.candidate_index for c in candidates] == [1, 2, 3]
        assert [c.generator for c in candidates] == ["g1", "g1", "g2"]

    def test_one_failed_claim_does_not_stop_the_batch(self, mock_server):
        claims = [
            Claim(id="c1", text="first", label="real"),
            Claim(id="c2", text="second", label="fake"),
        ]
        mock_server.fail_next = 1
        client = make_client(mock_server, retry_budget=0)
        candidates, failures = generate_for_corpus(
            claims, [GenerationConfig(model="g")], client
        )
        assert [f.claim_id for f in failures] == ["c1"]
        assert "500" in failures[0].error
        assert [c.claim_id for c in candidates] == ["c2"]


class TestGenerationConfig:
    def test_defaults(self):
        config = GenerationConfig(model="m")
        assert config.temperature == 0.6
        assert config.max_tokens == 32768

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"model": ""},
            {"model": "m", "temperature": 2.5},
            {"model": "m", "max_tokens": 0},
            {"model": "m", "candidates_per_model": 0},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            GenerationConfig(**kwargs)
