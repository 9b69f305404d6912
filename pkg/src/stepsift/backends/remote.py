"""OpenAI-compatible HTTP backends: generation, logprob scoring, embeddings.

Label probabilities are elicited with a short verdict prompt: the
request asks for per-token log-probabilities, and the score of a label
is the sum of the logprobs of the tokens that spell it. When the
server's sampled answer is the other label, the requested label's
logprob is taken from the top-logprob alternatives of the first
generated position. Each label is scored independently; no
normalization across labels is forced.

Scoring responses are cached in memory, keyed by a content hash of
(model, claim, step subset, label), so repeated identical requests cost
no network traffic. Transient failures (transport errors and 5xx) are
retried up to a configured budget.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence, TypeVar

import numpy as np
import requests

from .. import prompts
from ..records import Claim, Label, RationaleCandidate
from ..parsing import parse_generation
from .base import (
    GenerationConfig,
    MalformedResponseError,
    ScoringRequest,
    ServerStatusError,
    TransportError,
)

DEFAULT_API_KEY_ENV = "STEPSIFT_API_KEY"
DEFAULT_TIMEOUT = 120.0
DEFAULT_RETRY_BUDGET = 2
DEFAULT_MAX_IN_FLIGHT = 4

T = TypeVar("T")
U = TypeVar("U")


class OpenAICompatClient:
    """Thin JSON-over-HTTP client for an OpenAI-compatible server.

    ``retry_budget`` is the number of retries after the first attempt;
    only transport errors and 5xx responses are retried. The API key is
    read from ``api_key_env`` if set; a missing key simply sends no
    Authorization header, which local servers typically accept.
    """

    def __init__(
        self,
        base_url: str,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        timeout: float = DEFAULT_TIMEOUT,
        retry_budget: int = DEFAULT_RETRY_BUDGET,
        retry_backoff: float = 0.5,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.api_key = os.environ.get(api_key_env, "")
        self.timeout = timeout
        self.retry_budget = retry_budget
        self.retry_backoff = retry_backoff
        self.max_in_flight = max(1, max_in_flight)
        self._session = requests.Session()

    def post(self, path: str, payload: dict[str, Any]) -> dict[str, Any]:
        url = f"{self.base_url}/{path.lstrip('/')}"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: TransportError | ServerStatusError | None = None
        for attempt in range(self.retry_budget + 1):
            if attempt > 0 and self.retry_backoff > 0:
                time.sleep(self.retry_backoff * attempt)
            try:
                response = self._session.post(
                    url, json=payload, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = TransportError(f"POST {url} failed: {exc}")
                continue
            if response.status_code >= 500:
                last_error = ServerStatusError(response.status_code, response.text[:200])
                continue
            if response.status_code >= 400:
                raise ServerStatusError(response.status_code, response.text[:200])
            try:
                return response.json()
            except ValueError as exc:
                raise MalformedResponseError(f"non-JSON response from {url}: {exc}") from exc
        assert last_error is not None
        raise last_error

    def map_bounded(self, fn: Callable[[T], U], items: Sequence[T]) -> list[U]:
        """Apply ``fn`` to items with bounded concurrency, preserving order."""
        if len(items) <= 1 or self.max_in_flight == 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            return list(pool.map(fn, items))


def _request_cache_key(model: str, request: ScoringRequest) -> str:
    payload = json.dumps(
        {
            "model": model,
            "claim": request.claim_text,
            "steps": list(request.step_texts),
            "label": request.label.value,
        },
        ensure_ascii=False,
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _sum_label_logprob(content: list[dict[str, Any]], label: Label) -> float:
    """Sum the logprobs of the completion tokens that spell the label.

    Falls back to the top-logprob alternatives of the first position when
    the sampled completion does not contain the label at all.
    """
    tokens = [str(entry.get("token", "")) for entry in content]
    concat = "".join(tokens).lower()
    target = label.value
    position = concat.find(target)
    if position >= 0:
        total = 0.0
        cursor = 0
        for entry, token in zip(content, tokens):
            token_span = (cursor, cursor + len(token))
            cursor += len(token)
            if token_span[1] <= position or token_span[0] >= position + len(target):
                continue
            logprob = entry.get("logprob")
            if logprob is None:
                raise MalformedResponseError("logprob missing on a label token")
            total += float(logprob)
        return total
    if content:
        for alternative in content[0].get("top_logprobs", []) or []:
            if str(alternative.get("token", "")).strip().lower() == target:
                return float(alternative["logprob"])
    raise MalformedResponseError(f"label {target!r} not found in returned logprobs")


class RemoteLogProbScorer:
    """Scores log P(label | claim, steps) against a chat-completions server."""

    def __init__(
        self,
        client: OpenAICompatClient,
        model: str,
        max_answer_tokens: int = 4,
        top_logprobs: int = 8,
    ) -> None:
        self.client = client
        self.model = model
        self.max_answer_tokens = max_answer_tokens
        self.top_logprobs = top_logprobs
        self._cache: dict[str, float] = {}
        self._lock = threading.Lock()

    def score(self, request: ScoringRequest) -> float:
        key = _request_cache_key(self.model, request)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        prompt = prompts.render_scoring_prompt(request.claim_text, request.step_texts)
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0.0,
            "max_tokens": self.max_answer_tokens,
            "logprobs": True,
            "top_logprobs": self.top_logprobs,
        }
        response = self.client.post("/v1/chat/completions", payload)
        try:
            choice = response["choices"][0]
        except (KeyError, IndexError) as exc:
            raise MalformedResponseError("response has no choices") from exc
        logprobs = choice.get("logprobs") or {}
        content = logprobs.get("content")
        if not content:
            raise MalformedResponseError("response carries no token logprobs")
        value = _sum_label_logprob(content, request.label)
        # A log-probability can never be positive; clamp tiny numeric spill.
        value = min(value, 0.0)
        with self._lock:
            self._cache[key] = value
        return value

    def score_many(self, requests_batch: Sequence[ScoringRequest]) -> list[float]:
        return self.client.map_bounded(self.score, requests_batch)


class RemoteEmbedder:
    """Fetches embeddings from an OpenAI-compatible /v1/embeddings endpoint.

    Returned vectors are L2-normalized locally so downstream clustering
    sees unit vectors regardless of server conventions. A zero vector
    maps to the first basis vector, mirroring the synthetic embedder.
    """

    def __init__(self, client: OpenAICompatClient, model: str) -> None:
        self.client = client
        self.model = model
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        with self._lock:
            missing = [text for text in texts if text not in self._cache]
        if missing:
            payload = {"model": self.model, "input": list(dict.fromkeys(missing))}
            response = self.client.post("/v1/embeddings", payload)
            try:
                data = sorted(response["data"], key=lambda item: item["index"])
                vectors = [np.asarray(item["embedding"], dtype=np.float64) for item in data]
            except (KeyError, TypeError) as exc:
                raise MalformedResponseError(f"bad embeddings payload: {exc}") from exc
            unique_missing = list(dict.fromkeys(missing))
            if len(vectors) != len(unique_missing):
                raise MalformedResponseError(
                    f"expected {len(unique_missing)} embeddings, got {len(vectors)}"
                )
            with self._lock:
                for text, vector in zip(unique_missing, vectors):
                    norm = float(np.linalg.norm(vector))
                    if norm == 0.0:
                        vector = np.zeros_like(vector)
                        vector[0] = 1.0
                    else:
                        vector = vector / norm
                    self._cache[text] = vector
        with self._lock:
            return [self._cache[text] for text in texts]


@dataclass
class GenerationFailure:
    """One claim that could not be generated for, with the cause."""

    claim_id: str
    model: str
    error: str

    def to_record(self) -> dict[str, Any]:
        return {"claim_id": self.claim_id, "model": self.model, "error": self.error}


def generate_rationales(
    claim: Claim,
    config: GenerationConfig,
    client: OpenAICompatClient,
    first_candidate_index: int = 1,
) -> list[RationaleCandidate]:
    """Sample rationale candidates for one claim from one generator model."""
    candidates: list[RationaleCandidate] = []
    prompt = prompts.render_generation_prompt(claim.text)
    for offset in range(config.candidates_per_model):
        payload = {
            "model": config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": config.temperature,
            "max_tokens": config.max_tokens,
        }
        response = client.post("/v1/chat/completions", payload)
        try:
            choice = response["choices"][0]
            text = choice["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError("completion response has no message content") from exc
        truncated = choice.get("finish_reason") == "length"
        candidates.append(
            parse_generation(
                claim_id=claim.id,
                generator=config.model,
                raw_text=str(text),
                candidate_index=first_candidate_index + offset,
                truncated=truncated,
            )
        )
    return candidates


def generate_for_corpus(
    claims: Iterable[Claim],
    configs: Sequence[GenerationConfig],
    client: OpenAICompatClient,
) -> tuple[list[RationaleCandidate], list[GenerationFailure]]:
    """Generate candidates for every claim, never aborting the batch.

    A claim whose generation exhausts the retry budget is recorded as a
    failure and the batch moves on; candidate indices stay contiguous
    per claim across models.
    """
    candidates: list[RationaleCandidate] = []
    failures: list[GenerationFailure] = []
    for claim in claims:
        next_index = 1
        for config in configs:
            try:
                batch = generate_rationales(claim, config, client, next_index)
            except Exception as exc:  # noqa: BLE001 - failures become records
                failures.append(GenerationFailure(claim.id, config.model, str(exc)))
                continue
            candidates.extend(batch)
            next_index += len(batch)
    return candidates, failures
