"""Scoring and embedding backends: deterministic synthetic ones for tests
and fixtures, and a remote HTTP client for OpenAI-compatible servers."""

from .base import (
    BackendError,
    EmbeddingBackend,
    GenerationConfig,
    MalformedResponseError,
    ScoringBackend,
    ScoringRequest,
    ServerStatusError,
    TransportError,
)
from .synthetic import HashedBagOfWordsEmbedder, SyntheticLogisticOracle, log_sigmoid
from .remote import (
    OpenAICompatClient,
    RemoteEmbedder,
    RemoteLogProbScorer,
    generate_for_corpus,
    generate_rationales,
)

__all__ = [
    "BackendError",
    "EmbeddingBackend",
    "GenerationConfig",
    "HashedBagOfWordsEmbedder",
    "MalformedResponseError",
    "OpenAICompatClient",
    "RemoteEmbedder",
    "RemoteLogProbScorer",
    "ScoringBackend",
    "ScoringRequest",
    "ServerStatusError",
    "SyntheticLogisticOracle",
    "TransportError",
    "generate_for_corpus",
    "generate_rationales",
    "log_sigmoid",
]
