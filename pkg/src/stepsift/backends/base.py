"""Backend contracts shared by the synthetic and remote implementations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from ..records import Label


@dataclass(frozen=True)
class ScoringRequest:
    """Ask for log P(label | claim, steps) for one subset of steps.

    ``step_texts`` is the subset being scored, in original rationale
    order; it may be empty (score the claim with no supporting analysis).
    """

    claim_text: str
    step_texts: tuple[str, ...]
    label: Label

    def __post_init__(self) -> None:
        if not isinstance(self.step_texts, tuple):
            object.__setattr__(self, "step_texts", tuple(self.step_texts))
        if not isinstance(self.label, Label):
            object.__setattr__(self, "label", Label(self.label))


@runtime_checkable
class ScoringBackend(Protocol):
    """Anything that can score a (claim, step subset, label) triple.

    Implementations must be deterministic for a fixed configuration and
    must return a log-probability, i.e. a value <= 0.
    """

    def score(self, request: ScoringRequest) -> float:
        ...


@runtime_checkable
class EmbeddingBackend(Protocol):
    """Anything that can embed step texts as unit-norm vectors."""

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        ...


@dataclass(frozen=True)
class GenerationConfig:
    """Sampling settings for one generator model."""

    model: str
    temperature: float = 0.6
    max_tokens: int = 32768
    candidates_per_model: int = 1

    def __post_init__(self) -> None:
        if not self.model:
            raise ValueError("model must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature out of range: {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.candidates_per_model < 1:
            raise ValueError("candidates_per_model must be >= 1")


class BackendError(Exception):
    """Base error for backend failures."""

    retryable = False


class TransportError(BackendError):
    """The request never produced an HTTP response (connect/timeout)."""

    retryable = True


class ServerStatusError(BackendError):
    """The server answered with a non-2xx status."""

    def __init__(self, status: int, message: str = "") -> None:
        super().__init__(f"server returned {status}" + (f": {message}" if message else ""))
        self.status = status

    @property
    def retryable(self) -> bool:  # type: ignore[override]
        return self.status >= 500


class MalformedResponseError(BackendError):
    """The server answered 2xx but the payload is unusable (e.g. no logprobs)."""

    retryable = False
