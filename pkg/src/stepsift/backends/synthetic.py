"""Deterministic synthetic backends with closed-form behavior.

The logistic oracle makes every attribution quantity analytically
predictable: the probability of "real" is sigmoid(bias + sum of the
weights of the steps present), and "fake" gets the complementary
probability, so the two label scores always exponentiate and sum to 1.
That gives tests an independent closed form for each counterfactual
score without any model in the loop.
"""

from __future__ import annotations

import hashlib
from typing import Mapping, Sequence

import numpy as np

from ..records import Label
from .base import ScoringRequest

DEFAULT_EMBEDDING_DIM = 64


def log_sigmoid(x: float) -> float:
    """Numerically stable ln(sigmoid(x)) = -ln(1 + e^(-x))."""
    return float(-np.logaddexp(0.0, -x))


class SyntheticLogisticOracle:
    """Scores label log-probabilities from per-step weights.

    ``step_weights`` maps exact step text to a real weight; scoring a
    step text that has no weight is an error rather than a silent zero,
    because a fixture with missing weights is a broken fixture.
    """

    def __init__(self, step_weights: Mapping[str, float], bias: float = 0.0) -> None:
        self.step_weights = dict(step_weights)
        self.bias = float(bias)

    def activation(self, step_texts: Sequence[str]) -> float:
        """bias + sum of the weights of the given steps."""
        total = self.bias
        for text in step_texts:
            if text not in self.step_weights:
                raise KeyError(f"no weight for step text: {text[:80]!r}")
            total += self.step_weights[text]
        return total

    def score(self, request: ScoringRequest) -> float:
        activation = self.activation(request.step_texts)
        if request.label is Label.REAL:
            return log_sigmoid(activation)
        return log_sigmoid(-activation)


class HashedBagOfWordsEmbedder:
    """Embeds text as an L2-normalized hashed bag-of-words vector.

    Tokens are lowercased whitespace tokens hashed into ``dim`` buckets
    with a stable digest, so the embedding is order-insensitive and
    identical across processes. Empty text maps to the first basis
    vector by convention.
    """

    def __init__(self, dim: int = DEFAULT_EMBEDDING_DIM) -> None:
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim

    def _bucket(self, token: str) -> int:
        digest = hashlib.md5(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big") % self.dim

    def embed_one(self, text: str) -> np.ndarray:
        vector = np.zeros(self.dim, dtype=np.float64)
        for token in text.lower().split():
            vector[self._bucket(token)] += 1.0
        norm = float(np.linalg.norm(vector))
        if norm == 0.0:
            vector[0] = 1.0
            return vector
        return vector / norm

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed_one(text) for text in texts]
