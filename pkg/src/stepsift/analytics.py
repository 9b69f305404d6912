"""Diagnostics over pipeline artifacts: detection metrics, distribution
histograms, token consumption, and rubric-based judge scoring.

The delimited contract for histograms is CSV (bin edges or categories
plus counts); JSON summaries carry the scalar aggregates. Histograms
always conserve mass: out-of-range values are clipped into the boundary
bins instead of being dropped.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import prompts
from .records import Label, RationaleCandidate
from .self_attribution import AttributionProfile


class AnalyticsError(Exception):
    pass


# ---------------------------------------------------------------------------
# Detection metrics


@dataclass(frozen=True)
class ConfusionCounts:
    """Per-class confusion tallies; unparsed predictions tracked separately."""

    tp_fake: int = 0
    fp_fake: int = 0
    fn_fake: int = 0
    tp_real: int = 0
    fp_real: int = 0
    fn_real: int = 0
    unparsed: int = 0

    @property
    def total(self) -> int:
        # Each wrong prediction appears once as fp of the predicted class.
        return self.tp_fake + self.tp_real + self.fp_fake + self.fp_real + self.unparsed


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class DetectionMetrics:
    """Accuracy plus per-class precision/recall/F1 over (gold, predicted) pairs."""

    counts: ConfusionCounts
    accuracy: float
    precision_fake: float
    recall_fake: float
    f1_fake: float
    precision_real: float
    recall_real: float
    f1_real: float

    def to_record(self) -> dict[str, Any]:
        return {
            "total": self.counts.total,
            "unparsed": self.counts.unparsed,
            "accuracy": self.accuracy,
            "precision_fake": self.precision_fake,
            "recall_fake": self.recall_fake,
            "f1_fake": self.f1_fake,
            "precision_real": self.precision_real,
            "recall_real": self.recall_real,
            "f1_real": self.f1_real,
        }


def detection_metrics(pairs: Iterable[tuple[Label, Label | None]]) -> DetectionMetrics:
    """Compute detection quality from (gold, predicted-or-None) pairs.

    An unparsable prediction counts as incorrect: it misses its gold
    class (a false negative there) without crediting the other class.
    """
    tallies = {"tp_fake": 0, "fp_fake": 0, "fn_fake": 0, "tp_real": 0, "fp_real": 0, "fn_real": 0}
    unparsed = 0
    seen = 0
    for gold, predicted in pairs:
        seen += 1
        gold = Label(gold)
        if predicted is None:
            unparsed += 1
            tallies[f"fn_{gold.value}"] += 1
            continue
        predicted = Label(predicted)
        if predicted == gold:
            tallies[f"tp_{gold.value}"] += 1
        else:
            tallies[f"fp_{predicted.value}"] += 1
            tallies[f"fn_{gold.value}"] += 1
    if seen == 0:
        raise AnalyticsError("no (gold, predicted) pairs to score")
    counts = ConfusionCounts(unparsed=unparsed, **tallies)

    def rates(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        return precision, recall, _f1(precision, recall)

    p_fake, r_fake, f1_fake = rates(counts.tp_fake, counts.fp_fake, counts.fn_fake)
    p_real, r_real, f1_real = rates(counts.tp_real, counts.fp_real, counts.fn_real)
    return DetectionMetrics(
        counts=counts,
        accuracy=(counts.tp_fake + counts.tp_real) / counts.total,
        precision_fake=p_fake,
        recall_fake=r_fake,
        f1_fake=f1_fake,
        precision_real=p_real,
        recall_real=r_real,
        f1_real=f1_real,
    )


# ---------------------------------------------------------------------------
# Histograms


@dataclass(frozen=True)
class Histogram:
    """Numeric histogram; bins are [edge_i, edge_i+1), last bin inclusive."""

    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]
    total: int

    @classmethod
    def from_values(
        cls,
        values: Sequence[float],
        bins: int | Sequence[float] = 10,
        value_range: tuple[float, float] | None = None,
    ) -> "Histogram":
        data = np.asarray(list(values), dtype=np.float64)
        if isinstance(bins, int):
            if value_range is None:
                if data.size == 0:
                    value_range = (0.0, 1.0)
                else:
                    low, high = float(data.min()), float(data.max())
                    if low == high:
                        low, high = low - 0.5, high + 0.5
                    value_range = (low, high)
            edges = np.linspace(value_range[0], value_range[1], bins + 1)
        else:
            edges = np.asarray(list(bins), dtype=np.float64)
            if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
                raise AnalyticsError("bin edges must be strictly increasing, length >= 2")
        if data.size:
            data = np.clip(data, edges[0], edges[-1])  # conserve mass at the boundaries
        counts, _ = np.histogram(data, bins=edges)
        return cls(
            bin_edges=tuple(float(e) for e in edges),
            counts=tuple(int(c) for c in counts),
            total=int(data.size),
        )


@dataclass(frozen=True)
class CategoryHistogram:
    """Histogram over discrete categories (step counts, minimal prefixes)."""

    categories: tuple[str, ...]
    counts: tuple[int, ...]
    total: int


@dataclass(frozen=True)
class DeltaDistribution:
    """Step-delta histograms split by prediction correctness."""

    correct: Histogram
    incorrect: Histogram
    negative_fraction_correct: float
    negative_fraction_incorrect: float


def _negative_fraction(values: Sequence[float]) -> float:
    if not values:
        return 0.0
    return sum(1 for v in values if v < 0.0) / len(values)


def delta_distribution(
    profiles: Sequence[AttributionProfile],
    correct_flags: Sequence[bool],
    bins: int | Sequence[float] = 40,
) -> DeltaDistribution:
    """Pool step deltas and split them by the candidate's correctness.

    Both splits share one set of bin edges (derived from the pooled
    data when ``bins`` is a count) so the histograms are comparable.
    The negative fraction counts deltas strictly below zero.
    """
    if len(profiles) != len(correct_flags):
        raise AnalyticsError("profiles and correct_flags must align")
    correct_values: list[float] = []
    incorrect_values: list[float] = []
    for profile, is_correct in zip(profiles, correct_flags):
        target = correct_values if is_correct else incorrect_values
        target.extend(profile.deltas)
    if isinstance(bins, int):
        pooled = correct_values + incorrect_values
        if not pooled:
            raise AnalyticsError("no deltas to histogram")
        low, high = min(pooled), max(pooled)
        if low == high:
            low, high = low - 0.5, high + 0.5
        edges: Sequence[float] = list(np.linspace(low, high, bins + 1))
    else:
        edges = list(bins)
    return DeltaDistribution(
        correct=Histogram.from_values(correct_values, bins=edges),
        incorrect=Histogram.from_values(incorrect_values, bins=edges),
        negative_fraction_correct=_negative_fraction(correct_values),
        negative_fraction_incorrect=_negative_fraction(incorrect_values),
    )


def kappa_histogram(profiles: Sequence[AttributionProfile]) -> CategoryHistogram:
    """Distribution of the minimal sufficient prefix size.

    Candidates with no sufficient prefix land in an "L (insufficient)"
    category keyed by their own step count.
    """
    tallies: dict[tuple[int, int], int] = {}
    for profile in profiles:
        if profile.kappa_insufficient:
            key = (1, len(profile.deltas))
        else:
            assert profile.kappa_min is not None
            key = (0, profile.kappa_min)
        tallies[key] = tallies.get(key, 0) + 1
    categories = []
    counts = []
    for insufficient, value in sorted(tallies):
        categories.append(f"{value} (insufficient)" if insufficient else str(value))
        counts.append(tallies[(insufficient, value)])
    return CategoryHistogram(tuple(categories), tuple(counts), sum(counts))


def step_count_histogram(candidates: Sequence[RationaleCandidate]) -> CategoryHistogram:
    tallies: dict[int, int] = {}
    for candidate in candidates:
        length = len(candidate.steps)
        tallies[length] = tallies.get(length, 0) + 1
    categories = tuple(str(length) for length in sorted(tallies))
    counts = tuple(tallies[length] for length in sorted(tallies))
    return CategoryHistogram(categories, counts, sum(counts))


def unnecessary_ratio_histogram(profiles: Sequence[AttributionProfile]) -> Histogram:
    """Ratios fall in [0, 1]; ten uniform bins, last bin right-inclusive."""
    return Histogram.from_values(
        [profile.unnecessary_ratio for profile in profiles], bins=10, value_range=(0.0, 1.0)
    )


def token_consumption(candidates: Sequence[RationaleCandidate]) -> dict[str, float]:
    """Mean token count per generator, keyed by generator name."""
    totals: dict[str, list[int]] = {}
    for candidate in candidates:
        totals.setdefault(candidate.generator, []).append(candidate.token_count)
    return {
        generator: sum(counts) / len(counts)
        for generator, counts in sorted(totals.items())
    }


# ---------------------------------------------------------------------------
# Judge scoring

JUDGE_AXES = ("M", "I", "R")
_JUDGE_LABELED_RE = {
    axis: re.compile(rf"\b{axis}\s*[:=]\s*([0-9]+)", re.IGNORECASE) for axis in JUDGE_AXES
}
_INT_RE = re.compile(r"-?\d+")


def parse_judge_reply(text: str) -> dict[str, int] | None:
    """Extract integer M/I/R scores in 1..5 from a judge reply.

    Prefers explicitly labeled values ("M:3 I:4 R:5"); falls back to
    the first three integers in the reply. Anything outside 1..5, or
    fewer than three values, is unparsable (None).
    """
    values: dict[str, int] = {}
    for axis in JUDGE_AXES:
        match = _JUDGE_LABELED_RE[axis].search(text)
        if match:
            values[axis] = int(match.group(1))
    if len(values) < len(JUDGE_AXES):
        integers = [int(m.group()) for m in _INT_RE.finditer(text)]
        if len(integers) < len(JUDGE_AXES):
            return None
        values = dict(zip(JUDGE_AXES, integers[: len(JUDGE_AXES)]))
    if all(1 <= values[axis] <= 5 for axis in JUDGE_AXES):
        return {axis: values[axis] for axis in JUDGE_AXES}
    return None


@dataclass(frozen=True)
class JudgeReport:
    """Per-record judge scores (None where judging failed) plus the means."""

    per_record: tuple[dict[str, int] | None, ...]
    means: dict[str, float]
    missing: int

    def to_record(self) -> dict[str, Any]:
        return {
            "scored": len(self.per_record) - self.missing,
            "missing": self.missing,
            "means": self.means,
        }


def judge_scores(
    items: Sequence[tuple[str, Label, str]],
    client: Any,
    model: str,
) -> JudgeReport:
    """Grade (claim_text, gold_label, rationale) triples with a judge model.

    Each unparsable reply is retried once with the same prompt, then
    recorded as missing. Corpus means exclude missing records; a corpus
    where every record is missing is an error.
    """
    per_record: list[dict[str, int] | None] = []
    for claim_text, label, rationale in items:
        prompt = prompts.render_judge_prompt(claim_text, Label(label).value, rationale)
        payload = {
            "model": model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0.0,
            "max_tokens": 64,
        }
        scores: dict[str, int] | None = None
        for _attempt in range(2):
            try:
                response = client.post("/v1/chat/completions", payload)
                reply = response["choices"][0]["message"]["content"]
            except Exception:  # noqa: BLE001 - a failed judge call is a missing score
                continue
            scores = parse_judge_reply(str(reply))
            if scores is not None:
                break
        per_record.append(scores)
    scored = [s for s in per_record if s is not None]
    if not scored:
        raise AnalyticsError("judge produced no usable scores")
    means = {
        axis: sum(s[axis] for s in scored) / len(scored) for axis in JUDGE_AXES
    }
    return JudgeReport(
        per_record=tuple(per_record),
        means=means,
        missing=len(per_record) - len(scored),
    )


# ---------------------------------------------------------------------------
# Delimited output


def write_histogram_csv(histogram: Histogram | CategoryHistogram, path: str | Path) -> None:
    """Write a histogram as CSV rows of edges (or category) and count."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        if isinstance(histogram, Histogram):
            writer.writerow(["bin_start", "bin_end", "count"])
            for i, count in enumerate(histogram.counts):
                writer.writerow(
                    [repr(histogram.bin_edges[i]), repr(histogram.bin_edges[i + 1]), count]
                )
        else:
            writer.writerow(["category", "count"])
            for category, count in zip(histogram.categories, histogram.counts):
                writer.writerow([category, count])


def write_summary_json(summary: Mapping[str, Any], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(summary, handle, ensure_ascii=False, indent=2, sort_keys=True)
        handle.write("\n")
