from __future__ import annotations

import pytest
from hypothesis import settings

from mock_openai import MockOpenAIServer

from stepsift.records import Label, RationaleCandidate, VerificationStep

settings.register_profile("deterministic", derandomize=True, max_examples=60)
settings.load_profile("deterministic")


@pytest.fixture
def mock_server():
    server = MockOpenAIServer().start()
    yield server
    server.stop()


def build_candidate(
    claim_id: str,
    step_texts: list[str],
    label: str | Label | None = Label.REAL,
    generator: str = "gen",
    candidate_index: int = 1,
    truncated: bool = False,
) -> RationaleCandidate:
    """Assemble a candidate with exact step texts (bypassing segmentation)."""
    steps = []
    parts = []
    cursor = 0
    for index, text in enumerate(step_texts):
        steps.append(VerificationStep(index=index, text=text, span=(cursor, cursor + len(text))))
        parts.append(text)
        cursor += len(text) + 1
    raw_tail = f"Final Answer: \\boxed{{{Label(label).value}}}" if label is not None else ""
    raw_text = "\n".join(parts) + ("\n" + raw_tail if raw_tail else "")
    return RationaleCandidate(
        claim_id=claim_id,
        generator=generator,
        raw_text=raw_text,
        steps=tuple(steps),
        predicted_label=Label(label) if label is not None else None,
        token_count=len(raw_text.split()),
        truncated=truncated,
        candidate_index=candidate_index,
    )


def pytest_runtest_logreport(report):
    # One visible pass/fail line per end-to-end verification gate.
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        outcome = "PASS" if report.passed else "FAIL"
        print(f"\n[GATE] {name}: {outcome}", flush=True)
