"""Prompt templates used for generation, verdict scoring, judging, and export."""

from __future__ import annotations

GENERATION_TEMPLATE = """\
You are a careful misinformation analyst. Assess whether the following \
social-media claim is real or fake.

Claim:
{claim}

Work through the claim as a numbered list of verification steps (1., 2., ...), \
each step checking one aspect: source reliability, factual consistency, \
plausibility, corroboration, and so on. After the numbered steps, finish with \
a single line containing your final verdict as \\boxed{{real}} or \\boxed{{fake}}."""

SCORING_TEMPLATE = """\
You will be shown a claim and a verification analysis. Based only on these, \
answer with exactly one word, real or fake.

Claim:
{claim}

Verification analysis:
{steps}

Answer:"""

JUDGE_TEMPLATE = """\
You are grading one misinformation-detection rationale on three axes, each an \
integer from 1 to 5:
- M (misleadingness): 1 = not misleading at all, 5 = severely misleading, \
judged against the gold label.
- I (informativeness): 1 = adds nothing beyond the claim, 5 = thorough and \
specific.
- R (readability): 1 = hard to follow, 5 = clear and well structured.

Gold label: {label}

Claim:
{claim}

Rationale:
{rationale}

Reply with exactly one line of the form: M:<1-5> I:<1-5> R:<1-5>"""

SFT_PROMPT_TEMPLATE = """\
Assess whether the following social-media message is real or fake.

Message:
{claim}

Analyze the message step by step, then end your answer with \\boxed{{real}} or \
\\boxed{{fake}}."""

LABEL_ONLY_RESPONSE_TEMPLATE = "This message is {label}."


def render_generation_prompt(claim_text: str) -> str:
    return GENERATION_TEMPLATE.format(claim=claim_text)


def render_scoring_prompt(claim_text: str, step_texts: tuple[str, ...] | list[str]) -> str:
    steps = "\n\n".join(step_texts) if step_texts else "(no analysis provided)"
    return SCORING_TEMPLATE.format(claim=claim_text, steps=steps)


def render_judge_prompt(claim_text: str, label: str, rationale: str) -> str:
    return JUDGE_TEMPLATE.format(claim=claim_text, label=label, rationale=rationale)


def render_sft_prompt(claim_text: str) -> str:
    return SFT_PROMPT_TEMPLATE.format(claim=claim_text)
