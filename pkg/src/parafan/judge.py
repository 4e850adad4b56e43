"""Blinded pairwise LLM-judge comparison of serial and parallel outputs."""

from __future__ import annotations

import random
import re
from collections import Counter
from dataclasses import dataclass, field

from .backends import Backend, CompletionRequest
from .executor import ExecConfig, with_backoff

DIMENSIONS = ("accuracy", "grammar", "detail", "overall")
SERIAL, PARALLEL, TIE = "serial", "parallel", "tie"
RESPONSE_1, RESPONSE_2 = "response_1", "response_2"

JUDGE_TEMPLATE = """\
You are an expert reviewer tasked with evaluating two responses to a user prompt. \
For each of the following questions, select Response 1, Response 2, or declare a tie \
if both are equally good. You must justify your choices.

1. Which response more accurately follows the instructions given in the prompt?
2. Which response is more grammatically correct and fluent?
3. Which response provides more detail and specificity?
4. Overall, which response do you prefer, considering all the above factors?

Provide your selections and justifications below. The order of responses has been \
randomized. You are not told which execution strategy produced which response.
"""

ANSWER_FORMAT = """\
After your justifications, end with exactly four lines in this format, one per question:
Q1: Response 1|Response 2|Tie
Q2: Response 1|Response 2|Tie
Q3: Response 1|Response 2|Tie
Q4: Response 1|Response 2|Tie"""

_ANSWER_LINE = re.compile(
    r"^\s*\**\s*Q([1-4])\s*\**\s*[:.)-]\s*\**\s*(response\s*1|response\s*2|tie)\b",
    re.IGNORECASE | re.MULTILINE,
)


class VerdictUnparseable(ValueError):
    pass


@dataclass(frozen=True)
class JudgeAssignment:
    response_1: str
    response_2: str
    serial_first: bool
    rng_seed: int

    @property
    def mapping(self) -> dict[str, str]:
        if self.serial_first:
            return {RESPONSE_1: SERIAL, RESPONSE_2: PARALLEL, TIE: TIE}
        return {RESPONSE_1: PARALLEL, RESPONSE_2: SERIAL, TIE: TIE}


def randomize_order(serial_out: str, parallel_out: str, seed: int) -> JudgeAssignment:
    serial_first = random.Random(seed).random() < 0.5
    if serial_first:
        return JudgeAssignment(serial_out, parallel_out, True, seed)
    return JudgeAssignment(parallel_out, serial_out, False, seed)


def build_judge_prompt(user_prompt: str, assignment: JudgeAssignment) -> str:
    return (
        f"{JUDGE_TEMPLATE}\n"
        f"User prompt:\n{user_prompt}\n\n"
        f"Response 1:\n{assignment.response_1}\n\n"
        f"Response 2:\n{assignment.response_2}\n\n"
        f"{ANSWER_FORMAT}\n"
    )


@dataclass(frozen=True)
class JudgeVerdict:
    choices: dict[str, str | None]
    resolved: dict[str, str | None]
    justification: str = ""

    def to_dict(self) -> dict:
        return {"choices": self.choices, "resolved": self.resolved, "justification": self.justification}


def _choice(label: str) -> str:
    label = re.sub(r"\s+", "", label.lower())
    return {"response1": RESPONSE_1, "response2": RESPONSE_2, "tie": TIE}[label]


def parse_verdict(judge_text: str, assignment: JudgeAssignment) -> JudgeVerdict:
    """Read the ``Qk: ...`` answer lines and resolve them through the mapping.

    A question with no answer line, or with conflicting lines, is recorded
    as ``None`` and left out of aggregation.
    """
    seen: dict[int, set[str]] = {}
    for m in _ANSWER_LINE.finditer(judge_text):
        seen.setdefault(int(m.group(1)), set()).add(_choice(m.group(2)))
    if not seen:
        raise VerdictUnparseable("no 'Qk:' answer lines found in judge output")

    choices: dict[str, str | None] = {}
    for k, dim in enumerate(DIMENSIONS, start=1):
        answers = seen.get(k, set())
        choices[dim] = next(iter(answers)) if len(answers) == 1 else None
    mapping = assignment.mapping
    resolved = {dim: (mapping[c] if c else None) for dim, c in choices.items()}
    justification = _ANSWER_LINE.sub("", judge_text).strip()
    return JudgeVerdict(choices, resolved, justification)


@dataclass
class QualityReport:
    counts: dict[str, dict[str, int]] = field(default_factory=dict)
    preservation_rate: float | None = None
    include_ties: bool = True
    unparseable: int = 0

    def to_dict(self) -> dict:
        return {
            "counts": self.counts,
            "preservation_rate": self.preservation_rate,
            "include_ties": self.include_ties,
            "unparseable": self.unparseable,
            "definition": "(parallel wins + ties) / judged, overall dimension"
            if self.include_ties else "parallel wins / judged, overall dimension",
        }


def quality_preservation(
    verdicts: list[JudgeVerdict], include_ties: bool = True, unparseable: int = 0
) -> QualityReport:
    """Share of judged prompts where the parallel output wins or ties.

    Computed on the overall-preference dimension; ties count as preserved
    unless ``include_ties`` is off. The rate is ``None`` when no overall
    answer could be parsed.
    """
    if not verdicts and not unparseable:
        raise ValueError("no verdicts to aggregate")
    counts = {}
    for dim in DIMENSIONS:
        c = Counter(v.resolved[dim] for v in verdicts if v.resolved.get(dim))
        counts[dim] = {"serial_wins": c[SERIAL], "parallel_wins": c[PARALLEL], "ties": c[TIE]}
    overall = counts["overall"]
    judged = sum(overall.values())
    rate = None
    if judged:
        kept = overall["parallel_wins"] + (overall["ties"] if include_ties else 0)
        rate = kept / judged
    return QualityReport(counts, rate, include_ties, unparseable)


def judge_pair(
    user_prompt: str,
    serial_out: str,
    parallel_out: str,
    backend: Backend,
    seed: int,
    cfg: ExecConfig | None = None,
) -> tuple[str, JudgeVerdict]:
    """Run one blinded comparison; returns the judge prompt and the verdict.

    Raises :class:`VerdictUnparseable` when the judge ignores the answer format.
    """
    cfg = cfg or ExecConfig()
    assignment = randomize_order(serial_out, parallel_out, seed)
    prompt = build_judge_prompt(user_prompt, assignment)
    request = CompletionRequest(user=prompt, request_tag=f"judge-{seed}")
    resp, _ = with_backoff(lambda: backend.complete(request, cfg.per_call_timeout), cfg)
    return prompt, parse_verdict(resp.text, assignment)
