import itertools
import random

import pytest

from parafan.backends import SimulatedBackend, SimulatorConfig
from parafan.clock import VirtualClock
from parafan.executor import ExecConfig
from parafan.judge import (
    DIMENSIONS,
    JudgeVerdict,
    VerdictUnparseable,
    build_judge_prompt,
    judge_pair,
    parse_verdict,
    quality_preservation,
    randomize_order,
)

STEMS = ("more accurately follows", "more grammatically correct",
         "more detail and specificity", "do you prefer")


def assignment(serial_first):
    seed = next(s for s in itertools.count() if randomize_order("S", "P", s).serial_first is serial_first)
    return randomize_order("S", "P", seed)


def test_seeded_assignment_replays():
    assert randomize_order("a", "b", 17) == randomize_order("a", "b", 17)


def test_assignment_places_texts():
    a = assignment(True)
    assert (a.response_1, a.response_2) == ("S", "P")
    b = assignment(False)
    assert (b.response_1, b.response_2) == ("P", "S")


def test_identical_texts_still_assigned():
    a = randomize_order("same", "same", 3)
    assert a.response_1 == a.response_2 == "same"


def test_prompt_structure():
    a = randomize_order("serial answer text", "parallel answer text", 5)
    prompt = build_judge_prompt("Describe a room", a)
    assert "The order of responses has been randomized." in prompt
    assert "You are an expert reviewer tasked with evaluating two responses" in prompt
    positions = [prompt.index(s) for s in STEMS]
    assert positions == sorted(positions)
    assert positions[-1] < prompt.index("Response 1:\n") < prompt.index("Response 2:\n")
    assert "Q4: Response 1|Response 2|Tie" in prompt


def test_prompt_blind_template():
    prompt = build_judge_prompt("Describe a room", randomize_order("x", "y", 0)).lower()
    assert "serial" not in prompt and "parallel" not in prompt


def test_parse_composes_mapping():
    a = assignment(False)  # serial is response_2
    v = parse_verdict("reasons...\nQ1: Response 2\nQ2: Response 1\nQ3: Tie\nQ4: Tie", a)
    assert v.resolved == {"accuracy": "serial", "grammar": "parallel", "detail": "tie", "overall": "tie"}
    assert v.choices["accuracy"] == "response_2"
    assert v.justification == "reasons..."


def test_parse_uniform_lowercase():
    v = parse_verdict("Q1: response 1\nQ2: response 1\nQ3: response 1\nQ4: response 1", assignment(True))
    assert set(v.resolved.values()) == {"serial"}


def test_parse_tolerates_markdown():
    v = parse_verdict("**Q4:** Response 2", assignment(True))
    assert v.resolved["overall"] == "parallel"
    assert v.resolved["accuracy"] is None


def test_parse_conflicting_lines_dropped():
    v = parse_verdict("Q1: Response 1\nQ1: Response 2\nQ4: Tie", assignment(True))
    assert v.resolved["accuracy"] is None and v.resolved["overall"] == "tie"


def test_parse_prose_unparseable():
    with pytest.raises(VerdictUnparseable):
        parse_verdict("I think the first one is better overall.", assignment(True))


@pytest.mark.parametrize("raw", ["Response 1", "Response 2", "Tie"])
def test_resolution_invariant_under_flip(raw):
    flipped = {"Response 1": "Response 2", "Response 2": "Response 1", "Tie": "Tie"}[raw]
    a = parse_verdict(f"Q4: {raw}", assignment(True)).resolved["overall"]
    b = parse_verdict(f"Q4: {flipped}", assignment(False)).resolved["overall"]
    assert a == b


def verdict(overall):
    resolved = {d: overall for d in DIMENSIONS}
    return JudgeVerdict(resolved, resolved)


def test_preservation_92_of_100():
    vs = [verdict("parallel")] * 50 + [verdict("tie")] * 42 + [verdict("serial")] * 8
    report = quality_preservation(vs)
    assert report.preservation_rate == pytest.approx(0.92)
    assert report.counts["overall"] == {"serial_wins": 8, "parallel_wins": 50, "ties": 42}
    random.Random(1).shuffle(vs)
    assert quality_preservation(vs).preservation_rate == pytest.approx(0.92)


def test_preservation_extremes():
    assert quality_preservation([verdict("tie")] * 4).preservation_rate == 1.0
    assert quality_preservation([verdict("serial")] * 4).preservation_rate == 0.0


def test_preservation_without_ties():
    vs = [verdict("tie"), verdict("parallel")]
    assert quality_preservation(vs, include_ties=False).preservation_rate == 0.5


def test_preservation_empty():
    with pytest.raises(ValueError):
        quality_preservation([])


def test_judge_pair_with_scripted_backend():
    clock = VirtualClock()
    backend = SimulatedBackend(SimulatorConfig(responses=("ok\nQ1: Tie\nQ2: Tie\nQ3: Tie\nQ4: Response 1",)), clock)
    prompt, v = judge_pair("Describe a room", "s-out", "p-out", backend, seed=11, cfg=ExecConfig(clock=clock))
    first = "serial" if randomize_order("s-out", "p-out", 11).serial_first else "parallel"
    assert v.resolved["overall"] == first
    assert "s-out" in prompt and "p-out" in prompt
