from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meaningbits.corpus import make_narrative
from meaningbits.errors import (
    ClauseCountMismatch,
    EmptyPart,
    UnparseableNumbering,
    ValidationError,
)
from meaningbits.rephrase import (
    RephrasingBundle,
    build_rephrase_prompt,
    build_summary_prompt,
    generate_rephrasing,
    load_rephrasings,
    number_clauses,
    parse_numbered_clauses,
    plan_chunks,
    save_rephrasings,
    second_rephrasing,
)

from conftest import golden, render_messages


class ScriptedBackend:
    """Replays canned chat responses and records every call."""

    backend_id = "scripted"
    model_name = "scripted-model"

    def __init__(self, script):
        self.script = list(script)
        self.calls = []

    def generate(self, messages, temperature=0.0, max_tokens=4096):
        self.calls.append((messages, temperature))
        item = self.script.pop(0)
        return item(messages) if callable(item) else item

    def score(self, text):  # pragma: no cover - not used here
        raise NotImplementedError

    def score_continuation(self, context, continuation):  # pragma: no cover
        raise NotImplementedError


# ----------------------------------------------------------------------
# chunk planning
# ----------------------------------------------------------------------

def test_short_narrative_single_chunk():
    plan = plan_chunks(19, 50)
    assert plan.parts == ((1, 19),)


def test_long_narrative_three_chunks():
    plan = plan_chunks(130, 50)
    sizes = [end - start + 1 for start, end in plan.parts]
    assert len(plan.parts) == 3
    assert sorted(sizes, reverse=True) == [44, 43, 43]
    assert plan.parts[0][0] == 1 and plan.parts[-1][1] == 130


def test_exact_boundary_single_chunk():
    assert plan_chunks(50, 50).parts == ((1, 50),)


@given(st.integers(1, 10000), st.integers(1, 10000))
@settings(max_examples=200, deadline=None)
def test_chunks_partition_property(L, L_c):
    plan = plan_chunks(L, L_c)
    covered = []
    for start, end in plan.parts:
        covered.extend(range(start, end + 1))
    assert covered == list(range(1, L + 1))
    sizes = [end - start + 1 for start, end in plan.parts]
    assert max(sizes) - min(sizes) <= 1
    assert all(size <= L_c for size in sizes)


def test_plan_chunks_validates():
    with pytest.raises(ValidationError):
        plan_chunks(0, 50)
    with pytest.raises(ValidationError):
        plan_chunks(10, 0)


# ----------------------------------------------------------------------
# prompt building
# ----------------------------------------------------------------------

PART = "1. And the neighbors were friendly.\n2. But that was our welcoming."


def test_rephrase_prompt_with_summary_golden():
    messages = build_rephrase_prompt(
        PART, 2, summary="Earlier, the narrator moved to a new house."
    )
    assert render_messages(messages) == golden("rephrase_prompt_with_summary.txt")


def test_rephrase_prompt_without_summary_golden():
    messages = build_rephrase_prompt(PART, 2)
    assert render_messages(messages) == golden("rephrase_prompt_no_summary.txt")
    assert "Summarized Narrative so far" not in messages[1][1]


def test_rephrase_prompt_deterministic():
    a = build_rephrase_prompt(PART, 2, summary="s")
    b = build_rephrase_prompt(PART, 2, summary="s")
    assert a == b


def test_rephrase_prompt_empty_part():
    with pytest.raises(EmptyPart):
        build_rephrase_prompt("  ", 1)
    with pytest.raises(EmptyPart):
        build_summary_prompt("")


# ----------------------------------------------------------------------
# response parsing
# ----------------------------------------------------------------------

def test_parse_simple_numbering():
    assert parse_numbered_clauses("1. one\n2. two\n3. three") == ["one", "two", "three"]


def test_parse_multiline_clause():
    text = "1. a clause that\nwraps onto a second line\n2. next"
    assert parse_numbered_clauses(text) == ["a clause that wraps onto a second line", "next"]


def test_parse_missing_first_number():
    with pytest.raises(UnparseableNumbering):
        parse_numbered_clauses("Sure! Here is the paraphrase without numbers")


def test_parse_gap_in_numbering():
    with pytest.raises(UnparseableNumbering):
        parse_numbered_clauses("1. one\n3. three")


def test_parse_empty_response():
    with pytest.raises(UnparseableNumbering):
        parse_numbered_clauses("   \n  ")


def test_number_clauses_layout():
    assert number_clauses(["a", "b"]) == "1. a\n2. b"


# ----------------------------------------------------------------------
# generation orchestration
# ----------------------------------------------------------------------

def test_boyscout_single_chunk_rephrasing(boyscout, boyscout_rephrasing):
    canned = number_clauses(boyscout_rephrasing.clauses)
    backend = ScriptedBackend([canned])
    bundle = generate_rephrasing(boyscout, backend)
    assert bundle.validated
    assert len(bundle.clauses) == 19
    assert bundle.clauses[11] == "They abandoned me."
    assert bundle.chunk_plan == ((1, 19, False),)
    assert bundle.generator_model == "scripted-model"
    # one call, no summary requested, part renumbered from 1
    assert len(backend.calls) == 1
    messages = backend.calls[0][0]
    assert messages[0][0] == "system"
    user = messages[1][1]
    assert "numbered from 1 to 19" in user
    assert "Summarized Narrative so far" not in user
    assert "1. Yeah I was in the boy scouts at the time." in user


def test_multi_chunk_requests_summaries():
    n = make_narrative("n1", [f"clause number {k}" for k in range(1, 7)])
    part1 = number_clauses([f"re {k}" for k in range(1, 4)])
    part2 = number_clauses([f"re {k}" for k in range(4, 7)])
    backend = ScriptedBackend([part1, "a short summary", part2])
    bundle = generate_rephrasing(n, backend, L_c=3)
    assert bundle.validated
    assert bundle.clauses == tuple(f"re {k}" for k in range(1, 7))
    assert bundle.chunk_plan == ((1, 3, False), (4, 6, True))
    # call 2 is the summary, call 3 the second part carrying it
    summary_user = backend.calls[1][0][0][1]
    assert summary_user.startswith("Summarize the following part of a narrative")
    assert "clause number 1" in summary_user
    part2_user = backend.calls[2][0][1][1]
    assert "Summarized Narrative so far: '''a short summary'''" in part2_user
    assert "numbered from 1 to 3" in part2_user
    assert "1. clause number 4" in part2_user


def test_count_mismatch_retries_with_smaller_chunks():
    n = make_narrative("n1", ["one here", "two here", "three here"])
    wrong = number_clauses(["a", "b", "c", "d"])  # 4 clauses for a 3-clause source
    right = number_clauses(["a", "b", "c"])
    backend = ScriptedBackend([wrong, right])
    bundle = generate_rephrasing(n, backend, L_c=50)
    assert bundle.validated
    assert bundle.clauses == ("a", "b", "c")
    assert len(backend.calls) == 2  # first attempt, then the L_c=25 retry


def test_count_mismatch_fails_after_retry():
    n = make_narrative("n1", ["one here", "two here", "three here"])
    wrong = number_clauses(["a", "b"])
    backend = ScriptedBackend([wrong, wrong])
    with pytest.raises(ClauseCountMismatch) as exc:
        generate_rephrasing(n, backend, L_c=50)
    assert exc.value.expected == 3
    assert exc.value.found == 2


def test_unparseable_numbering_propagates():
    n = make_narrative("n1", ["one here", "two here"])
    backend = ScriptedBackend(["no numbers at all"])
    with pytest.raises(UnparseableNumbering):
        generate_rephrasing(n, backend)


def test_zero_temperature_by_default(boyscout, boyscout_rephrasing):
    backend = ScriptedBackend([number_clauses(boyscout_rephrasing.clauses)])
    generate_rephrasing(boyscout, backend)
    assert backend.calls[0][1] == 0.0


def test_second_rephrasing_uses_first_as_source():
    first = RephrasingBundle("n1", "r1", ("alpha beta", "gamma delta"), validated=True)
    canned = number_clauses(["x y", "z w"])
    backend = ScriptedBackend([canned])
    r2 = second_rephrasing(first, backend)
    assert r2.rephrasing_id == "r2"
    assert r2.clauses == ("x y", "z w")
    # the prompt rephrases r1's text, not any original
    assert "1. alpha beta" in backend.calls[0][0][1][1]


def test_second_rephrasing_requires_validated():
    unvalidated = RephrasingBundle("n1", "r1", ("a",), validated=False)
    with pytest.raises(ValidationError):
        second_rephrasing(unvalidated, ScriptedBackend([]))


def test_save_and_load_rephrasings(tmp_path, boyscout_rephrasing):
    path = tmp_path / "rephrased1.csv"
    save_rephrasings([boyscout_rephrasing], str(path))
    loaded = load_rephrasings(str(path), "r1")
    assert loaded["boyscout"].clauses == boyscout_rephrasing.clauses
    assert loaded["boyscout"].validated
