from __future__ import annotations

import csv

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meaningbits.corpus import make_narrative
from meaningbits.errors import (
    EmptyInput,
    EmptyPrefix,
    EmptyRecords,
    FormatNotFound,
    MissingColumn,
    ValidationError,
    VerdictNotFound,
)
from meaningbits.infocalc import ClauseInfoRecord
from meaningbits.predictability import (
    BinSpec,
    PredictionTrial,
    build_continuation_prompt,
    build_judgment_prompt,
    ingest_human_results,
    merge_human_results,
    parse_continuation,
    parse_judgment,
    predictability_report,
    read_trials,
    run_judgment,
    run_prediction,
    stratified_sample,
    write_trials,
)

from conftest import golden, render_messages
from test_rephrase import ScriptedBackend


def record(nid, idx, im):
    return ClauseInfoRecord(nid, idx, im + 10.0, 10.0, im)


# ----------------------------------------------------------------------
# bins
# ----------------------------------------------------------------------

def test_default_spec_has_15_bins():
    spec = BinSpec()
    assert spec.n_bins == 15
    assert spec.boundaries[0] == -3.0
    assert spec.boundaries[-1] == 200.0


@pytest.mark.parametrize(
    "value,expected",
    [
        (-3.0, 0), (-0.0001, 0), (0.0, 1), (1.999, 1), (2.0, 2),
        (59.999, 13), (60.0, 14), (200.0, 14),  # last bin closed
        (-3.0001, None), (200.0001, None),
    ],
)
def test_bin_of_half_open_edges(value, expected):
    assert BinSpec().bin_of(value) == expected


def test_bin_spec_validation():
    with pytest.raises(ValidationError):
        BinSpec(boundaries=(1.0, 1.0))
    with pytest.raises(ValidationError):
        BinSpec(per_bin_target=0)


# ----------------------------------------------------------------------
# stratified sampling
# ----------------------------------------------------------------------

def synthetic_population():
    """1132 clauses with the documented bin populations: 14 below 0, then
    33, 39 in the first two positive bins, 17 in the top bin, and eleven
    full bins making up the rest."""
    spec = BinSpec()
    sizes = {0: 14, 1: 33, 2: 39, 14: 17}
    rest = 1132 - sum(sizes.values())  # 1029 clauses over 11 bins
    per_bin = [rest // 11] * 11
    for i in range(rest % 11):
        per_bin[i] += 1
    records = []
    counter = 0
    for b in range(spec.n_bins):
        n = sizes.get(b, per_bin.pop(0) if b not in sizes else 0)
        lo, hi = spec.boundaries[b], spec.boundaries[b + 1]
        for j in range(n):
            im = lo + (hi - lo) * (j % 7 + 0.5) / 8.0
            nid = f"story{counter % 20:02d}"
            idx = counter // 20 + 1
            records.append(record(nid, idx, im))
            counter += 1
    assert len(records) == 1132
    return records


def test_sampling_reproduces_bin_counts():
    records = synthetic_population()
    result = stratified_sample(records, BinSpec(), seed=99)
    assert len(result.sampled) == 543
    assert result.bin_counts[0] == 14
    assert result.bin_counts[1] == 33
    assert result.bin_counts[2] == 39
    assert result.bin_counts[14] == 17
    assert all(c == 40 for i, c in enumerate(result.bin_counts) if i not in (0, 1, 2, 14))


def test_sampling_without_replacement():
    records = synthetic_population()
    result = stratified_sample(records, BinSpec(), seed=1)
    assert len(set(result.sampled)) == len(result.sampled)


def test_sampling_deterministic_and_order_free():
    records = synthetic_population()
    a = stratified_sample(records, BinSpec(), seed=5)
    b = stratified_sample(list(reversed(records)), BinSpec(), seed=5)
    assert a == b
    c = stratified_sample(records, BinSpec(), seed=6)
    assert a.sampled != c.sampled


def test_small_bin_taken_whole():
    records = [record("n", i, 1.0) for i in range(1, 6)]
    result = stratified_sample(records, BinSpec(per_bin_target=40), seed=0)
    assert len(result.sampled) == 5


def test_first_clauses_removed_after_sampling():
    records = [record("n", i, 0.5) for i in range(1, 6)]
    result = stratified_sample(records, seed=0)
    assert ("n", 1) in result.sampled
    assert ("n", 1) not in result.retained
    assert len(result.retained) == len(result.sampled) - 1


def test_empty_records_rejected():
    with pytest.raises(EmptyRecords):
        stratified_sample([], seed=0)


# ----------------------------------------------------------------------
# prompts
# ----------------------------------------------------------------------

def test_continuation_prompt_golden():
    messages = build_continuation_prompt("1. Went out\n2. and got the newspaper")
    assert render_messages(messages) == golden("continuation_prompt.txt")
    assert len(messages) == 1 and messages[0][0] == "user"


def test_continuation_prompt_single_clause():
    messages = build_continuation_prompt("1. Went out")
    assert "The most plausible next clause is" in messages[0][1]


def test_continuation_prompt_empty_prefix():
    with pytest.raises(EmptyPrefix):
        build_continuation_prompt("   ")


def test_judgment_prompt_golden():
    messages = build_judgment_prompt(
        "1. Went out", "and got the newspaper", "and retrieved the newspaper."
    )
    assert render_messages(messages) == golden("judgment_prompt.txt")


def test_judgment_prompt_empty_input():
    with pytest.raises(EmptyInput):
        build_judgment_prompt("1. a", "b", " ")


# ----------------------------------------------------------------------
# parsers
# ----------------------------------------------------------------------

def test_parse_continuation_paper_style():
    resp = 'The most plausible next clause is "\'and retrieved the newspaper.\'"'
    assert parse_continuation(resp) == "and retrieved the newspaper."


@pytest.mark.parametrize(
    "resp,expected",
    [
        ("The most plausible next clause is '''She ran home.'''.", "She ran home."),
        ('The most plausible next clause is "She ran home."', "She ran home."),
        ("The most plausible next clause is “She ran home.”", "She ran home."),
        ("The most plausible next clause is 'She ran home'.", "She ran home"),
        ("preamble text\nThe most plausible next clause is '''ok then'''", "ok then"),
    ],
)
def test_parse_continuation_quote_variants(resp, expected):
    assert parse_continuation(resp) == expected


def test_parse_continuation_uses_last_marker():
    resp = (
        "The most plausible next clause is '''draft one'''\n"
        "Wait, reconsidering.\n"
        "The most plausible next clause is '''final answer'''"
    )
    assert parse_continuation(resp) == "final answer"


def test_parse_continuation_missing_marker():
    with pytest.raises(FormatNotFound):
        parse_continuation("I think the story continues nicely.")


def test_parse_continuation_empty_quotes():
    with pytest.raises(FormatNotFound):
        parse_continuation("The most plausible next clause is ''''''")


def test_parse_judgment_basic():
    assert parse_judgment("step by step... **Same meaning: True**") is True
    assert parse_judgment("reasoning **Same meaning: False**") is False


def test_parse_judgment_case_insensitive():
    assert parse_judgment("**Same meaning: TRUE**") is True
    assert parse_judgment("**same meaning: false**") is False


def test_parse_judgment_last_occurrence_wins():
    resp = "**Same meaning: True** ... on reflection **Same meaning: False**"
    assert parse_judgment(resp) is False


def test_parse_judgment_missing_verdict():
    with pytest.raises(VerdictNotFound):
        parse_judgment("...Same meaning: maybe")


@given(st.text(alphabet="abcdefgh ", min_size=1).filter(str.strip))
@settings(max_examples=50, deadline=None)
def test_parse_stability_round_trip(clause):
    # any response that ends with the mandated markers parses back
    resp = f"Reasoning here.\nThe most plausible next clause is '''{clause.strip()}'''."
    assert parse_continuation(resp) == clause.strip()
    verdict = f"Step by step.\n**Same meaning: True**"
    assert parse_judgment(verdict) is True


# ----------------------------------------------------------------------
# trial execution
# ----------------------------------------------------------------------

def narrative():
    return make_narrative("ci", [
        "Yeah there is an instance.",
        "Went out",
        "and got the newspaper",
        "came back",
    ])


def test_run_prediction_builds_prefix():
    backend = ScriptedBackend(["The most plausible next clause is '''and retrieved the newspaper.'''"])
    trial = run_prediction(narrative(), 3, backend, IM_bits=1.8)
    assert trial.predicted_text == "and retrieved the newspaper."
    prompt = backend.calls[0][0][0][1]
    assert "1. Yeah there is an instance.\n2. Went out" in prompt
    assert "and got the newspaper" not in prompt  # the target clause stays hidden


def test_run_judgment_attaches_verdict():
    backend = ScriptedBackend(["1. compare\n2. decide\n**Same meaning: True**"])
    trial = PredictionTrial("ci", 3, 1.8, predicted_text="and retrieved the newspaper.")
    judged = run_judgment(trial, narrative(), backend)
    assert judged.judged_same_meaning is True
    assert "**Same meaning: True**" in judged.judge_transcript
    prompt = backend.calls[0][0][0][1]
    assert "1. '''and got the newspaper'''" in prompt
    assert "2. '''and retrieved the newspaper.'''" in prompt


def test_trial_requires_second_clause_or_later():
    with pytest.raises(ValidationError):
        PredictionTrial("n", 1, 0.0)


# ----------------------------------------------------------------------
# human results
# ----------------------------------------------------------------------

def human_csv(tmp_path):
    """31 clauses: 8 predicted by nobody, the rest by 1..6 participants
    with the distribution 1, 8, 6, 5, 2, 1."""
    distribution = [0] * 8 + [1] + [2] * 8 + [3] * 6 + [4] * 5 + [5] * 2 + [6]
    path = tmp_path / "human.csv"
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["narrative_id", "clause_num", "p_1", "p_2", "num_answers", "num_correct"])
        for i, correct in enumerate(distribution):
            writer.writerow([f"s{i:02d}", i + 2, "guess one", "guess two",
                             7 if i < 7 else 6, correct])
    return str(path)


def test_ingest_human_results_distribution(tmp_path):
    results = ingest_human_results(human_csv(tmp_path))
    assert len(results) == 31
    predicted = [r for r in results if r.num_correct >= 1]
    assert len(predicted) == 23
    assert len(results) - len(predicted) == 8
    from collections import Counter

    counts = Counter(r.num_correct for r in predicted)
    assert [counts[k] for k in range(1, 7)] == [1, 8, 6, 5, 2, 1]


def test_ingest_rejects_bad_counts(tmp_path):
    path = tmp_path / "bad.csv"
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["narrative_id", "clause_num", "num_answers", "num_correct"])
        writer.writerow(["s1", 2, 3, 9])
    with pytest.raises(ValidationError):
        ingest_human_results(str(path))


def test_ingest_missing_columns(tmp_path):
    path = tmp_path / "cols.csv"
    path.write_text("narrative_id,clause_num\ns1,2\n")
    with pytest.raises(MissingColumn):
        ingest_human_results(str(path))


def test_ingest_empty_file(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("narrative_id,clause_num,num_answers,num_correct\n")
    with pytest.raises(ValidationError):
        ingest_human_results(str(path))


def test_merge_human_results(tmp_path):
    results = ingest_human_results(human_csv(tmp_path))
    trials = [PredictionTrial("s08", 10, 2.0, judged_same_meaning=True)]
    merged = merge_human_results(trials, results)
    assert merged[0].human_correct_count == 1
    assert merged[0].human_answer_count == 6
    assert merged[0].human_predicted


# ----------------------------------------------------------------------
# report and round-trip
# ----------------------------------------------------------------------

def make_trials():
    trials = []
    # 45 judge positives, 14 overturned by manual verification -> 31 kept
    for i in range(45):
        trials.append(PredictionTrial(
            f"t{i:02d}", 2, IM_bits=float(i % 12),
            predicted_text="p", judged_same_meaning=True,
            verified=(i >= 14),
            human_correct_count=(1 if i % 2 else 0) if i >= 14 else None,
        ))
    for i in range(10):
        trials.append(PredictionTrial(
            f"f{i:02d}", 3, IM_bits=5.0, predicted_text="p", judged_same_meaning=False
        ))
    return trials


def test_predictability_report_counts():
    report = predictability_report(make_trials())
    assert report.n_trials == 55
    assert report.n_judged_same == 45
    assert report.n_judge_false_positives == 14
    assert report.n_machine_predicted == 31
    assert report.n_human_predicted == sum(1 for i in range(14, 45) if i % 2)
    assert sum(report.machine_counts) == 31
    assert sum(report.human_counts) == report.n_human_predicted


def test_predictability_report_empty():
    report = predictability_report([])
    assert report.n_trials == 0
    assert report.bin_edges == ()


def test_predictability_report_single_value():
    trials = [PredictionTrial("a", 2, 3.25, judged_same_meaning=True)]
    report = predictability_report(trials)
    assert sum(report.machine_counts) == 1
    assert len(report.bin_edges) >= 2


def test_trials_round_trip(tmp_path):
    trials = make_trials()
    path = tmp_path / "gpt_predictions.csv"
    write_trials(str(path), trials)
    again = read_trials(str(path))
    before, after = predictability_report(trials), predictability_report(again)
    # the persisted schema carries the machine-side columns; summaries match
    assert after.n_trials == before.n_trials
    assert after.n_judged_same == before.n_judged_same
    assert after.n_judge_false_positives == before.n_judge_false_positives
    assert after.n_machine_predicted == before.n_machine_predicted
    assert after.machine_counts == before.machine_counts
    assert after.bin_edges == before.bin_edges


def test_trials_round_trip_preserves_fields(tmp_path):
    trials = [PredictionTrial("a", 2, 1.5, predicted_text="went home",
                              judged_same_meaning=True, verified=False)]
    path = tmp_path / "t.csv"
    write_trials(str(path), trials)
    again = read_trials(str(path))
    assert again[0].predicted_text == "went home"
    assert again[0].judged_same_meaning is True
    assert again[0].verified is False
