"""Predictability analysis: which clauses can be guessed from context.

Clauses are sampled stratified by semantic information, a predictor model
proposes the most plausible next clause, and a judge model decides whether
the proposal conveys essentially the same meaning as the original. Human
prediction results arrive as a CSV and are merged by clause.
"""

from __future__ import annotations

import csv
import random
import re
from dataclasses import dataclass, replace

from .corpus import Narrative
from .errors import (
    EmptyInput,
    EmptyPrefix,
    EmptyRecords,
    FormatNotFound,
    MissingColumn,
    ValidationError,
    VerdictNotFound,
)
from .lm_backend import resolve_backend
from .rephrase import number_clauses

DEFAULT_BIN_BOUNDARIES = (
    -3.0, 0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0,
    20.0, 25.0, 30.0, 40.0, 60.0, 200.0,
)

CONTINUATION_TEMPLATE = """\
In this task, you are presented with a narrative divided into numbered clauses.
The narrative is paused at a certain point, and your task is to generate the most plausible continuation for the next clause only.
A clause should contain a single piece of information, a single action, etc.

Here is the narrative:"' {part}'".

Please output the continuation in the following format:
The most plausible next clause is "'clause text'"."""

JUDGMENT_TEMPLATE = """\
Here is a narrative, divided into numbered clauses, and paused at a certain point:"' {part}'".

Here are two possible continuations for the next clause:
1. '''{original}'''
2. '''{proposed}'''

Do they convey essentially the same meaning (wording/phrasing may differ)?
Answer in a step-by-step manner.
At the end of your answer provide a True/False decision in the following format: **Same meaning: True/False**."""


@dataclass(frozen=True)
class BinSpec:
    """Half-open bins [lo, hi) over semantic information; the last bin is
    closed on the right so the top boundary is included."""

    boundaries: tuple[float, ...] = DEFAULT_BIN_BOUNDARIES
    per_bin_target: int = 40

    def __post_init__(self):
        if len(self.boundaries) < 2:
            raise ValidationError("need at least two bin boundaries")
        if any(a >= b for a, b in zip(self.boundaries, self.boundaries[1:])):
            raise ValidationError("bin boundaries must be strictly increasing")
        if self.per_bin_target < 1:
            raise ValidationError("per_bin_target must be >= 1")

    @property
    def n_bins(self) -> int:
        return len(self.boundaries) - 1

    def bin_of(self, value: float) -> int | None:
        if value < self.boundaries[0] or value > self.boundaries[-1]:
            return None
        if value == self.boundaries[-1]:
            return self.n_bins - 1
        for b in range(self.n_bins):
            if self.boundaries[b] <= value < self.boundaries[b + 1]:
                return b
        return None


@dataclass(frozen=True)
class SampleResult:
    """Stratified sample, before and after dropping first clauses.

    First clauses cannot be predicted without any context, so they are
    removed after sampling rather than excluded from the strata.
    """

    sampled: tuple[tuple[str, int], ...]
    retained: tuple[tuple[str, int], ...]
    bin_counts: tuple[int, ...]
    seed: int


@dataclass(frozen=True)
class PredictionTrial:
    narrative_id: str
    clause_index: int
    IM_bits: float
    predicted_text: str = ""
    judged_same_meaning: bool | None = None
    judge_transcript: str = ""
    verified: bool | None = None
    human_correct_count: int | None = None
    human_answer_count: int | None = None

    def __post_init__(self):
        if self.clause_index < 2:
            raise ValidationError(
                f"prediction trials need clause_index >= 2, got {self.clause_index}"
            )

    @property
    def key(self) -> tuple[str, int]:
        return (self.narrative_id, self.clause_index)

    @property
    def machine_predicted(self) -> bool:
        """Judge said yes, and the manual check (when present) agrees."""
        if not self.judged_same_meaning:
            return False
        return self.verified is not False

    @property
    def human_predicted(self) -> bool:
        return bool(self.human_correct_count and self.human_correct_count >= 1)


def stratified_sample(records, spec: BinSpec | None = None, seed: int = 0) -> SampleResult:
    """Sample up to per_bin_target clauses per bin, uniformly without
    replacement; bins smaller than the target are taken whole. Input order
    does not matter; the draw depends only on the seed."""
    if spec is None:
        spec = BinSpec()
    records = list(records)
    if not records:
        raise EmptyRecords("no clause records to sample from")
    bins: list[list[tuple[str, int]]] = [[] for _ in range(spec.n_bins)]
    for r in records:
        b = spec.bin_of(r.IM_bits)
        if b is not None:
            bins[b].append((r.narrative_id, r.clause_index))
    rng = random.Random(seed)
    sampled: list[tuple[str, int]] = []
    bin_counts = []
    for population in bins:
        population = sorted(population)
        take = min(spec.per_bin_target, len(population))
        picks = sorted(rng.sample(population, take)) if take else []
        sampled.extend(picks)
        bin_counts.append(len(picks))
    retained = tuple(item for item in sampled if item[1] > 1)
    return SampleResult(
        sampled=tuple(sampled),
        retained=retained,
        bin_counts=tuple(bin_counts),
        seed=seed,
    )


# ----------------------------------------------------------------------
# prompts and parsers
# ----------------------------------------------------------------------

def build_continuation_prompt(narrative_prefix: str) -> list[tuple[str, str]]:
    """Single user message asking for the most plausible next clause."""
    if not narrative_prefix.strip():
        raise EmptyPrefix("narrative prefix is empty")
    return [("user", CONTINUATION_TEMPLATE.format(part=narrative_prefix))]


_CONTINUATION_MARKER = re.compile(r"the most plausible next clause is", re.IGNORECASE)
_QUOTE_CHARS = "\"'“”‘’"


def parse_continuation(response: str) -> str:
    """Pull the clause text out of the mandated output format.

    Tolerates straight, curly, and tripled quote styles; uses the last
    marker occurrence so earlier restatements cannot shadow the answer.
    """
    matches = list(_CONTINUATION_MARKER.finditer(response))
    if not matches:
        raise FormatNotFound("continuation marker not found")
    remainder = response[matches[-1].end():]
    remainder = remainder.split("\n", 1)[0].strip()
    if remainder.endswith(".") and len(remainder) > 1 and remainder[-2] in _QUOTE_CHARS:
        remainder = remainder[:-1]
    clause = remainder.strip(_QUOTE_CHARS).strip()
    if not clause:
        raise FormatNotFound("continuation marker found but clause text is empty")
    return clause


def build_judgment_prompt(
    narrative_prefix: str,
    original_clause: str,
    proposed_clause: str,
) -> list[tuple[str, str]]:
    """Step-by-step same-meaning judgment with a True/False verdict line."""
    if not narrative_prefix.strip() or not original_clause.strip() or not proposed_clause.strip():
        raise EmptyInput("judgment prompt needs prefix, original, and proposed clause")
    return [(
        "user",
        JUDGMENT_TEMPLATE.format(
            part=narrative_prefix, original=original_clause, proposed=proposed_clause
        ),
    )]


_VERDICT = re.compile(r"\*\*\s*same meaning:\s*(true|false)\s*\*\*", re.IGNORECASE)


def parse_judgment(response: str) -> bool:
    """Last **Same meaning: True/False** marker wins."""
    matches = _VERDICT.findall(response)
    if not matches:
        raise VerdictNotFound("no Same meaning verdict in response")
    return matches[-1].lower() == "true"


# ----------------------------------------------------------------------
# running trials
# ----------------------------------------------------------------------

def run_prediction(
    n: Narrative,
    clause_index: int,
    cfg,
    IM_bits: float = 0.0,
    temperature: float = 0.0,
    max_tokens: int = 512,
) -> PredictionTrial:
    """Ask the predictor for the next clause after clause_index - 1."""
    backend = resolve_backend(cfg)
    prefix = number_clauses([c.text for c in n.clauses[:clause_index - 1]])
    messages = build_continuation_prompt(prefix)
    response = backend.generate(messages, temperature=temperature, max_tokens=max_tokens)
    return PredictionTrial(
        narrative_id=n.id,
        clause_index=clause_index,
        IM_bits=IM_bits,
        predicted_text=parse_continuation(response),
    )


def run_judgment(
    trial: PredictionTrial,
    n: Narrative,
    cfg,
    temperature: float = 0.0,
    max_tokens: int = 1024,
) -> PredictionTrial:
    """Judge whether the predicted clause means the same as the original."""
    backend = resolve_backend(cfg)
    prefix = number_clauses([c.text for c in n.clauses[:trial.clause_index - 1]])
    original = n.clauses[trial.clause_index - 1].text
    messages = build_judgment_prompt(prefix, original, trial.predicted_text)
    response = backend.generate(messages, temperature=temperature, max_tokens=max_tokens)
    return replace(
        trial,
        judged_same_meaning=parse_judgment(response),
        judge_transcript=response,
    )


# ----------------------------------------------------------------------
# CSV ingestion and reporting
# ----------------------------------------------------------------------

TRIAL_COLUMNS = (
    "narrative_id", "clause_num", "IM_bits", "predicted_text",
    "correct_gpt", "correct_gpt_verified",
)


def write_trials(path: str, trials) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRIAL_COLUMNS)
        for t in trials:
            writer.writerow([
                t.narrative_id, t.clause_index, repr(t.IM_bits), t.predicted_text,
                _bool_cell(t.judged_same_meaning), _bool_cell(t.verified),
            ])


def read_trials(path: str) -> list[PredictionTrial]:
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise MissingColumn("narrative_id", path)
        for col in ("narrative_id", "clause_num", "IM_bits"):
            if col not in reader.fieldnames:
                raise MissingColumn(col, path)
        trials = []
        for row in reader:
            trials.append(
                PredictionTrial(
                    narrative_id=row["narrative_id"],
                    clause_index=int(row["clause_num"]),
                    IM_bits=float(row["IM_bits"]),
                    predicted_text=row.get("predicted_text") or "",
                    judged_same_meaning=_parse_bool(row.get("correct_gpt")),
                    verified=_parse_bool(row.get("correct_gpt_verified")),
                )
            )
    return trials


def _bool_cell(value: bool | None) -> str:
    return "" if value is None else str(value)


def _parse_bool(cell: str | None) -> bool | None:
    if cell is None or cell == "":
        return None
    if cell.strip().lower() in ("true", "1", "yes"):
        return True
    if cell.strip().lower() in ("false", "0", "no"):
        return False
    raise ValidationError(f"cannot parse boolean cell {cell!r}")


@dataclass(frozen=True)
class HumanResult:
    narrative_id: str
    clause_index: int
    num_answers: int
    num_correct: int
    predictions: tuple[str, ...] = ()


def ingest_human_results(path: str) -> list[HumanResult]:
    """Read the human prediction CSV (p_* answer columns plus counts)."""
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise MissingColumn("narrative_id", path)
        for col in ("narrative_id", "clause_num", "num_answers", "num_correct"):
            if col not in reader.fieldnames:
                raise MissingColumn(col, path)
        p_cols = [c for c in reader.fieldnames if c.startswith("p_")]
        results = []
        for row in reader:
            try:
                num_answers = int(row["num_answers"])
                num_correct = int(row["num_correct"])
            except (TypeError, ValueError):
                raise ValidationError(
                    f"non-integer answer counts for {row.get('narrative_id')!r}"
                ) from None
            if num_correct > num_answers:
                raise ValidationError(
                    f"{row['narrative_id']} clause {row['clause_num']}: "
                    f"num_correct {num_correct} exceeds num_answers {num_answers}"
                )
            results.append(
                HumanResult(
                    narrative_id=row["narrative_id"],
                    clause_index=int(row["clause_num"]),
                    num_answers=num_answers,
                    num_correct=num_correct,
                    predictions=tuple(row[c] for c in p_cols if (row[c] or "").strip()),
                )
            )
    if not results:
        raise ValidationError(f"no rows in {path}")
    return results


def merge_human_results(trials, results) -> list[PredictionTrial]:
    """Attach human counts to the matching trials."""
    by_key = {(r.narrative_id, r.clause_index): r for r in results}
    merged = []
    for t in trials:
        r = by_key.get(t.key)
        if r is None:
            merged.append(t)
        else:
            merged.append(
                replace(t, human_correct_count=r.num_correct, human_answer_count=r.num_answers)
            )
    return merged


@dataclass(frozen=True)
class PredictabilityReport:
    n_trials: int
    n_judged_same: int
    n_judge_false_positives: int | None
    n_machine_predicted: int
    n_human_predicted: int
    bin_edges: tuple[float, ...]
    machine_counts: tuple[int, ...]
    human_counts: tuple[int, ...]


def predictability_report(trials, bin_width: float = 1.0) -> PredictabilityReport:
    """Histogram of semantic information over predicted clauses.

    Machine-predicted means the judge accepted the prediction and any
    manual verification flag did not overturn it; the human-predicted
    subset is counted separately per bin.
    """
    trials = list(trials)
    judged_same = [t for t in trials if t.judged_same_meaning]
    has_verified = any(t.verified is not None for t in trials)
    false_pos = (
        sum(1 for t in judged_same if t.verified is False) if has_verified else None
    )
    machine = [t for t in trials if t.machine_predicted]
    human = [t for t in machine if t.human_predicted]
    if machine:
        import math

        lo = math.floor(min(t.IM_bits for t in machine) / bin_width) * bin_width
        hi = math.ceil(max(t.IM_bits for t in machine) / bin_width) * bin_width
        if hi <= lo:
            hi = lo + bin_width
        edges = []
        e = lo
        while e < hi + bin_width / 2:
            edges.append(e)
            e += bin_width
        m_counts = [0] * (len(edges) - 1)
        h_counts = [0] * (len(edges) - 1)
        for t in machine:
            b = min(int((t.IM_bits - lo) / bin_width), len(m_counts) - 1)
            m_counts[b] += 1
            if t.human_predicted:
                h_counts[b] += 1
    else:
        edges, m_counts, h_counts = [], [], []
    return PredictabilityReport(
        n_trials=len(trials),
        n_judged_same=len(judged_same),
        n_judge_false_positives=false_pos,
        n_machine_predicted=len(machine),
        n_human_predicted=len(human),
        bin_edges=tuple(edges),
        machine_counts=tuple(m_counts),
        human_counts=tuple(h_counts),
    )
