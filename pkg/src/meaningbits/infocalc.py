"""Per-clause total, wording, and semantic information.

Total information of clause i sums token information over the clause when
the narrative is scored on its own (optionally behind an initial interview
context). Wording information scores the same clause tokens inside a prompt
where a meaning-preserving rephrasing of the narrative precedes the
original, so that each clause's meaning is already fixed by context.
Semantic information is their difference, stored rather than recomputed.

Both passes use the same backend and the same clause-token attribution so
the subtraction compares commensurate token sets.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .align import align_clauses, clause_bits
from .corpus import PLAIN_SEPARATOR, Narrative, canonical_text, scoring_prefix
from .errors import (
    ClauseCountMismatch,
    EmptyInput,
    IncompleteRecords,
    LengthMismatch,
    MissingColumn,
    ValidationError,
)
from .lm_backend import resolve_backend

VARIANTS = ("plain", "with_initial_context", "partial_rephrasing")

WORDING_PROMPT_HEADER = (
    "The following two texts, separated by ---, tell the same narrative "
    "but with different wording.\n"
)
WORDING_PROMPT_SEPARATOR = "\n---\n"


@dataclass(frozen=True)
class ClauseInfoRecord:
    """(I, I_W, I_M) for one clause, with provenance."""

    narrative_id: str
    clause_index: int
    I_bits: float
    IW_bits: float
    IM_bits: float
    variant: str = "plain"
    backend_id: str = ""
    rephrasing_id: str = ""

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")

    @property
    def key(self) -> tuple[str, int]:
        return (self.narrative_id, self.clause_index)


@dataclass(frozen=True)
class NarrativeInfoProfile:
    narrative_id: str
    records: tuple[ClauseInfoRecord, ...]
    cumulative_I: tuple[float, ...]
    cumulative_IM: tuple[float, ...]
    bits_per_char: float
    mean_IM_per_clause: float


def build_wording_prompt(rephrased_text: str, original_text: str) -> str:
    """Byte-stable wording prompt: header, rephrasing, ---, original."""
    if not rephrased_text.strip() or not original_text.strip():
        raise EmptyInput("rephrased and original texts must be non-empty")
    return WORDING_PROMPT_HEADER + rephrased_text + WORDING_PROMPT_SEPARATOR + original_text


def total_info(n: Narrative, cfg, variant: str = "plain") -> list[tuple[int, float]]:
    """Per-clause total information I_i, conditioning each clause on all
    preceding text (plus the interview context for that variant)."""
    backend = resolve_backend(cfg)
    text, spans = canonical_text(n, "plain")
    if variant == "with_initial_context":
        prefix = scoring_prefix(n)
        if not prefix:
            raise ValidationError(
                f"narrative {n.id!r} has no initial_context for variant with_initial_context"
            )
        shift = len(prefix.encode("utf-8"))
        text = prefix + text
        spans = [(s + shift, e + shift) for s, e in spans]
    elif variant != "plain":
        raise ValidationError(f"total_info does not take variant {variant!r}")
    scored = backend.score(text)
    maps = align_clauses(scored, spans, n.id)
    return [(m.clause_index, clause_bits(scored, m)) for m in maps]


def _wording_pass(
    n: Narrative,
    rephrased_clauses,
    backend,
) -> tuple[list[tuple[int, float]], str]:
    rephrased_text = PLAIN_SEPARATOR.join(rephrased_clauses)
    original_text, spans = canonical_text(n, "plain")
    prompt = build_wording_prompt(rephrased_text, original_text)
    shift = len(
        (WORDING_PROMPT_HEADER + rephrased_text + WORDING_PROMPT_SEPARATOR).encode("utf-8")
    )
    shifted = [(s + shift, e + shift) for s, e in spans]
    scored = backend.score(prompt)
    maps = align_clauses(scored, shifted, n.id)
    return [(m.clause_index, clause_bits(scored, m)) for m in maps], scored.backend_id


def wording_info(n: Narrative, reph, cfg) -> list[tuple[int, float]]:
    """Per-clause wording information I_W,i under the full rephrasing."""
    _check_rephrasing(n, reph)
    backend = resolve_backend(cfg)
    sums, _ = _wording_pass(n, reph.clauses, backend)
    return sums


def partial_wording_info(n: Narrative, reph, i: int, cfg) -> float:
    """Wording information of clause i with the rephrasing truncated at i."""
    _check_rephrasing(n, reph)
    if not 1 <= i <= n.length:
        raise ValidationError(f"clause index {i} outside 1..{n.length}")
    backend = resolve_backend(cfg)
    sums, _ = _wording_pass(n, reph.clauses[:i], backend)
    return dict(sums)[i]


def _check_rephrasing(n: Narrative, reph) -> None:
    if getattr(reph, "narrative_id", n.id) != n.id:
        raise ValidationError(
            f"rephrasing belongs to {reph.narrative_id!r}, not {n.id!r}"
        )
    if not getattr(reph, "validated", True):
        raise ValidationError(f"rephrasing {reph.rephrasing_id!r} is not validated")
    if len(reph.clauses) != n.length:
        raise ClauseCountMismatch(n.length, len(reph.clauses), n.id)


def semantic_info(
    I: list[tuple[int, float]],
    IW: list[tuple[int, float]],
    narrative_id: str,
    variant: str = "plain",
    backend_id: str = "",
    rephrasing_id: str = "",
) -> list[ClauseInfoRecord]:
    """Combine total and wording sums into records with I_M = I - I_W."""
    if len(I) != len(IW):
        raise LengthMismatch(f"{len(I)} total vs {len(IW)} wording entries")
    records = []
    for (idx_i, i_bits), (idx_w, w_bits) in zip(I, IW):
        if idx_i != idx_w:
            raise LengthMismatch(f"clause index mismatch: {idx_i} vs {idx_w}")
        records.append(
            ClauseInfoRecord(
                narrative_id=narrative_id,
                clause_index=idx_i,
                I_bits=i_bits,
                IW_bits=w_bits,
                IM_bits=i_bits - w_bits,
                variant=variant,
                backend_id=backend_id,
                rephrasing_id=rephrasing_id,
            )
        )
    return records


def semantic_records(
    n: Narrative,
    reph,
    cfg,
    variant: str = "plain",
) -> list[ClauseInfoRecord]:
    """Run both scoring passes for one narrative and combine them.

    The initial context, when the variant asks for it, is prepended only to
    the total-information pass; the wording prompt is left unchanged.
    """
    backend = resolve_backend(cfg)
    I = total_info(n, backend, variant=variant)
    IW = wording_info(n, reph, backend)
    return semantic_info(
        I,
        IW,
        narrative_id=n.id,
        variant=variant,
        backend_id=backend.backend_id,
        rephrasing_id=getattr(reph, "rephrasing_id", ""),
    )


def profile(n: Narrative, records: list[ClauseInfoRecord]) -> NarrativeInfoProfile:
    """Prefix sums plus the per-character and per-clause averages."""
    by_index = {r.clause_index: r for r in records if r.narrative_id == n.id}
    if sorted(by_index) != list(range(1, n.length + 1)):
        raise IncompleteRecords(
            f"narrative {n.id!r}: need records for clauses 1..{n.length}, "
            f"have {sorted(by_index)}"
        )
    ordered = [by_index[i] for i in range(1, n.length + 1)]
    cum_I, cum_IM = [], []
    run_i = run_im = 0.0
    for r in ordered:
        run_i += r.I_bits
        run_im += r.IM_bits
        cum_I.append(run_i)
        cum_IM.append(run_im)
    text, _ = canonical_text(n, "plain")
    total_I = cum_I[-1]
    return NarrativeInfoProfile(
        narrative_id=n.id,
        records=tuple(ordered),
        cumulative_I=tuple(cum_I),
        cumulative_IM=tuple(cum_IM),
        bits_per_char=total_I / len(text) if text else 0.0,
        mean_IM_per_clause=cum_IM[-1] / n.length,
    )


# ----------------------------------------------------------------------
# record CSV round-trip
# ----------------------------------------------------------------------

RECORD_COLUMNS = (
    "narrative_id", "clause_num", "I_bits", "IW_bits", "IM_bits",
    "variant", "backend_id", "rephrasing_id",
)


def write_records(path: str, records) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(RECORD_COLUMNS)
        for r in records:
            writer.writerow([
                r.narrative_id, r.clause_index,
                repr(r.I_bits), repr(r.IW_bits), repr(r.IM_bits),
                r.variant, r.backend_id, r.rephrasing_id,
            ])


def read_records(path: str) -> list[ClauseInfoRecord]:
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise MissingColumn("narrative_id", path)
        for col in ("narrative_id", "clause_num", "IM_bits"):
            if col not in reader.fieldnames:
                raise MissingColumn(col, path)
        records = []
        for row in reader:
            i_bits = float(row.get("I_bits") or 0.0)
            iw_bits = float(row.get("IW_bits") or 0.0)
            im_bits = float(row["IM_bits"])
            records.append(
                ClauseInfoRecord(
                    narrative_id=row["narrative_id"],
                    clause_index=int(row["clause_num"]),
                    I_bits=i_bits,
                    IW_bits=iw_bits,
                    IM_bits=im_bits,
                    variant=row.get("variant") or "plain",
                    backend_id=row.get("backend_id") or "",
                    rephrasing_id=row.get("rephrasing_id") or "",
                )
            )
    return records
