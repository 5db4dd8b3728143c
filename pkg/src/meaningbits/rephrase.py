"""Meaning-preserving rephrasing of narratives, chunked for long inputs.

Long narratives are split into near-equal parts of at most L_c clauses.
Middle and final parts carry a generated summary of the story so far. Each
part is rephrased clause-by-clause with strict "k. " numbering; the stitched
result must have exactly as many clauses as the original, otherwise the
whole narrative is retried once with L_c = 25 before giving up.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass

from .corpus import Narrative, make_narrative
from .errors import (
    ClauseCountMismatch,
    EmptyPart,
    UnparseableNumbering,
    ValidationError,
)
from .lm_backend import resolve_backend

log = logging.getLogger(__name__)

DEFAULT_CHUNK_CLAUSES = 50
RETRY_CHUNK_CLAUSES = 25

REPHRASE_SYSTEM_MESSAGE = "You are helping in scientific analysis, so please be precise."

REPHRASE_USER_TEMPLATE = """\
You will be given a part of a narrative, segmented into linguistic clauses and numbered from 1 to {n}.
Your task is to generate a paraphrase of this part of the narrative, using different wording (lexical diversity) and phrasing (syntactic diversity), but keeping the meaning essentially the same.
You should keep the numbering of the clauses in the paraphrase.
When the part is in the middle of the narrative, you will be given a summary of the narrative up to that point.
Summarized Narrative so far: '''{summary}'''
Part to paraphrase: '''{part}'''"""

SUMMARY_LINE = "Summarized Narrative so far: '''{summary}'''\n"

SUMMARY_PROMPT_TEMPLATE = (
    "Summarize the following part of a narrative in 3-5 sentences, "
    "preserving the key events and participants: '''{part}'''"
)


@dataclass(frozen=True)
class ChunkPlan:
    """Partition of clause positions 1..L into near-equal contiguous parts."""

    L: int
    L_c: int
    parts: tuple[tuple[int, int], ...]  # 1-based inclusive (start, end)


@dataclass
class RephrasingBundle:
    narrative_id: str
    rephrasing_id: str
    clauses: tuple[str, ...]
    chunk_plan: tuple[tuple[int, int, bool], ...] = ()
    generator_model: str = ""
    validated: bool = False


def plan_chunks(L: int, L_c: int = DEFAULT_CHUNK_CLAUSES) -> ChunkPlan:
    """ceil(L / L_c) parts whose sizes differ by at most one, larger first."""
    if L < 1 or L_c < 1:
        raise ValidationError(f"need L >= 1 and L_c >= 1, got L={L}, L_c={L_c}")
    k = math.ceil(L / L_c)
    base, rem = divmod(L, k)
    parts = []
    start = 1
    for i in range(k):
        size = base + (1 if i < rem else 0)
        parts.append((start, start + size - 1))
        start += size
    return ChunkPlan(L=L, L_c=L_c, parts=tuple(parts))


def number_clauses(texts, start: int = 1) -> str:
    """Render clauses as numbered lines: "1. first clause" etc."""
    return "\n".join(f"{k}. {t}" for k, t in enumerate(texts, start=start))


def build_rephrase_prompt(
    part: str,
    n_clauses: int,
    summary: str | None = None,
) -> list[tuple[str, str]]:
    """(system, user) messages for rephrasing one numbered narrative part.

    Without a summary the summary line is removed; the rest of the template
    is unchanged.
    """
    if not part.strip():
        raise EmptyPart("narrative part is empty")
    user = REPHRASE_USER_TEMPLATE.format(n=n_clauses, summary=summary or "", part=part)
    if summary is None:
        user = user.replace(SUMMARY_LINE.format(summary=""), "", 1)
    return [("system", REPHRASE_SYSTEM_MESSAGE), ("user", user)]


def build_summary_prompt(preceding_text: str) -> list[tuple[str, str]]:
    if not preceding_text.strip():
        raise EmptyPart("nothing to summarize")
    return [("user", SUMMARY_PROMPT_TEMPLATE.format(part=preceding_text))]


_NUMBERED_LINE = re.compile(r"^\s*(\d+)\.\s+(.*\S)\s*$")


def parse_numbered_clauses(response: str, chunk: int = 0) -> list[str]:
    """Extract "k. text" lines, requiring k contiguous from 1.

    Lines that do not start a new number are treated as continuations of
    the current clause. Content before "1." is rejected.
    """
    clauses: list[str] = []
    for line in response.splitlines():
        if not line.strip():
            continue
        match = _NUMBERED_LINE.match(line)
        if match:
            num = int(match.group(1))
            if num != len(clauses) + 1:
                raise UnparseableNumbering(chunk, line.strip())
            clauses.append(match.group(2))
        elif clauses:
            clauses[-1] += " " + line.strip()
        else:
            raise UnparseableNumbering(chunk, line.strip())
    if not clauses:
        raise UnparseableNumbering(chunk, "<empty response>")
    return clauses


def generate_rephrasing(
    n: Narrative,
    cfg,
    L_c: int = DEFAULT_CHUNK_CLAUSES,
    temperature: float = 0.0,
    rephrasing_id: str = "r1",
    max_tokens: int = 4096,
) -> RephrasingBundle:
    """Generate and validate a clause-aligned rephrasing of a narrative."""
    backend = resolve_backend(cfg)
    found = -1
    for attempt, chunk_size in enumerate([L_c, RETRY_CHUNK_CLAUSES]):
        if attempt:
            log.info(
                "narrative %s: rephrasing had %d clauses, expected %d; retrying with L_c=%d",
                n.id, found, n.length, chunk_size,
            )
        clauses, chunk_meta = _rephrase_once(n, backend, chunk_size, temperature, max_tokens)
        found = len(clauses)
        if found == n.length:
            return RephrasingBundle(
                narrative_id=n.id,
                rephrasing_id=rephrasing_id,
                clauses=tuple(clauses),
                chunk_plan=tuple(chunk_meta),
                generator_model=getattr(backend, "model_name", None) or backend.backend_id,
                validated=True,
            )
    raise ClauseCountMismatch(n.length, found, n.id)


def _rephrase_once(n: Narrative, backend, chunk_size, temperature, max_tokens):
    plan = plan_chunks(n.length, chunk_size)
    clauses: list[str] = []
    chunk_meta: list[tuple[int, int, bool]] = []
    texts = n.clause_texts()
    for chunk_idx, (start, end) in enumerate(plan.parts):
        part_texts = texts[start - 1:end]
        part = number_clauses(part_texts)  # each part renumbered from 1
        summary = None
        if start > 1:
            summary_messages = build_summary_prompt(" ".join(texts[:start - 1]))
            summary = backend.generate(
                summary_messages, temperature=temperature, max_tokens=max_tokens
            ).strip()
        messages = build_rephrase_prompt(part, len(part_texts), summary)
        response = backend.generate(messages, temperature=temperature, max_tokens=max_tokens)
        parsed = parse_numbered_clauses(response, chunk=chunk_idx)
        clauses.extend(parsed)
        chunk_meta.append((start, end, summary is not None))
    return clauses, chunk_meta


def second_rephrasing(r1: RephrasingBundle, cfg, **kwargs) -> RephrasingBundle:
    """Rephrase again, treating the first rephrasing as the source text."""
    if not r1.validated:
        raise ValidationError(f"rephrasing {r1.rephrasing_id!r} is not validated")
    source = make_narrative(r1.narrative_id, list(r1.clauses))
    kwargs.setdefault("rephrasing_id", "r2")
    return generate_rephrasing(source, cfg, **kwargs)


# ----------------------------------------------------------------------
# CSV persistence (same schema as the corpus input)
# ----------------------------------------------------------------------

def save_rephrasings(bundles, path: str) -> None:
    import csv

    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["narrative_id", "clause_num", "text"])
        for b in bundles:
            for k, text in enumerate(b.clauses, start=1):
                writer.writerow([b.narrative_id, k, text])


def load_rephrasings(path: str, rephrasing_id: str) -> dict[str, RephrasingBundle]:
    """Read persisted rephrasings; loaded bundles count as validated."""
    from .corpus import load_corpus

    manifest = load_corpus(path)
    out = {}
    for n in manifest:
        out[n.id] = RephrasingBundle(
            narrative_id=n.id,
            rephrasing_id=rephrasing_id,
            clauses=tuple(n.clause_texts()),
            validated=True,
        )
    return out
