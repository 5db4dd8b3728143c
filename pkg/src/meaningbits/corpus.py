"""Clause-segmented narrative corpus: loading, validation, span bookkeeping.

A narrative is an ordered list of clauses (one independent clause plus its
dependents per segmentation unit). All span arithmetic is in UTF-8 byte
offsets because token scoring backends report byte offsets.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field, replace

from .errors import (
    DuplicateNarrativeId,
    EmptyClauseText,
    EmptyContext,
    MissingColumn,
    NonContiguousClauseNumbers,
    ValidationError,
)

CSV_COLUMNS = ("narrative_id", "clause_num", "text")

# Separator between clauses in the plain canonical text. A single space keeps
# the transcript flowing naturally and avoids injecting newline tokens whose
# probabilities would pollute per-clause sums.
PLAIN_SEPARATOR = " "


@dataclass(frozen=True)
class Clause:
    """One segmentation unit with its byte span in the plain canonical text."""

    index: int
    text: str
    char_span: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.index < 1:
            raise ValidationError(f"clause index must be >= 1, got {self.index}")
        if not self.text.strip():
            raise ValidationError(f"clause {self.index} text is empty")


@dataclass(frozen=True)
class Narrative:
    """An ordered clause sequence plus optional initial scoring context."""

    id: str
    clauses: tuple[Clause, ...]
    title: str = ""
    initial_context: str | None = None

    def __post_init__(self):
        if not self.clauses:
            raise ValidationError(f"narrative {self.id!r} has no clauses")
        for k, clause in enumerate(self.clauses, start=1):
            if clause.index != k:
                raise ValidationError(
                    f"narrative {self.id!r}: clause indices must be 1..L, "
                    f"found {clause.index} at position {k}"
                )
        if self.initial_context is not None and not self.initial_context.strip():
            raise ValidationError(
                f"narrative {self.id!r}: initial_context must be absent, not empty"
            )

    @property
    def length(self) -> int:
        return len(self.clauses)

    def clause_texts(self) -> list[str]:
        return [c.text for c in self.clauses]


@dataclass(frozen=True)
class CorpusManifest:
    narratives: tuple[Narrative, ...]
    source_path: str = ""
    checksum: str = ""
    _by_id: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        seen = {}
        for n in self.narratives:
            if n.id in seen:
                raise DuplicateNarrativeId(n.id)
            seen[n.id] = n
        object.__setattr__(self, "_by_id", seen)

    def get(self, narrative_id: str) -> Narrative:
        try:
            return self._by_id[narrative_id]
        except KeyError:
            raise ValidationError(f"unknown narrative id {narrative_id!r}") from None

    def __iter__(self):
        return iter(self.narratives)

    def __len__(self):
        return len(self.narratives)


def make_narrative(
    narrative_id: str,
    texts: list[str] | tuple[str, ...],
    title: str = "",
    initial_context: str | None = None,
) -> Narrative:
    """Build a Narrative from raw clause texts, computing plain-style spans."""
    clauses = []
    pos = 0
    for k, text in enumerate(texts, start=1):
        text = text.strip()
        if not text:
            raise EmptyClauseText(narrative_id, k)
        nbytes = len(text.encode("utf-8"))
        clauses.append(Clause(index=k, text=text, char_span=(pos, pos + nbytes)))
        pos += nbytes + len(PLAIN_SEPARATOR.encode("utf-8"))
    return Narrative(
        id=narrative_id,
        clauses=tuple(clauses),
        title=title,
        initial_context=initial_context,
    )


def load_corpus(path: str) -> CorpusManifest:
    """Load a narrative corpus from CSV (columns narrative_id, clause_num, text).

    Rows of one narrative must be consecutive with clause_num contiguous
    from 1. A narrative id reappearing after its block ended is a duplicate.
    """
    with open(path, "rb") as f:
        raw = f.read()
    checksum = hashlib.sha256(raw).hexdigest()

    reader = csv.DictReader(raw.decode("utf-8").splitlines())
    if reader.fieldnames is None:
        raise MissingColumn("narrative_id", path)
    for col in CSV_COLUMNS:
        if col not in reader.fieldnames:
            raise MissingColumn(col, path)

    groups: dict[str, list[str]] = {}
    current: str | None = None
    for row in reader:
        nid = row["narrative_id"]
        if nid != current:
            if nid in groups:
                raise DuplicateNarrativeId(nid)
            groups[nid] = []
            current = nid
        texts = groups[nid]
        expected = len(texts) + 1
        try:
            found = int(row["clause_num"])
        except (TypeError, ValueError):
            raise NonContiguousClauseNumbers(nid, expected, -1) from None
        if found != expected:
            raise NonContiguousClauseNumbers(nid, expected, found)
        if not (row["text"] or "").strip():
            raise EmptyClauseText(nid, found)
        texts.append(row["text"])

    if not groups:
        raise ValidationError(f"no narrative rows in {path}")

    narratives = tuple(make_narrative(nid, texts) for nid, texts in groups.items())
    return CorpusManifest(narratives=narratives, source_path=str(path), checksum=checksum)


def save_corpus(narratives, path: str) -> None:
    """Write narratives back out in the input CSV schema."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for n in narratives:
            for c in n.clauses:
                writer.writerow([n.id, c.index, c.text])


def canonical_text(n: Narrative, style: str = "plain") -> tuple[str, list[tuple[int, int]]]:
    """Deterministic concatenation of a narrative's clauses.

    plain joins clause texts with a single space; numbered prefixes "k. " to
    clause k and joins with newlines. Returned byte spans cover each clause's
    own text, excluding separators and numbering, so slicing the UTF-8 bytes
    by a span recovers the clause text exactly.
    """
    if style == "plain":
        text = PLAIN_SEPARATOR.join(c.text for c in n.clauses)
        return text, [c.char_span for c in n.clauses]
    if style == "numbered":
        parts = []
        spans = []
        pos = 0
        for c in n.clauses:
            prefix = f"{c.index}. "
            nbytes = len(c.text.encode("utf-8"))
            pos += len(prefix.encode("utf-8"))
            spans.append((pos, pos + nbytes))
            pos += nbytes + 1  # newline separator
            parts.append(prefix + c.text)
        return "\n".join(parts), spans
    raise ValidationError(f"unknown canonical style {style!r}")


def format_initial_context(question: str, preamble: str | None = None) -> str:
    """Render an interviewer question (and optional interviewee preamble)."""
    if not question.strip():
        raise EmptyContext("guiding question is empty")
    if preamble is not None and not preamble.strip():
        raise EmptyContext("preamble given but empty")
    ctx = f"Interviewer: {question}\nInterviewee:"
    if preamble is not None:
        ctx += f" {preamble}"
    return ctx


def attach_initial_context(n: Narrative, question: str, preamble: str | None = None) -> Narrative:
    """Return a copy of the narrative carrying the interview context.

    The context only changes the conditioning prefix used when scoring; the
    clause spans stay relative to the narrative body.
    """
    return replace(n, initial_context=format_initial_context(question, preamble))


def scoring_prefix(n: Narrative) -> str:
    """Prefix (context plus separator) prepended when scoring with context."""
    if n.initial_context is None:
        return ""
    return n.initial_context + PLAIN_SEPARATOR


# Guiding questions used for the interview-context variant, keyed by a
# normalized narrative name. Stein and Norman told their stories unprompted
# and deliberately have no entry.
DEFAULT_GUIDING_QUESTIONS: dict[str, tuple[str, str | None]] = {
    "schissel": ("Were you ever in a situation where you thought you were in serious danger of being killed?", None),
    "shambaugh": ("Were you ever in a situation where you thought you were in serious danger of being killed?", None),
    "dalmaggio": ("Were you ever in a situation where you thought you were in serious danger of being killed?", None),
    "furlow": ("Were you ever in a situation where you thought you were in serious danger of being killed?", None),
    "triplett": ("Were you ever in a situation where you thought you were in serious danger of being killed?", None),
    "tarentino": ("Were you ever in a situation where you thought you were in serious danger of being killed?", None),
    "boyscout": ("Were you ever in a situation where you thought you were in serious danger of being killed?", None),
    "williams": ("Were you ever in a situation where you thought someone was in serious danger of being killed?", None),
    "hawkins": ("Were you ever in a situation where you were suddenly faced with the fact of death?", None),
    "mccaffrey": ("Were you ever in a situation where you were suddenly faced with the fact of death?", None),
    "adamo": ("Were you ever in a situation where you were suddenly faced with the fact of death?", None),
    "laidlaw": ("Were you ever in a situation where you were suddenly faced with the fact of death?", "No, but it happened to my mother."),
    "ci": ("Is there anyone you know who gets a feeling that something is going to happen, and then it does happen?", None),
    "dalphonso": ("Is there anyone you know who gets a feeling that something is going to happen, and then it does happen?", None),
    "guyton": ("Is there anyone you know who gets a feeling that something is going to happen, and then it does happen?", None),
    "hester": ("Is there anyone you know who gets a feeling that something is going to happen, and then it does happen?", None),
    "knott": ("Is your neighborhood friendly?", "Well no neighborhood's friendly, unless you assert yourself."),
    "costa": ("You said your other daughter died. How long ago did she die?", None),
}


def normalize_narrative_key(narrative_id: str) -> str:
    return "".join(ch for ch in narrative_id.lower() if ch.isalpha())


def attach_default_context(n: Narrative) -> Narrative:
    """Attach the built-in guiding question matching the narrative id.

    Returns the narrative unchanged when no question is on record (stories
    told unprompted keep initial_context absent).
    """
    entry = DEFAULT_GUIDING_QUESTIONS.get(normalize_narrative_key(n.id))
    if entry is None:
        return n
    question, preamble = entry
    return attach_initial_context(n, question, preamble)
